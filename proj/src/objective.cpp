#include "vce/objective.hpp"

#include <cmath>

namespace vce {

namespace detail {
void require_mask(const Tensor& a, const Tensor& s) {
    if (!a.same_shape(s)) throw ValidationError("mask shape does not match batch shape");
    for (float v : s.v)
        if (v != 0.0f && v != 1.0f) throw ValidationError("mask values must be exactly 0 or 1");
}
}  // namespace detail

double adv_generator_loss(const Tensor& scores_on_fake) {
    if (scores_on_fake.numel() == 0) throw ValidationError("adv_generator_loss: empty score map");
    double acc = 0.0;
    for (float v : scores_on_fake.v) {
        const double d = static_cast<double>(v) - 1.0;
        acc += d * d;
    }
    return acc / static_cast<double>(scores_on_fake.numel());
}

double adv_discriminator_loss(const Tensor& scores_real, const Tensor& scores_fake) {
    if (scores_real.numel() == 0 || scores_fake.numel() == 0)
        throw ValidationError("adv_discriminator_loss: empty score map");
    double real_acc = 0.0;
    for (float v : scores_real.v) {
        const double d = static_cast<double>(v) - 1.0;
        real_acc += d * d;
    }
    double fake_acc = 0.0;
    for (float v : scores_fake.v) {
        const double d = static_cast<double>(v);
        fake_acc += d * d;
    }
    return 0.5 * (real_acc / static_cast<double>(scores_real.numel()) +
                  fake_acc / static_cast<double>(scores_fake.numel()));
}

double masked_l1(const Tensor& a, const Tensor& b, const Tensor& s, MaskMode mode) {
    if (!a.same_shape(b)) throw ValidationError("masked_l1: shape mismatch");
    if (a.numel() == 0) throw ValidationError("masked_l1: empty input");
    double acc = 0.0;
    if (mode == MaskMode::global) {
        for (size_t i = 0; i < a.v.size(); ++i)
            acc += std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]));
    } else {
        detail::require_mask(a, s);
        for (size_t i = 0; i < a.v.size(); ++i) {
            if (s.v[i] != 0.0f)
                acc += std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]));
        }
    }
    return acc / static_cast<double>(a.numel());
}

namespace {

// d(mean (v - target)^2)/dv
Tensor mse_grad(const Tensor& scores, double target) {
    Tensor g = Tensor::zeros_like(scores);
    const double scale = 2.0 / static_cast<double>(scores.numel());
    for (size_t i = 0; i < g.v.size(); ++i)
        g.v[i] = static_cast<float>(scale * (static_cast<double>(scores.v[i]) - target));
    return g;
}

// d(weight * mean (1 + gamma*s) * |a - b|)/da, with sign(0) = 0.
Tensor weighted_l1_grad(const Tensor& a, const Tensor& b, const Tensor& s, double weight,
                        double gamma) {
    Tensor g = Tensor::zeros_like(a);
    const double scale = weight / static_cast<double>(a.numel());
    for (size_t i = 0; i < g.v.size(); ++i) {
        const float d = a.v[i] - b.v[i];
        if (d == 0.0f) continue;
        const double coeff = scale * (1.0 + gamma * static_cast<double>(s.v[i]));
        g.v[i] = static_cast<float>(d > 0.0f ? coeff : -coeff);
    }
    return g;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace

LossBreakdown backprop_generator_objective(ModelBundle& b, const Tensor& x, const Tensor& y,
                                           const Tensor& s, const LossWeights& w,
                                           Tensor* fake_y_out, Tensor* fake_x_out) {
    w.validate();
    detail::require_mask(x, s);
    b.G.set_train(true);
    b.F.set_train(true);
    b.Dx.set_train(true);
    b.Dy.set_train(true);

    nn::Tape tG1, tF1, tF2, tG2, tG3, tF3, tDy, tDx;
    Tensor fake_y = b.G.forward(x, &tG1);
    Tensor rec_x = b.F.forward(fake_y, &tF1);
    Tensor fake_x = b.F.forward(y, &tF2);
    Tensor rec_y = b.G.forward(fake_x, &tG2);
    Tensor idt_y = b.G.forward(y, &tG3);
    Tensor idt_x = b.F.forward(x, &tF3);
    Tensor scores_fake_y = b.Dy.forward(fake_y, &tDy);
    Tensor scores_fake_x = b.Dx.forward(fake_x, &tDx);

    LossBreakdown out;
    out.adv_G = adv_generator_loss(scores_fake_y);
    out.adv_F = adv_generator_loss(scores_fake_x);
    out.cyc = masked_l1(rec_x, x, s, MaskMode::global) + masked_l1(rec_y, y, s, MaskMode::global);
    out.cyc_local =
        masked_l1(rec_x, x, s, MaskMode::local) + masked_l1(rec_y, y, s, MaskMode::local);
    out.id = masked_l1(idt_y, y, s, MaskMode::global) + masked_l1(idt_x, x, s, MaskMode::global);
    out.id_local =
        masked_l1(idt_y, y, s, MaskMode::local) + masked_l1(idt_x, x, s, MaskMode::local);
    out.total_G = out.adv_G + out.adv_F + w.lambda1 * (out.cyc + w.gamma * out.cyc_local) +
                  w.lambda2 * (out.id + w.gamma * out.id_local);
    if (!std::isfinite(out.total_G))
        throw NumericError("backprop_generator_objective: non-finite generator objective");

    // Forward direction: adversarial and cycle gradients both reach G(x).
    Tensor grad_fake_y = b.Dy.backward(mse_grad(scores_fake_y, 1.0), tDy);
    add_inplace(grad_fake_y, b.F.backward(weighted_l1_grad(rec_x, x, s, w.lambda1, w.gamma), tF1));
    b.G.backward(grad_fake_y, tG1);

    // Backward direction.
    Tensor grad_fake_x = b.Dx.backward(mse_grad(scores_fake_x, 1.0), tDx);
    add_inplace(grad_fake_x, b.G.backward(weighted_l1_grad(rec_y, y, s, w.lambda1, w.gamma), tG2));
    b.F.backward(grad_fake_x, tF2);

    // Identity terms.
    b.G.backward(weighted_l1_grad(idt_y, y, s, w.lambda2, w.gamma), tG3);
    b.F.backward(weighted_l1_grad(idt_x, x, s, w.lambda2, w.gamma), tF3);

    if (fake_y_out) *fake_y_out = std::move(fake_y);
    if (fake_x_out) *fake_x_out = std::move(fake_x);
    return out;
}

double backprop_discriminator_loss(nn::Network& disc, const Tensor& real, const Tensor& fake) {
    disc.set_train(true);
    nn::Tape t_real, t_fake;
    Tensor scores_real = disc.forward(real, &t_real);
    Tensor scores_fake = disc.forward(fake, &t_fake);
    const double loss = adv_discriminator_loss(scores_real, scores_fake);
    if (!std::isfinite(loss))
        throw NumericError("backprop_discriminator_loss: non-finite discriminator loss");

    // 0.5 * [mean (r-1)^2 + mean f^2]
    Tensor grad_real = Tensor::zeros_like(scores_real);
    const double sr = 1.0 / static_cast<double>(scores_real.numel());
    for (size_t i = 0; i < grad_real.v.size(); ++i)
        grad_real.v[i] = static_cast<float>(sr * (static_cast<double>(scores_real.v[i]) - 1.0));
    Tensor grad_fake = Tensor::zeros_like(scores_fake);
    const double sf = 1.0 / static_cast<double>(scores_fake.numel());
    for (size_t i = 0; i < grad_fake.v.size(); ++i)
        grad_fake.v[i] = static_cast<float>(sf * static_cast<double>(scores_fake.v[i]));

    disc.backward(grad_real, t_real);
    disc.backward(grad_fake, t_fake);
    return loss;
}

double gradient_check(const std::function<double(std::span<const float>)>& loss_fn,
                      std::vector<float> params, std::span<const double> analytic_grad,
                      std::span<const size_t> coords, double eps) {
    if (params.size() != analytic_grad.size())
        throw ValidationError("gradient_check: gradient size mismatch");
    if (eps <= 0) throw ValidationError("gradient_check: eps must be positive");
    double max_rel = 0.0;
    for (size_t idx : coords) {
        if (idx >= params.size()) throw ValidationError("gradient_check: coordinate out of range");
        const float saved = params[idx];
        params[idx] = static_cast<float>(saved + eps);
        const double lp = loss_fn(params);
        params[idx] = static_cast<float>(saved - eps);
        const double lm = loss_fn(params);
        params[idx] = saved;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw ValidationError("gradient_check: non-finite loss evaluation");
        const double fd = (lp - lm) / (2.0 * eps);
        const double an = analytic_grad[idx];
        if (!std::isfinite(an)) throw ValidationError("gradient_check: non-finite gradient");
        const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace vce
