#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vce/model.hpp"
#include "vce/tensor.hpp"

namespace vce {

struct LossWeights {
    double lambda1 = 10.0;
    double lambda2 = 5.0;
    double gamma = 0.0;

    void validate() const {
        if (lambda1 < 0 || lambda2 < 0 || gamma < 0)
            throw ConfigError("loss weights must be nonnegative");
    }
};

// Every component of one objective evaluation. The generator total composes
// exactly as adv_G + adv_F + lambda1*(cyc + gamma*cyc_local)
//                        + lambda2*(id + gamma*id_local).
struct LossBreakdown {
    double adv_G = 0, adv_F = 0, adv_Dx = 0, adv_Dy = 0;
    double cyc = 0, cyc_local = 0, id = 0, id_local = 0;
    double total_G = 0, total_D = 0;
};

// Least-squares generator adversarial term: mean squared deviation of the
// fake scores from the real label 1.
double adv_generator_loss(const Tensor& scores_on_fake);

// Least-squares discriminator term, halved to balance real/fake gradients.
double adv_discriminator_loss(const Tensor& scores_real, const Tensor& scores_fake);

enum class MaskMode { global, local };

// Mean over ALL pixels of |a - b| (global) or s * |a - b| (local); the shared
// normalizer makes an all-ones mask reproduce the global value exactly.
double masked_l1(const Tensor& a, const Tensor& b, const Tensor& s, MaskMode mode);

namespace detail {
void require_mask(const Tensor& a, const Tensor& s);
}

// Reconstruction terms over both translation directions; the same mask
// weights both (the domains are spatially aligned).
template <class Bundle>
std::pair<double, double> cycle_losses(Bundle& b, const Tensor& x, const Tensor& y,
                                       const Tensor& s) {
    Tensor rec_x = b.apply_F(b.apply_G(x));
    Tensor rec_y = b.apply_G(b.apply_F(y));
    const double cyc = masked_l1(rec_x, x, s, MaskMode::global) +
                       masked_l1(rec_y, y, s, MaskMode::global);
    const double local = masked_l1(rec_x, x, s, MaskMode::local) +
                         masked_l1(rec_y, y, s, MaskMode::local);
    return {cyc, local};
}

template <class Bundle>
std::pair<double, double> identity_losses(Bundle& b, const Tensor& x, const Tensor& y,
                                          const Tensor& s) {
    Tensor idt_y = b.apply_G(y);
    Tensor idt_x = b.apply_F(x);
    const double id = masked_l1(idt_y, y, s, MaskMode::global) +
                      masked_l1(idt_x, x, s, MaskMode::global);
    const double local = masked_l1(idt_y, y, s, MaskMode::local) +
                         masked_l1(idt_x, x, s, MaskMode::local);
    return {id, local};
}

template <class Bundle>
LossBreakdown total_objective(Bundle& b, const Tensor& x, const Tensor& y, const Tensor& s,
                              const LossWeights& w) {
    w.validate();
    detail::require_mask(x, s);
    LossBreakdown out;

    Tensor fake_y = b.apply_G(x);
    Tensor fake_x = b.apply_F(y);
    out.adv_G = adv_generator_loss(b.apply_Dy(fake_y));
    out.adv_F = adv_generator_loss(b.apply_Dx(fake_x));
    out.adv_Dy = adv_discriminator_loss(b.apply_Dy(y), b.apply_Dy(fake_y));
    out.adv_Dx = adv_discriminator_loss(b.apply_Dx(x), b.apply_Dx(fake_x));

    Tensor rec_x = b.apply_F(fake_y);
    Tensor rec_y = b.apply_G(fake_x);
    out.cyc = masked_l1(rec_x, x, s, MaskMode::global) + masked_l1(rec_y, y, s, MaskMode::global);
    out.cyc_local =
        masked_l1(rec_x, x, s, MaskMode::local) + masked_l1(rec_y, y, s, MaskMode::local);

    Tensor idt_y = b.apply_G(y);
    Tensor idt_x = b.apply_F(x);
    out.id = masked_l1(idt_y, y, s, MaskMode::global) + masked_l1(idt_x, x, s, MaskMode::global);
    out.id_local =
        masked_l1(idt_y, y, s, MaskMode::local) + masked_l1(idt_x, x, s, MaskMode::local);

    out.total_G = out.adv_G + out.adv_F + w.lambda1 * (out.cyc + w.gamma * out.cyc_local) +
                  w.lambda2 * (out.id + w.gamma * out.id_local);
    out.total_D = out.adv_Dx + out.adv_Dy;

    auto check = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw NumericError(std::string("total_objective: non-finite component ") + name);
    };
    check(out.adv_G, "adv_G");
    check(out.adv_F, "adv_F");
    check(out.adv_Dx, "adv_Dx");
    check(out.adv_Dy, "adv_Dy");
    check(out.cyc, "cyc");
    check(out.cyc_local, "cyc_local");
    check(out.id, "id");
    check(out.id_local, "id_local");
    return out;
}

// Generator-objective backward pass: train-mode forwards with tapes, then
// gradient accumulation into all four networks (the adversarial terms reach
// the discriminators' parameters through the score maps). Callers zero grads
// beforehand; returns the breakdown with the discriminator fields unset.
// When provided, fake_y_out/fake_x_out receive the generated batches for the
// replay buffers.
LossBreakdown backprop_generator_objective(ModelBundle& b, const Tensor& x, const Tensor& y,
                                           const Tensor& s, const LossWeights& w,
                                           Tensor* fake_y_out = nullptr,
                                           Tensor* fake_x_out = nullptr);

// Discriminator loss with gradients accumulated into disc only.
double backprop_discriminator_loss(nn::Network& disc, const Tensor& real, const Tensor& fake);

// Central finite differences against caller-supplied analytic gradients over
// the listed coordinates. The relative error is guarded: absolute below
// magnitude 1, relative above. Non-finite values raise.
double gradient_check(const std::function<double(std::span<const float>)>& loss_fn,
                      std::vector<float> params, std::span<const double> analytic_grad,
                      std::span<const size_t> coords, double eps = 1e-3);

}  // namespace vce
