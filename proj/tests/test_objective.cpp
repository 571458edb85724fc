#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vce/objective.hpp"

using namespace vce;
using testutil::random_tensor;
using testutil::random_mask_tensor;

namespace {

Tensor constant_tensor(int n, int c, int h, int w, float value) {
    return Tensor(n, c, h, w, value);
}

// Fixed-output networks for closed-form objective checks.
struct StubBundle {
    float g_out, f_out, dy_score, dx_score;
    int size;

    Tensor apply_G(const Tensor& t) const { return Tensor(t.n, t.c, t.h, t.w, g_out); }
    Tensor apply_F(const Tensor& t) const { return Tensor(t.n, t.c, t.h, t.w, f_out); }
    Tensor apply_Dy(const Tensor& t) const { return Tensor(t.n, 1, 3, 3, dy_score); }
    Tensor apply_Dx(const Tensor& t) const { return Tensor(t.n, 1, 3, 3, dx_score); }
};

// Generators that return their input unchanged.
struct IdentityBundle {
    Tensor apply_G(const Tensor& t) const { return t; }
    Tensor apply_F(const Tensor& t) const { return t; }
    Tensor apply_Dy(const Tensor& t) const { return Tensor(t.n, 1, 2, 2, 1.0f); }
    Tensor apply_Dx(const Tensor& t) const { return Tensor(t.n, 1, 2, 2, 1.0f); }
};

}  // namespace

TEST_CASE("adversarial generator loss") {
    CHECK(adv_generator_loss(constant_tensor(1, 1, 3, 3, 1.0f)) == 0.0);
    CHECK(adv_generator_loss(constant_tensor(1, 1, 3, 3, 0.0f)) == 1.0);
    Tensor two(1, 1, 1, 2);
    two.v = {0.5f, 1.5f};
    CHECK(adv_generator_loss(two) == 0.25);
    CHECK_THROWS_AS(adv_generator_loss(Tensor()), ValidationError);
}

TEST_CASE("adversarial discriminator loss") {
    CHECK(adv_discriminator_loss(constant_tensor(1, 1, 2, 2, 1.0f),
                                 constant_tensor(1, 1, 2, 2, 0.0f)) == 0.0);
    CHECK(adv_discriminator_loss(constant_tensor(1, 1, 2, 2, 0.0f),
                                 constant_tensor(1, 1, 2, 2, 1.0f)) == 1.0);
    CHECK(adv_discriminator_loss(constant_tensor(1, 1, 2, 2, 0.5f),
                                 constant_tensor(1, 1, 2, 2, 0.5f)) == 0.25);
    CHECK_THROWS_AS(adv_discriminator_loss(Tensor(), constant_tensor(1, 1, 2, 2, 0.0f)),
                    ValidationError);
}

TEST_CASE("masked_l1") {
    Tensor a = constant_tensor(1, 1, 2, 2, 0.0f);
    Tensor b = constant_tensor(1, 1, 2, 2, 1.0f);
    Tensor ones = constant_tensor(1, 1, 2, 2, 1.0f);
    Tensor zeros = constant_tensor(1, 1, 2, 2, 0.0f);
    Tensor one_pixel = zeros;
    one_pixel.v[2] = 1.0f;

    CHECK(masked_l1(a, a, ones, MaskMode::global) == 0.0);
    CHECK(masked_l1(a, a, ones, MaskMode::local) == 0.0);
    CHECK(masked_l1(a, b, zeros, MaskMode::local) == 0.0);
    CHECK(masked_l1(a, b, one_pixel, MaskMode::local) == 0.25);
    CHECK(masked_l1(a, b, one_pixel, MaskMode::global) == 1.0);

    SUBCASE("all-ones mask makes local identical to global") {
        Tensor ra = random_tensor(2, 1, 4, 4, 1);
        Tensor rb = random_tensor(2, 1, 4, 4, 2);
        Tensor rmask = constant_tensor(2, 1, 4, 4, 1.0f);
        CHECK(masked_l1(ra, rb, rmask, MaskMode::local) ==
              masked_l1(ra, rb, rmask, MaskMode::global));
    }
    SUBCASE("complementary masks sum to the global value") {
        Tensor ra = random_tensor(2, 1, 4, 4, 3);
        Tensor rb = random_tensor(2, 1, 4, 4, 4);
        Tensor s = random_mask_tensor(2, 1, 4, 4, 5, 0.5);
        Tensor inv = s;
        for (float& v : inv.v) v = 1.0f - v;
        const double sum = masked_l1(ra, rb, s, MaskMode::local) +
                           masked_l1(ra, rb, inv, MaskMode::local);
        CHECK(std::abs(sum - masked_l1(ra, rb, s, MaskMode::global)) <= 1e-12);
    }
    SUBCASE("shape and binarity violations") {
        CHECK_THROWS_AS(masked_l1(a, constant_tensor(1, 1, 2, 3, 0.0f), ones, MaskMode::global),
                        ValidationError);
        Tensor bad_mask = constant_tensor(1, 1, 2, 2, 0.5f);
        CHECK_THROWS_AS(masked_l1(a, b, bad_mask, MaskMode::local), ValidationError);
    }
}

TEST_CASE("cycle and identity losses with stub generators") {
    IdentityBundle id_bundle;
    Tensor x = random_tensor(2, 1, 4, 4, 6);
    Tensor y = random_tensor(2, 1, 4, 4, 7);
    Tensor s = random_mask_tensor(2, 1, 4, 4, 8, 0.5);

    SUBCASE("identity generators reconstruct perfectly") {
        auto [cyc, cyc_local] = cycle_losses(id_bundle, x, y, s);
        CHECK(cyc == 0.0);
        CHECK(cyc_local == 0.0);
        auto [idl, id_local] = identity_losses(id_bundle, x, y, s);
        CHECK(idl == 0.0);
        CHECK(id_local == 0.0);
    }
    SUBCASE("all-zero mask nulls the localized terms") {
        StubBundle stub{0.5f, -0.25f, 0.8f, 0.3f, 4};
        Tensor zeros = constant_tensor(2, 1, 4, 4, 0.0f);
        auto [cyc, cyc_local] = cycle_losses(stub, x, y, zeros);
        CHECK(cyc > 0.0);
        CHECK(cyc_local == 0.0);
        auto [idl, id_local] = identity_losses(stub, x, y, zeros);
        CHECK(idl > 0.0);
        CHECK(id_local == 0.0);
    }
    SUBCASE("all-ones mask makes localized equal global") {
        StubBundle stub{0.5f, -0.25f, 0.8f, 0.3f, 4};
        Tensor ones = constant_tensor(2, 1, 4, 4, 1.0f);
        auto [cyc, cyc_local] = cycle_losses(stub, x, y, ones);
        CHECK(cyc == cyc_local);
        auto [idl, id_local] = identity_losses(stub, x, y, ones);
        CHECK(idl == id_local);
    }
}

TEST_CASE("total objective on a stub bundle matches hand-computed values") {
    StubBundle stub{0.5f, -0.25f, 0.8f, 0.3f, 2};
    Tensor x = constant_tensor(1, 1, 2, 2, 0.1f);
    Tensor y = constant_tensor(1, 1, 2, 2, -0.2f);

    // components, evaluated from the stored float constants
    const double gv = 0.5f, fv = -0.25f, dyv = 0.8f, dxv = 0.3f, xv = 0.1f, yv = -0.2f;
    const double adv_g = (dyv - 1.0) * (dyv - 1.0);
    const double adv_f = (dxv - 1.0) * (dxv - 1.0);
    const double cyc = std::abs(fv - xv) + std::abs(gv - yv);
    const double idt = std::abs(gv - yv) + std::abs(fv - xv);

    SUBCASE("all-ones mask, gamma 35") {
        Tensor s = constant_tensor(1, 1, 2, 2, 1.0f);
        LossWeights w{10.0, 5.0, 35.0};
        LossBreakdown out = total_objective(stub, x, y, s, w);
        const double want = adv_g + adv_f + 10.0 * (cyc + 35.0 * cyc) + 5.0 * (idt + 35.0 * idt);
        CHECK(out.total_G == doctest::Approx(want).epsilon(1e-9));
        CHECK(out.cyc == doctest::Approx(cyc).epsilon(1e-9));
        CHECK(out.cyc_local == doctest::Approx(cyc).epsilon(1e-9));
    }
    SUBCASE("single-pixel mask scales the localized terms by coverage") {
        Tensor s = constant_tensor(1, 1, 2, 2, 0.0f);
        s.v[1] = 1.0f;
        LossWeights w{10.0, 5.0, 35.0};
        LossBreakdown out = total_objective(stub, x, y, s, w);
        const double want =
            adv_g + adv_f + 10.0 * (cyc + 35.0 * cyc / 4.0) + 5.0 * (idt + 35.0 * idt / 4.0);
        CHECK(out.total_G == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("objective invariants on a real micro bundle") {
    const NetConfig cfg = NetConfig::micro();
    ModelBundle bundle = build_bundle(cfg, 31);
    Tensor x = random_tensor(2, 1, 16, 16, 32);
    Tensor y = random_tensor(2, 1, 16, 16, 33);

    SUBCASE("gamma 0 equals the independently composed standard objective bitwise") {
        Tensor s = random_mask_tensor(2, 1, 16, 16, 34, 0.4);
        LossWeights w{10.0, 5.0, 0.0};
        LossBreakdown out = total_objective(bundle, x, y, s, w);
        const double want = oracle::standard_objective(bundle, x, y, 10.0, 5.0);
        CHECK(out.total_G == want);
    }
    SUBCASE("all-zero masks make gamma irrelevant bitwise") {
        Tensor s = constant_tensor(2, 1, 16, 16, 0.0f);
        LossWeights w0{10.0, 5.0, 0.0};
        LossWeights w100{10.0, 5.0, 100.0};
        CHECK(total_objective(bundle, x, y, s, w0).total_G ==
              total_objective(bundle, x, y, s, w100).total_G);
    }
    SUBCASE("total is strictly increasing in gamma when localized terms are nonzero") {
        Tensor s = random_mask_tensor(2, 1, 16, 16, 35, 0.5);
        double prev = -1.0;
        for (double gamma : {0.0, 1.0, 5.0, 35.0, 100.0}) {
            LossWeights w{10.0, 5.0, gamma};
            LossBreakdown out = total_objective(bundle, x, y, s, w);
            REQUIRE(out.cyc_local + out.id_local > 0.0);
            CHECK(out.total_G > prev);
            prev = out.total_G;
        }
    }
    SUBCASE("breakdown composition identity holds exactly") {
        Tensor s = random_mask_tensor(2, 1, 16, 16, 36, 0.3);
        LossWeights w{10.0, 5.0, 35.0};
        LossBreakdown out = total_objective(bundle, x, y, s, w);
        CHECK(out.total_G == out.adv_G + out.adv_F + w.lambda1 * (out.cyc + w.gamma * out.cyc_local) +
                                 w.lambda2 * (out.id + w.gamma * out.id_local));
        CHECK(out.total_D == out.adv_Dx + out.adv_Dy);
    }
}

TEST_CASE("non-finite components are reported by name") {
    StubBundle stub{0.5f, -0.25f, std::numeric_limits<float>::infinity(), 0.3f, 2};
    Tensor x = constant_tensor(1, 1, 2, 2, 0.1f);
    Tensor y = constant_tensor(1, 1, 2, 2, 0.2f);
    Tensor s = constant_tensor(1, 1, 2, 2, 0.0f);
    LossWeights w{10.0, 5.0, 0.0};
    CHECK_THROWS_WITH_AS(total_objective(stub, x, y, s, w), doctest::Contains("adv_G"),
                         NumericError);
}

TEST_CASE("gradient_check on closed-form functions") {
    SUBCASE("quadratic control is exact to float noise") {
        std::vector<float> params = {1.0f, -2.0f, 0.5f, 3.0f};
        const std::vector<double> a = {2.0, 1.0, 0.5, 0.0};  // last coordinate inert
        const std::vector<double> b = {-1.0, 0.0, 2.0, 0.0};
        auto loss = [&](std::span<const float> p) {
            double acc = 0.0;
            for (size_t i = 0; i < p.size(); ++i)
                acc += a[i] * static_cast<double>(p[i]) * static_cast<double>(p[i]) +
                       b[i] * static_cast<double>(p[i]);
            return acc;
        };
        std::vector<double> grad(params.size());
        for (size_t i = 0; i < params.size(); ++i)
            grad[i] = 2.0 * a[i] * static_cast<double>(params[i]) + b[i];
        const std::vector<size_t> coords = {0, 1, 2, 3};
        CHECK(gradient_check(loss, params, grad, coords, 1e-3) < 1e-6);
    }
    SUBCASE("a loss constant in one parameter has zero gradient there") {
        std::vector<float> params = {2.0f, 4.0f};
        auto loss = [](std::span<const float> p) { return static_cast<double>(p[0]) * 3.0; };
        const std::vector<double> grad = {3.0, 0.0};
        const std::vector<size_t> coords = {1};
        CHECK(gradient_check(loss, params, grad, coords, 1e-3) <= 1e-6);
    }
    SUBCASE("mismatched sizes are rejected") {
        auto loss = [](std::span<const float>) { return 0.0; };
        std::vector<double> grad = {0.0};
        std::vector<size_t> coords = {0};
        CHECK_THROWS_AS(gradient_check(loss, {1.0f, 2.0f}, grad, coords, 1e-3), ValidationError);
    }
}

namespace {

// Flattened parameter order shared with the acceptance harness: G, F, Dx, Dy.
std::vector<float> flatten_bundle(const ModelBundle& b) {
    std::vector<float> all, tmp;
    for (const nn::Network* net : {&b.G, &b.F, &b.Dx, &b.Dy}) {
        net->flatten_params(tmp);
        all.insert(all.end(), tmp.begin(), tmp.end());
    }
    return all;
}

void unflatten_bundle(ModelBundle& b, std::span<const float> all) {
    size_t off = 0;
    for (nn::Network* net : {&b.G, &b.F, &b.Dx, &b.Dy}) {
        const size_t n = net->param_count();
        net->unflatten_params(all.subspan(off, n));
        off += n;
    }
}

std::vector<double> flatten_bundle_grads(const ModelBundle& b) {
    std::vector<double> all;
    std::vector<double> tmp;
    for (const nn::Network* net : {&b.G, &b.F, &b.Dx, &b.Dy}) {
        net->flatten_grads(tmp);
        all.insert(all.end(), tmp.begin(), tmp.end());
    }
    return all;
}

}  // namespace

TEST_CASE("backward pass of the full objective agrees with finite differences") {
    const NetConfig cfg = NetConfig::micro();
    ModelBundle bundle = build_bundle(cfg, 41);
    Tensor x = random_tensor(1, 1, 16, 16, 42, -0.5f, 0.5f);
    Tensor y = random_tensor(1, 1, 16, 16, 43, -0.5f, 0.5f);
    Tensor s = random_mask_tensor(1, 1, 16, 16, 44, 0.3);
    const LossWeights w{10.0, 5.0, 35.0};

    bundle.G.zero_grad();
    bundle.F.zero_grad();
    bundle.Dx.zero_grad();
    bundle.Dy.zero_grad();
    backprop_generator_objective(bundle, x, y, s, w);
    const std::vector<double> analytic = flatten_bundle_grads(bundle);
    const std::vector<float> params = flatten_bundle(bundle);

    auto loss = [&](std::span<const float> p) {
        unflatten_bundle(bundle, p);
        const double v = oracle::total_generator_objective(bundle, x, y, s, w);
        return v;
    };
    Rng rng(45);
    std::vector<size_t> coords;
    for (int i = 0; i < 20; ++i)
        coords.push_back(static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(params.size()) - 1)));
    const double err = gradient_check(loss, params, analytic, coords, 1e-3);
    unflatten_bundle(bundle, params);  // restore
    CHECK(err < 1e-2);
}

TEST_CASE("discriminator backward agrees with finite differences") {
    const NetConfig cfg = NetConfig::micro();
    ModelBundle bundle = build_bundle(cfg, 51);
    Tensor real = random_tensor(1, 1, 16, 16, 52, -0.5f, 0.5f);
    Tensor fake = random_tensor(1, 1, 16, 16, 53, -0.5f, 0.5f);

    bundle.Dy.zero_grad();
    backprop_discriminator_loss(bundle.Dy, real, fake);
    std::vector<double> analytic;
    bundle.Dy.flatten_grads(analytic);
    std::vector<float> params;
    bundle.Dy.flatten_params(params);

    auto loss = [&](std::span<const float> p) {
        bundle.Dy.unflatten_params(p);
        const oracle::DImage sr =
            oracle::discriminator_forward(bundle.Dy, cfg, oracle::slice_to_dimage(real, 0));
        const oracle::DImage sf =
            oracle::discriminator_forward(bundle.Dy, cfg, oracle::slice_to_dimage(fake, 0));
        double racc = 0.0, facc = 0.0;
        for (double v : sr.v) racc += (v - 1.0) * (v - 1.0);
        for (double v : sf.v) facc += v * v;
        return 0.5 * (racc / static_cast<double>(sr.v.size()) +
                      facc / static_cast<double>(sf.v.size()));
    };
    Rng rng(54);
    std::vector<size_t> coords;
    for (int i = 0; i < 12; ++i)
        coords.push_back(static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(params.size()) - 1)));
    const double err = gradient_check(loss, params, analytic, coords, 1e-3);
    bundle.Dy.unflatten_params(params);
    CHECK(err < 1e-2);
}
