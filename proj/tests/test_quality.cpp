#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vce/quality.hpp"

using namespace vce;
using testutil::random_image;
using testutil::textured_image;

TEST_CASE("mse") {
    GrayImage a = random_image(8, 8, 1);
    CHECK(mse(a, a) == 0.0);
    CHECK(mse(GrayImage::zeros(4, 4), GrayImage::constant(4, 4, 1.0f)) == 1.0);
    GrayImage r(2, 2, kUnitRange, {0, 0, 1, 1});
    GrayImage t(2, 2, kUnitRange, {0, 1, 1, 0});
    CHECK(mse(r, t) == 0.5);
    CHECK_THROWS_AS(mse(a, GrayImage::zeros(8, 9)), ValidationError);
}

TEST_CASE("psnr closed forms") {
    SUBCASE("mse 0.01 gives exactly 20 dB") {
        // 10x10 with a single full-swing pixel: mse = 1/100
        std::vector<float> pix(100, 0.0f);
        GrayImage ref(10, 10, kUnitRange, pix);
        pix[0] = 1.0f;
        GrayImage test(10, 10, kUnitRange, pix);
        CHECK(mse(ref, test) == 0.01);
        CHECK(psnr(ref, test) == 20.0);
    }
    SUBCASE("identical images cap at 100 dB") {
        GrayImage a = random_image(6, 6, 2);
        CHECK(psnr(a, a) == kPsnrCap);
    }
    SUBCASE("mse 0.25 is 10*log10(4)") {
        GrayImage r = GrayImage::zeros(2, 2);
        GrayImage t = GrayImage::constant(2, 2, 0.5f);
        CHECK(psnr(r, t) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
    }
}

TEST_CASE("psnr/mse identity holds to 1e-9") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        GrayImage r = random_image(16, 16, 100 + seed);
        GrayImage t = random_image(16, 16, 200 + seed);
        const double e = mse(r, t);
        REQUIRE(e > 0.0);
        CHECK(std::abs(psnr(r, t) - 10.0 * std::log10(1.0 / e)) <= 1e-9);
    }
}

TEST_CASE("ssim") {
    SUBCASE("self-similarity is 1") {
        GrayImage a = textured_image(32, 32, 3);
        CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-9);
    }
    SUBCASE("constant 0 vs constant 1 closed form") {
        const double c1 = 1e-4;
        CHECK(std::abs(ssim(GrayImage::zeros(16, 16), GrayImage::constant(16, 16, 1.0f)) -
                       c1 / (1.0 + c1)) <= 1e-9);
    }
    SUBCASE("symmetric in its arguments") {
        GrayImage a = textured_image(24, 24, 5);
        GrayImage b = textured_image(24, 24, 6);
        CHECK(ssim(a, b) == ssim(b, a));
    }
    SUBCASE("images below the window size are rejected") {
        CHECK_THROWS_AS(ssim(GrayImage::zeros(10, 10), GrayImage::zeros(10, 10)), ValidationError);
    }
}

TEST_CASE("vif") {
    SUBCASE("self-fidelity is 1") {
        GrayImage a = textured_image(32, 32, 11);
        CHECK(std::abs(vif(a, a) - 1.0) <= 1e-9);
    }
    SUBCASE("strong noise destroys information") {
        GrayImage ref = textured_image(32, 32, 12);
        Rng rng(13);
        std::vector<float> noisy(ref.numel());
        for (size_t i = 0; i < noisy.size(); ++i)
            noisy[i] = static_cast<float>(
                std::clamp(ref.pixels()[i] + 0.5 * rng.normal(), 0.0, 1.0));
        const double v = vif(ref, GrayImage(32, 32, kUnitRange, noisy));
        CHECK(v < 0.5);
    }
    SUBCASE("constant test image carries almost nothing") {
        GrayImage ref = textured_image(32, 32, 14);
        CHECK(vif(ref, GrayImage::constant(32, 32, 0.5f)) < 0.05);
    }
    SUBCASE("zero-variance reference is undefined") {
        GrayImage flat = GrayImage::constant(32, 32, 0.5f);
        GrayImage t = textured_image(32, 32, 15);
        CHECK_THROWS_AS(vif(flat, t), ValidationError);
    }
}

TEST_CASE("roi metrics") {
    GrayImage a = random_image(4, 4, 20);
    SUBCASE("identical images") {
        std::vector<uint8_t> bits(16, 0);
        bits[3] = 1;
        auto [rm, ra] = roi_metrics(a, a, LesionMask(4, 4, bits));
        CHECK(rm == 0.0);
        CHECK(ra == 0.0);
    }
    SUBCASE("single pixel at half swing") {
        GrayImage r = GrayImage::zeros(4, 4);
        std::vector<float> pix(16, 0.0f);
        pix[5] = 0.5f;
        GrayImage t(4, 4, kUnitRange, pix);
        std::vector<uint8_t> bits(16, 0);
        bits[5] = 1;
        auto [rm, ra] = roi_metrics(r, t, LesionMask(4, 4, bits));
        CHECK(rm == 0.25);
        CHECK(ra == 0.5);
    }
    SUBCASE("two masked pixels with known differences") {
        GrayImage r = GrayImage::zeros(2, 2);
        GrayImage t(2, 2, kUnitRange, {0.1f, 0.3f, 0.9f, 0.9f});
        LesionMask s(2, 2, {1, 1, 0, 0});
        auto [rm, ra] = roi_metrics(r, t, s);
        CHECK(rm == doctest::Approx(0.05).epsilon(1e-9));
        CHECK(ra == doctest::Approx(0.2).epsilon(1e-9));
    }
    SUBCASE("all-ones mask equals the global mse") {
        GrayImage r = random_image(8, 8, 21);
        GrayImage t = random_image(8, 8, 22);
        auto [rm, _] = roi_metrics(r, t, LesionMask(8, 8, std::vector<uint8_t>(64, 1)));
        CHECK(std::abs(rm - mse(r, t)) <= 1e-12);
    }
    SUBCASE("all-zero mask is a caller error") {
        CHECK_THROWS_AS(roi_metrics(a, a, LesionMask::zeros(4, 4)), ValidationError);
    }
}

TEST_CASE("evaluate_pair fills ROI fields only for lesion samples") {
    GrayImage r = textured_image(32, 32, 30);
    GrayImage t = textured_image(32, 32, 31);
    MetricRecord without = evaluate_pair(r, t, LesionMask::zeros(32, 32), "s0");
    CHECK_FALSE(without.roi_mse.has_value());
    std::vector<uint8_t> bits(32 * 32, 0);
    bits[100] = 1;
    MetricRecord with = evaluate_pair(r, t, LesionMask(32, 32, bits), "s1");
    CHECK(with.roi_mse.has_value());
    CHECK(with.roi_mae.has_value());
}

TEST_CASE("implementation matches the independent oracles") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        GrayImage r = textured_image(32, 32, 300 + seed);
        GrayImage t = textured_image(32, 32, 400 + seed);
        CHECK(std::abs(mse(r, t) - oracle::mse(r, t)) <= 1e-6);
        CHECK(std::abs(psnr(r, t) - oracle::psnr(r, t)) <= 1e-6);
        CHECK(std::abs(ssim(r, t) - oracle::ssim(r, t)) <= 1e-6);
        CHECK(std::abs(vif(r, t) - oracle::vif(r, t)) <= 1e-4);
    }
}

TEST_CASE("metrics are order-independent pure functions") {
    GrayImage r = textured_image(32, 32, 50);
    GrayImage t = textured_image(32, 32, 51);
    const double first = ssim(r, t);
    (void)ssim(textured_image(32, 32, 52), textured_image(32, 32, 53));
    CHECK(ssim(r, t) == first);
}
