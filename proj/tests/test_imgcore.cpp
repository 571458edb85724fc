#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "vce/image.hpp"
#include "vce/image_io.hpp"

using namespace vce;
using testutil::TempDir;
using testutil::random_image;

TEST_CASE("GrayImage rejects invariant violations") {
    CHECK_THROWS_AS(GrayImage(0, 4, kUnitRange, {}), ValidationError);
    CHECK_THROWS_AS(GrayImage(1, 2, kUnitRange, {0.5f}), ValidationError);  // size mismatch
    CHECK_THROWS_AS(GrayImage(1, 2, kUnitRange, {0.5f, std::nanf("")}), ValidationError);
    CHECK_THROWS_AS(GrayImage(1, 2, kUnitRange, {0.5f, 1.5f}), ValidationError);
    CHECK_NOTHROW(GrayImage(1, 2, kUnitRange, {0.0f, 1.0f}));
}

TEST_CASE("LesionMask is strictly binary") {
    CHECK_THROWS_AS(LesionMask(2, 2, {0, 1, 2, 0}), ValidationError);
    LesionMask m(2, 2, {0, 1, 0, 0});
    CHECK(m.any());
    CHECK(m.count() == 1);
    CHECK_FALSE(LesionMask::zeros(3, 3).any());
}

TEST_CASE("PairedSample::make derives has_lesion and checks alignment") {
    GrayImage x = GrayImage::zeros(4, 4);
    GrayImage y = GrayImage::zeros(4, 4);
    auto sample = PairedSample::make(x, y, LesionMask::zeros(4, 4), "p0");
    CHECK_FALSE(sample.has_lesion);

    LesionMask m(4, 4, [] {
        std::vector<uint8_t> v(16, 0);
        v[5] = 1;
        return v;
    }());
    CHECK(PairedSample::make(x, y, m, "p0").has_lesion);
    CHECK_THROWS_AS(PairedSample::make(x, GrayImage::zeros(4, 5), LesionMask::zeros(4, 4), "p0"),
                    ValidationError);
    CHECK_THROWS_AS(PairedSample::make(x, y, LesionMask::zeros(5, 4), "p0"), ValidationError);
}

TEST_CASE("rescale maps endpoints and midpoint") {
    GrayImage img(1, 3, kUnitRange, {0.0f, 0.5f, 1.0f});
    GrayImage out = rescale(img, kUnitRange, kSignedRange);
    CHECK(out.at(0, 0) == -1.0f);
    CHECK(out.at(0, 1) == 0.0f);
    CHECK(out.at(0, 2) == 1.0f);
    CHECK(out.range() == kSignedRange);
}

TEST_CASE("rescale round trip is tight") {
    GrayImage img = random_image(8, 8, 42);
    GrayImage back = rescale(rescale(img, kUnitRange, kSignedRange), kSignedRange, kUnitRange);
    for (size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(img.pixels()[i] - back.pixels()[i]) <= 1e-6f);
}

TEST_CASE("rescale rejects a degenerate source range") {
    GrayImage img = GrayImage::constant(2, 2, 0.5f);
    CHECK_THROWS_AS(rescale(img, ValueRange{0.5f, 0.5f}, kUnitRange), ValidationError);
}

TEST_CASE("portable-float round trip is bitwise") {
    TempDir dir("pfloat");
    GrayImage img = random_image(8, 8, 7);
    const auto path = dir.path() / "img.vcef";
    save_pfloat(img, path);
    GrayImage back = load_pfloat(path, kUnitRange);
    CHECK(back.height() == 8);
    CHECK(back.width() == 8);
    CHECK(img.pixels() == back.pixels());
}

TEST_CASE("portable-float errors") {
    TempDir dir("pfloat_err");
    GrayImage img = random_image(4, 4, 1);
    CHECK_THROWS_AS(save_pfloat(img, dir.path() / "missing" / "img.vcef"), IoError);

    const auto bad = dir.path() / "bad.vcef";
    std::ofstream(bad, std::ios::binary) << "NOTME\n4 4\n";
    CHECK_THROWS_AS(load_pfloat(bad), IoError);

    const auto truncated = dir.path() / "short.vcef";
    std::ofstream(truncated, std::ios::binary) << "VCEF1\n4 4\nxx";
    CHECK_THROWS_AS(load_pfloat(truncated), IoError);

    // non-finite payload is rejected when the range is inferred
    const auto nan_file = dir.path() / "nan.vcef";
    {
        std::ofstream os(nan_file, std::ios::binary);
        os << "VCEF1\n1 2\n";
        const float vals[2] = {0.5f, std::nanf("")};
        os.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    CHECK_THROWS_AS(load_pfloat(nan_file), ValidationError);
}

TEST_CASE("16-bit png round trip stays within one quantization step") {
    TempDir dir("png16");
    GrayImage img = random_image(9, 5, 11);
    const auto path = dir.path() / "img.png";
    save_png16(img, path);
    GrayImage back = load_png16(path);
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(img.pixels()[i] - back.pixels()[i]) <= 1.0f / 65535.0f);
}

TEST_CASE("save_image dispatches by format") {
    TempDir dir("save_image");
    GrayImage img = random_image(6, 6, 3);
    save_image(img, dir.path() / "a.vcef", ImageFormat::PortableFloat);
    save_image(img, dir.path() / "a.png", ImageFormat::Png16);
    CHECK(load_pfloat(dir.path() / "a.vcef").pixels() == img.pixels());
    CHECK(load_png16(dir.path() / "a.png").same_shape(img));
}

TEST_CASE("load_sample builds validated samples") {
    TempDir dir("sample");
    GrayImage x = random_image(6, 6, 21);
    GrayImage y = random_image(6, 6, 22);
    save_pfloat(x, dir.path() / "x.vcef");
    save_pfloat(y, dir.path() / "y.vcef");

    std::vector<float> bits(36, 0.0f);
    bits[10] = 1.0f;
    save_pfloat(GrayImage(6, 6, kUnitRange, bits), dir.path() / "s.vcef");

    SUBCASE("mask present") {
        auto sample =
            load_sample(dir.path() / "x.vcef", dir.path() / "y.vcef", dir.path() / "s.vcef", "p1");
        CHECK(sample.has_lesion);
        CHECK(sample.s.count() == 1);
        CHECK(sample.patient_id == "p1");
    }
    SUBCASE("absent mask yields an all-zero mask") {
        auto sample = load_sample(dir.path() / "x.vcef", dir.path() / "y.vcef", std::nullopt, "p1");
        CHECK_FALSE(sample.has_lesion);
        CHECK(sample.s.count() == 0);
    }
    SUBCASE("shape mismatch names the offending file") {
        save_pfloat(random_image(3, 3, 5), dir.path() / "small.vcef");
        CHECK_THROWS_WITH_AS(
            load_sample(dir.path() / "x.vcef", dir.path() / "small.vcef", std::nullopt, "p1"),
            doctest::Contains("small.vcef"), ValidationError);
    }
    SUBCASE("non-binary mask is rejected") {
        save_pfloat(GrayImage::constant(6, 6, 0.5f), dir.path() / "half.vcef");
        CHECK_THROWS_AS(
            load_sample(dir.path() / "x.vcef", dir.path() / "y.vcef", dir.path() / "half.vcef", "p1"),
            ValidationError);
    }
}
