#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vce/common.hpp"

namespace vce {

// Closed interval the pixels of a GrayImage are declared to lie in.
struct ValueRange {
    float lo = 0.0f;
    float hi = 1.0f;

    float width() const { return hi - lo; }
    bool contains(float v) const { return v >= lo && v <= hi; }
    bool operator==(const ValueRange&) const = default;
};

inline const ValueRange kUnitRange{0.0f, 1.0f};
inline const ValueRange kSignedRange{-1.0f, 1.0f};

// Single-channel 2D float image, row-major, immutable after construction.
// Construction validates: finite pixels, pixels within the declared range,
// height/width >= 1.
class GrayImage {
public:
    GrayImage(int height, int width, ValueRange range, std::vector<float> pixels)
        : h_(height), w_(width), range_(range), pix_(std::move(pixels)) {
        validate();
    }

    static GrayImage zeros(int height, int width, ValueRange range = kUnitRange) {
        return GrayImage(height, width, range, std::vector<float>(check_dims(height, width), 0.0f));
    }

    static GrayImage constant(int height, int width, float value, ValueRange range = kUnitRange) {
        return GrayImage(height, width, range, std::vector<float>(check_dims(height, width), value));
    }

    int height() const { return h_; }
    int width() const { return w_; }
    ValueRange range() const { return range_; }
    size_t numel() const { return pix_.size(); }

    float at(int r, int c) const { return pix_[static_cast<size_t>(r) * w_ + c]; }
    const std::vector<float>& pixels() const { return pix_; }
    const float* data() const { return pix_.data(); }

    bool same_shape(const GrayImage& o) const { return h_ == o.h_ && w_ == o.w_; }

private:
    static size_t check_dims(int h, int w) {
        if (h < 1 || w < 1) throw ValidationError("GrayImage: height and width must be >= 1");
        return static_cast<size_t>(h) * static_cast<size_t>(w);
    }

    void validate() const {
        if (pix_.size() != check_dims(h_, w_))
            throw ValidationError("GrayImage: pixel buffer size does not match dimensions");
        for (float v : pix_) {
            if (!std::isfinite(v)) throw ValidationError("GrayImage: non-finite pixel value");
            if (!range_.contains(v)) throw ValidationError("GrayImage: pixel outside declared value range");
        }
    }

    int h_, w_;
    ValueRange range_;
    std::vector<float> pix_;
};

// Binary lesion map, spatially aligned with its paired images.
// Values are exactly 0 or 1; an all-zero mask is legal.
class LesionMask {
public:
    LesionMask(int height, int width, std::vector<uint8_t> pixels)
        : h_(height), w_(width), pix_(std::move(pixels)) {
        if (h_ < 1 || w_ < 1) throw ValidationError("LesionMask: height and width must be >= 1");
        if (pix_.size() != static_cast<size_t>(h_) * w_)
            throw ValidationError("LesionMask: pixel buffer size does not match dimensions");
        for (uint8_t v : pix_) {
            if (v > 1) throw ValidationError("LesionMask: values must be exactly 0 or 1");
        }
    }

    static LesionMask zeros(int height, int width) {
        return LesionMask(height, width, std::vector<uint8_t>(static_cast<size_t>(height) * width, 0));
    }

    int height() const { return h_; }
    int width() const { return w_; }
    size_t numel() const { return pix_.size(); }

    uint8_t at(int r, int c) const { return pix_[static_cast<size_t>(r) * w_ + c]; }
    const std::vector<uint8_t>& pixels() const { return pix_; }

    bool any() const {
        for (uint8_t v : pix_)
            if (v) return true;
        return false;
    }

    size_t count() const {
        size_t n = 0;
        for (uint8_t v : pix_) n += v;
        return n;
    }

    bool same_shape(const LesionMask& o) const { return h_ == o.h_ && w_ == o.w_; }

private:
    int h_, w_;
    std::vector<uint8_t> pix_;
};

// One training/evaluation unit: source-domain image x, target-domain image y,
// lesion mask s, plus identity metadata. x, y, s share one shape and
// has_lesion is true exactly when the mask is nonzero.
struct PairedSample {
    GrayImage x;
    GrayImage y;
    LesionMask s;
    std::string patient_id;
    bool has_lesion;

    static PairedSample make(GrayImage x, GrayImage y, LesionMask s, std::string patient_id) {
        if (x.height() != y.height() || x.width() != y.width())
            throw ValidationError("PairedSample: x/y shape mismatch");
        if (x.height() != s.height() || x.width() != s.width())
            throw ValidationError("PairedSample: mask shape mismatch");
        const bool lesion = s.any();
        return PairedSample{std::move(x), std::move(y), std::move(s), std::move(patient_id), lesion};
    }
};

// Affine map of range endpoints; invertible up to float rounding.
GrayImage rescale(const GrayImage& img, ValueRange from, ValueRange to);

}  // namespace vce
