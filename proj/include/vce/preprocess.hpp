#pragma once

#include <cstdint>
#include <tuple>

#include "vce/common.hpp"
#include "vce/image.hpp"

namespace vce {

// Paired augmentation policy: one parameter vector is drawn per fetch and
// applied identically to both images and the mask.
struct AugmentPolicy {
    double shift_frac = 0.10;      // max |translation| as a fraction of size
    double zoom_frac = 0.10;       // zoom in [1 - zoom_frac, 1 + zoom_frac]
    bool hflip = true;
    double max_rotation_deg = 15.0;
    uint64_t rng_seed = 0;

    void validate() const {
        if (shift_frac < 0 || zoom_frac < 0 || max_rotation_deg < 0)
            throw ConfigError("augment: magnitudes must be nonnegative");
        if (zoom_frac >= 1.0) throw ConfigError("augment: zoom_frac must be < 1");
    }
};

struct AugmentParams {
    double dx = 0.0;      // translation as a fraction of width, applied after rotation
    double dy = 0.0;      // translation as a fraction of height
    double zoom = 1.0;    // center-anchored
    double angle_deg = 0.0;  // about the image center
    bool flip = false;    // horizontal mirror
};

// Zero-pads to max(H, W) square with the content centered; the short-axis
// offset is floor((max - min) / 2). The pixel sum is preserved exactly.
GrayImage pad_square(const GrayImage& img);
LesionMask pad_square(const LesionMask& mask);

// Clips to the [lo_pct, hi_pct] percentile window and maps it affinely onto
// [0, 1]. A constant image (degenerate window) maps to all zeros.
GrayImage contrast_stretch(const GrayImage& img, double lo_pct = 2.0, double hi_pct = 98.0);

// Bilinear resize of a square image (half-pixel-centered sampling); masks are
// resized nearest-neighbor and re-binarized.
GrayImage resize_bilinear(const GrayImage& img, int size);
LesionMask resize_mask(const LesionMask& mask, int size);

AugmentParams sample_augment(const AugmentPolicy& policy, Rng& rng);

// Applies one drawn transform. Images interpolate bilinearly, masks
// nearest-neighbor; out-of-frame regions fill with zero.
GrayImage apply_augment(const GrayImage& img, const AugmentParams& p);
LesionMask apply_augment(const LesionMask& mask, const AugmentParams& p);

std::tuple<GrayImage, GrayImage, LesionMask> augment_pair(const GrayImage& x, const GrayImage& y,
                                                          const LesionMask& s,
                                                          const AugmentPolicy& policy, Rng& rng);

// Full pipeline: pad to square, contrast-stretch into [0, 1], resize; the
// mask is padded and resized with binarity preserved.
PairedSample preprocess_sample(const PairedSample& raw, int target_size = 256);

}  // namespace vce
