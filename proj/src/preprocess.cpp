#include "vce/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace vce {

namespace {

// Percentile with linear interpolation between order statistics.
double percentile(std::vector<float> v, double pct) {
    std::sort(v.begin(), v.end());
    const double pos = (v.size() - 1) * pct / 100.0;
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

// Inverse transform: maps an output pixel center back to source coordinates.
// Forward order is flip, zoom (center), rotation (center), translation.
struct InverseMap {
    double m00, m01, m10, m11;  // applied to centered coords
    double cx, cy, dx, dy;

    InverseMap(int h, int w, const AugmentParams& p) {
        cx = (w - 1) / 2.0;
        cy = (h - 1) / 2.0;
        dx = p.dx;
        dy = p.dy;
        const double rad = p.angle_deg * M_PI / 180.0;
        const double c = std::cos(rad), s = std::sin(rad);
        const double iz = 1.0 / p.zoom;
        const double f = p.flip ? -1.0 : 1.0;
        // inverse = flip^-1 * zoom^-1 * rot^-1
        m00 = f * iz * c;
        m01 = f * iz * s;
        m10 = -iz * s;
        m11 = iz * c;
    }

    void operator()(int y, int x, double& sx, double& sy) const {
        const double qx = x - cx - dx;
        const double qy = y - cy - dy;
        sx = m00 * qx + m01 * qy + cx;
        sy = m10 * qx + m11 * qy + cy;
    }
};

float sample_bilinear_zero(const GrayImage& img, double sy, double sx) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0;
    const double fy = sy - y0;
    auto tap = [&](int y, int x) -> double {
        if (y < 0 || y >= img.height() || x < 0 || x >= img.width()) return 0.0;
        return img.at(y, x);
    };
    const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                     fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
    return static_cast<float>(v);
}

ValueRange with_zero(ValueRange r) {
    return ValueRange{std::min(r.lo, 0.0f), std::max(r.hi, 0.0f)};
}

}  // namespace

GrayImage pad_square(const GrayImage& img) {
    const int h = img.height(), w = img.width();
    if (h == w) return img;
    const int n = std::max(h, w);
    const int oy = (n - h) / 2;
    const int ox = (n - w) / 2;
    std::vector<float> out(static_cast<size_t>(n) * n, 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[static_cast<size_t>(y + oy) * n + (x + ox)] = img.at(y, x);
    return GrayImage(n, n, with_zero(img.range()), std::move(out));
}

LesionMask pad_square(const LesionMask& mask) {
    const int h = mask.height(), w = mask.width();
    if (h == w) return mask;
    const int n = std::max(h, w);
    const int oy = (n - h) / 2;
    const int ox = (n - w) / 2;
    std::vector<uint8_t> out(static_cast<size_t>(n) * n, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[static_cast<size_t>(y + oy) * n + (x + ox)] = mask.at(y, x);
    return LesionMask(n, n, std::move(out));
}

GrayImage contrast_stretch(const GrayImage& img, double lo_pct, double hi_pct) {
    if (lo_pct < 0 || hi_pct > 100 || lo_pct >= hi_pct)
        throw ConfigError("contrast_stretch: bad percentile window");
    const double p_lo = percentile(img.pixels(), lo_pct);
    const double p_hi = percentile(img.pixels(), hi_pct);
    std::vector<float> out(img.numel());
    if (p_lo == p_hi) {
        std::clog << "contrast_stretch: degenerate percentile window, emitting zeros\n";
        return GrayImage(img.height(), img.width(), kUnitRange, std::move(out));
    }
    const double inv = 1.0 / (p_hi - p_lo);
    const auto& in = img.pixels();
    for (size_t i = 0; i < in.size(); ++i) {
        double v = (in[i] - p_lo) * inv;
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return GrayImage(img.height(), img.width(), kUnitRange, std::move(out));
}

GrayImage resize_bilinear(const GrayImage& img, int size) {
    if (img.height() != img.width())
        throw ValidationError("resize_bilinear: input must be square (pad first)");
    if (size < 1) throw ValidationError("resize_bilinear: bad target size");
    const int n = img.height();
    if (n == size) return img;
    const double scale = static_cast<double>(n) / size;
    std::vector<float> out(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
        const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, n - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, n - 1);
        const double fy = sy - y0;
        for (int x = 0; x < size; ++x) {
            const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, n - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, n - 1);
            const double fx = sx - x0;
            const double v = (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                             fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
            out[static_cast<size_t>(y) * size + x] = static_cast<float>(v);
        }
    }
    return GrayImage(size, size, img.range(), std::move(out));
}

LesionMask resize_mask(const LesionMask& mask, int size) {
    if (mask.height() != mask.width())
        throw ValidationError("resize_mask: input must be square (pad first)");
    if (size < 1) throw ValidationError("resize_mask: bad target size");
    const int n = mask.height();
    if (n == size) return mask;
    const double scale = static_cast<double>(n) / size;
    std::vector<uint8_t> out(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
        const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5) * scale)), 0, n - 1);
        for (int x = 0; x < size; ++x) {
            const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5) * scale)), 0, n - 1);
            // nearest-neighbor keeps {0,1}; threshold again for safety
            out[static_cast<size_t>(y) * size + x] = mask.at(sy, sx) >= 1 ? 1 : 0;
        }
    }
    return LesionMask(size, size, std::move(out));
}

AugmentParams sample_augment(const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    AugmentParams p;
    p.dx = rng.uniform(-policy.shift_frac, policy.shift_frac);
    p.dy = rng.uniform(-policy.shift_frac, policy.shift_frac);
    p.zoom = rng.uniform(1.0 - policy.zoom_frac, 1.0 + policy.zoom_frac);
    p.angle_deg = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
    p.flip = policy.hflip && rng.bernoulli(0.5);
    return p;
}

GrayImage apply_augment(const GrayImage& img, const AugmentParams& p) {
    const InverseMap inv(img.height(), img.width(),
                         AugmentParams{p.dx * img.width(), p.dy * img.height(), p.zoom,
                                       p.angle_deg, p.flip});
    std::vector<float> out(img.numel());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            double sx, sy;
            inv(y, x, sx, sy);
            out[static_cast<size_t>(y) * img.width() + x] = sample_bilinear_zero(img, sy, sx);
        }
    }
    return GrayImage(img.height(), img.width(), with_zero(img.range()), std::move(out));
}

LesionMask apply_augment(const LesionMask& mask, const AugmentParams& p) {
    const InverseMap inv(mask.height(), mask.width(),
                         AugmentParams{p.dx * mask.width(), p.dy * mask.height(), p.zoom,
                                       p.angle_deg, p.flip});
    std::vector<uint8_t> out(mask.numel());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            double sx, sy;
            inv(y, x, sx, sy);
            const int nx = static_cast<int>(std::floor(sx + 0.5));
            const int ny = static_cast<int>(std::floor(sy + 0.5));
            uint8_t v = 0;
            if (ny >= 0 && ny < mask.height() && nx >= 0 && nx < mask.width())
                v = mask.at(ny, nx) >= 1 ? 1 : 0;
            out[static_cast<size_t>(y) * mask.width() + x] = v;
        }
    }
    return LesionMask(mask.height(), mask.width(), std::move(out));
}

std::tuple<GrayImage, GrayImage, LesionMask> augment_pair(const GrayImage& x, const GrayImage& y,
                                                          const LesionMask& s,
                                                          const AugmentPolicy& policy, Rng& rng) {
    if (!x.same_shape(y) || x.height() != s.height() || x.width() != s.width())
        throw ValidationError("augment_pair: shape mismatch");
    const AugmentParams p = sample_augment(policy, rng);
    return {apply_augment(x, p), apply_augment(y, p), apply_augment(s, p)};
}

PairedSample preprocess_sample(const PairedSample& raw, int target_size) {
    GrayImage x = resize_bilinear(contrast_stretch(pad_square(raw.x)), target_size);
    GrayImage y = resize_bilinear(contrast_stretch(pad_square(raw.y)), target_size);
    LesionMask s = resize_mask(pad_square(raw.s), target_size);
    return PairedSample::make(std::move(x), std::move(y), std::move(s), raw.patient_id);
}

}  // namespace vce
