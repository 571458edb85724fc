#include "vce/quality.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace vce {

namespace {

void require_same_shape(const GrayImage& a, const GrayImage& b, const char* op) {
    if (!a.same_shape(b)) throw ValidationError(std::string(op) + ": shape mismatch");
}

// Dense 2D buffer of doubles used by the metric kernels.
struct Field {
    int h = 0, w = 0;
    std::vector<double> v;

    Field() = default;
    Field(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0.0) {}
    double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    bool empty() const { return h <= 0 || w <= 0; }
};

Field to_field(const GrayImage& img) {
    Field f(img.height(), img.width());
    for (size_t i = 0; i < img.numel(); ++i) f.v[i] = img.pixels()[i];
    return f;
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-0.5 * ((i - c) / sigma) * ((i - c) / sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& x : k) x /= sum;
    return k;
}

// Separable valid-mode Gaussian filtering; output shrinks by size-1.
Field filter_valid(const Field& in, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int oh = in.h - n + 1;
    const int ow = in.w - n + 1;
    if (oh < 1 || ow < 1) return Field();
    Field tmp(in.h, ow);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * in.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    Field out(oh, ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

Field downsample2(const Field& in) {
    Field out((in.h + 1) / 2, (in.w + 1) / 2);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(y, x) = in.at(2 * y, 2 * x);
    return out;
}

}  // namespace

double mse(const GrayImage& ref, const GrayImage& test) {
    require_same_shape(ref, test, "mse");
    double acc = 0.0;
    const auto& a = ref.pixels();
    const auto& b = test.pixels();
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const GrayImage& ref, const GrayImage& test, double max_val) {
    const double e = mse(ref, test);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / e));
}

double ssim(const GrayImage& ref, const GrayImage& test) {
    require_same_shape(ref, test, "ssim");
    constexpr int kWindow = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (k1 * L)^2
    constexpr double kC2 = 0.03 * 0.03;  // (k2 * L)^2
    if (ref.height() < kWindow || ref.width() < kWindow)
        throw ValidationError("ssim: image smaller than the filter window");

    const auto k = gaussian_kernel_1d(kWindow, kSigma);
    const Field a = to_field(ref);
    const Field b = to_field(test);
    Field aa(a.h, a.w), bb(a.h, a.w), ab(a.h, a.w);
    for (size_t i = 0; i < a.v.size(); ++i) {
        aa.v[i] = a.v[i] * a.v[i];
        bb.v[i] = b.v[i] * b.v[i];
        ab.v[i] = a.v[i] * b.v[i];
    }
    const Field mu1 = filter_valid(a, k);
    const Field mu2 = filter_valid(b, k);
    const Field e_aa = filter_valid(aa, k);
    const Field e_bb = filter_valid(bb, k);
    const Field e_ab = filter_valid(ab, k);

    double acc = 0.0;
    for (size_t i = 0; i < mu1.v.size(); ++i) {
        const double m1 = mu1.v[i], m2 = mu2.v[i];
        const double s1 = e_aa.v[i] - m1 * m1;
        const double s2 = e_bb.v[i] - m2 * m2;
        const double s12 = e_ab.v[i] - m1 * m2;
        const double num = (2.0 * m1 * m2 + kC1) * (2.0 * s12 + kC2);
        const double den = (m1 * m1 + m2 * m2 + kC1) * (s1 + s2 + kC2);
        acc += num / den;
    }
    return acc / static_cast<double>(mu1.v.size());
}

double vif(const GrayImage& ref, const GrayImage& test, int scales, double sigma_nsq) {
    require_same_shape(ref, test, "vif");
    if (scales < 1) throw ValidationError("vif: scales must be >= 1");

    Field r = to_field(ref);
    Field t = to_field(test);
    double num = 0.0, den = 0.0;

    for (int scale = 1; scale <= scales; ++scale) {
        const int n = (1 << (scales - scale + 1)) + 1;
        const auto k = gaussian_kernel_1d(n, n / 5.0);
        if (scale > 1) {
            r = downsample2(filter_valid(r, k));
            t = downsample2(filter_valid(t, k));
            if (r.empty()) break;
        }
        const Field mu1 = filter_valid(r, k);
        if (mu1.empty()) continue;
        const Field mu2 = filter_valid(t, k);
        Field rr(r.h, r.w), tt(r.h, r.w), rt(r.h, r.w);
        for (size_t i = 0; i < r.v.size(); ++i) {
            rr.v[i] = r.v[i] * r.v[i];
            tt.v[i] = t.v[i] * t.v[i];
            rt.v[i] = r.v[i] * t.v[i];
        }
        const Field e_rr = filter_valid(rr, k);
        const Field e_tt = filter_valid(tt, k);
        const Field e_rt = filter_valid(rt, k);

        for (size_t i = 0; i < mu1.v.size(); ++i) {
            double sigma1_sq = std::max(0.0, e_rr.v[i] - mu1.v[i] * mu1.v[i]);
            double sigma2_sq = std::max(0.0, e_tt.v[i] - mu2.v[i] * mu2.v[i]);
            const double sigma12 = e_rt.v[i] - mu1.v[i] * mu2.v[i];

            double g = sigma12 / (sigma1_sq + 1e-10);
            double sv_sq = sigma2_sq - g * sigma12;
            if (sigma1_sq < 1e-10) {
                g = 0.0;
                sv_sq = sigma2_sq;
                sigma1_sq = 0.0;
            }
            if (sigma2_sq < 1e-10) {
                g = 0.0;
                sv_sq = 0.0;
            }
            if (g < 0.0) {
                sv_sq = sigma2_sq;
                g = 0.0;
            }
            if (sv_sq <= 1e-10) sv_sq = 1e-10;
            num += std::log10(1.0 + g * g * sigma1_sq / (sv_sq + sigma_nsq));
            den += std::log10(1.0 + sigma1_sq / sigma_nsq);
        }
    }
    if (den == 0.0)
        throw ValidationError("vif: undefined for a zero-variance reference");
    return num / den;
}

std::pair<double, double> roi_metrics(const GrayImage& ref, const GrayImage& test,
                                      const LesionMask& s) {
    require_same_shape(ref, test, "roi_metrics");
    if (ref.height() != s.height() || ref.width() != s.width())
        throw ValidationError("roi_metrics: mask shape mismatch");
    double se = 0.0, ae = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < s.numel(); ++i) {
        if (!s.pixels()[i]) continue;
        const double d = static_cast<double>(ref.pixels()[i]) - static_cast<double>(test.pixels()[i]);
        se += d * d;
        ae += std::abs(d);
        ++count;
    }
    if (count == 0) throw ValidationError("roi_metrics: all-zero mask (guard with has_lesion)");
    return {se / static_cast<double>(count), ae / static_cast<double>(count)};
}

MetricRecord evaluate_pair(const GrayImage& ref, const GrayImage& test, const LesionMask& s,
                           const std::string& sample_id) {
    MetricRecord rec;
    rec.sample_id = sample_id;
    rec.mse = mse(ref, test);
    rec.psnr = psnr(ref, test);
    rec.ssim = ssim(ref, test);
    rec.vif = vif(ref, test);
    if (s.any()) {
        auto [rm, ra] = roi_metrics(ref, test, s);
        rec.roi_mse = rm;
        rec.roi_mae = ra;
    }
    return rec;
}

}  // namespace vce
