#pragma once

#include <optional>
#include <string>
#include <utility>

#include "vce/image.hpp"

namespace vce {

// Full-reference metrics for one evaluated pair. ROI fields are present only
// when the sample's mask is nonzero.
struct MetricRecord {
    double mse = 0.0;
    double psnr = 0.0;  // decibels, capped at 100 for identical images
    double vif = 0.0;
    double ssim = 0.0;
    std::optional<double> roi_mse;
    std::optional<double> roi_mae;
    std::string sample_id;
};

constexpr double kPsnrCap = 100.0;

double mse(const GrayImage& ref, const GrayImage& test);

double psnr(const GrayImage& ref, const GrayImage& test, double max_val = 1.0);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), k1=0.01,
// k2=0.03, dynamic range L=1. Symmetric in its arguments.
double ssim(const GrayImage& ref, const GrayImage& test);

// Pixel-domain visual information fidelity over a Gaussian scale space.
// Scales whose filtered maps become empty contribute nothing; a reference
// with no variance at any scale is undefined and rejected.
double vif(const GrayImage& ref, const GrayImage& test, int scales = 4, double sigma_nsq = 2.0);

// Mean squared / absolute error over masked pixels only.
std::pair<double, double> roi_metrics(const GrayImage& ref, const GrayImage& test,
                                      const LesionMask& s);

// Convenience: full record for one pair; ROI metrics when the mask is nonzero.
MetricRecord evaluate_pair(const GrayImage& ref, const GrayImage& test, const LesionMask& s,
                           const std::string& sample_id);

}  // namespace vce
