#include "vce/image.hpp"

namespace vce {

GrayImage rescale(const GrayImage& img, ValueRange from, ValueRange to) {
    if (from.width() == 0.0f)
        throw ValidationError("rescale: degenerate source range");
    for (float v : img.pixels()) {
        if (!from.contains(v))
            throw ValidationError("rescale: pixel outside source range");
    }
    const float scale = to.width() / from.width();
    std::vector<float> out(img.numel());
    const auto& in = img.pixels();
    for (size_t i = 0; i < in.size(); ++i) {
        float v = to.lo + (in[i] - from.lo) * scale;
        // Affine endpoint arithmetic can overshoot by one ulp; the declared
        // range is a hard invariant, so clamp.
        if (v < to.lo) v = to.lo;
        if (v > to.hi) v = to.hi;
        out[i] = v;
    }
    return GrayImage(img.height(), img.width(), to, std::move(out));
}

}  // namespace vce
