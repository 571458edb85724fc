#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "vce/common.hpp"

namespace vce {

// Dense NCHW float32 tensor.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_), v(numel_of(n_, c_, h_, w_), fill) {}

    static size_t numel_of(int n, int c, int h, int w) {
        if (n < 0 || c < 0 || h < 0 || w < 0) throw ValidationError("Tensor: negative dimension");
        return static_cast<size_t>(n) * c * h * w;
    }

    size_t numel() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::array<int, 4> shape() const { return {n, c, h, w}; }

    float& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    float at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }
};

// Sequential double-precision sum; reductions share this accumulation order.
double tensor_sum(const Tensor& t);

bool tensor_all_finite(const Tensor& t);

}  // namespace vce
