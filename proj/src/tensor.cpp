#include "vce/tensor.hpp"

#include <cmath>

namespace vce {

double tensor_sum(const Tensor& t) {
    double acc = 0.0;
    for (float x : t.v) acc += x;
    return acc;
}

bool tensor_all_finite(const Tensor& t) {
    for (float x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace vce
