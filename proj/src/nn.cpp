#include "vce/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace vce::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

// Gathers sliding-window patches over a (gh x gw) position grid:
//   cols[(c, ky, kx), (i, j)] = src[c, i*stride - pad + ky, j*stride - pad + kx]
// with zero for out-of-bounds taps. src is C x H x W.
void im2col(const float* src, int C, int H, int W, int k, int stride, int pad, int gh, int gw,
            float* cols) {
    const size_t grid = static_cast<size_t>(gh) * gw;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const float* plane = src + static_cast<size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                float* dst = cols + row * grid;
                for (int i = 0; i < gh; ++i) {
                    const int y = i * stride - pad + ky;
                    if (y < 0 || y >= H) {
                        std::memset(dst + static_cast<size_t>(i) * gw, 0, sizeof(float) * gw);
                        continue;
                    }
                    const float* srow = plane + static_cast<size_t>(y) * W;
                    float* drow = dst + static_cast<size_t>(i) * gw;
                    for (int j = 0; j < gw; ++j) {
                        const int x = j * stride - pad + kx;
                        drow[j] = (x >= 0 && x < W) ? srow[x] : 0.0f;
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
void col2im(const float* cols, int C, int H, int W, int k, int stride, int pad, int gh, int gw,
            float* dst) {
    const size_t grid = static_cast<size_t>(gh) * gw;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        float* plane = dst + static_cast<size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const float* srcrow = cols + row * grid;
                for (int i = 0; i < gh; ++i) {
                    const int y = i * stride - pad + ky;
                    if (y < 0 || y >= H) continue;
                    float* drow = plane + static_cast<size_t>(y) * W;
                    for (int j = 0; j < gw; ++j) {
                        const int x = j * stride - pad + kx;
                        if (x >= 0 && x < W) drow[x] += srcrow[static_cast<size_t>(i) * gw + j];
                    }
                }
            }
        }
    }
}

int conv_out_dim(int in, int k, int stride, int pad) {
    const int out = (in + 2 * pad - k) / stride + 1;
    if (out < 1) throw ValidationError("conv: output dimension collapsed to zero");
    return out;
}

struct ConvEntry : TapeEntry {
    Tensor input;
};

struct NormEntry : TapeEntry {
    Tensor xhat;
    std::vector<float> inv;  // one inverse std per normalized group
};

struct ActEntry : TapeEntry {
    Tensor output;
};

struct EmptyEntry : TapeEntry {};

struct SeqEntry : TapeEntry {
    Tape sub;
};

struct ResEntry : TapeEntry {
    Tape sub;
};

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, bool bias,
               const std::string& name)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(Tensor(out_ch, in_ch, kernel, kernel), name + ".w") {
    if (bias) bias_ = std::make_unique<Param>(Tensor(1, out_ch, 1, 1), name + ".b");
}

Tensor Conv2d::forward(const Tensor& x, Tape* tape) {
    if (x.c != in_ch_) throw ValidationError("Conv2d: channel mismatch");
    const int oh = conv_out_dim(x.h, k_, stride_, pad_);
    const int ow = conv_out_dim(x.w, k_, stride_, pad_);
    const int ckk = in_ch_ * k_ * k_;
    const size_t grid = static_cast<size_t>(oh) * ow;

    Tensor y(x.n, out_ch_, oh, ow);
    std::vector<float> cols(static_cast<size_t>(ckk) * grid);
    for (int n = 0; n < x.n; ++n) {
        im2col(x.data() + static_cast<size_t>(n) * in_ch_ * x.h * x.w, in_ch_, x.h, x.w, k_,
               stride_, pad_, oh, ow, cols.data());
        Map out(y.data() + static_cast<size_t>(n) * out_ch_ * grid, out_ch_,
                static_cast<Eigen::Index>(grid));
        CMap wm(weight_.w.data(), out_ch_, ckk);
        CMap cm(cols.data(), ckk, static_cast<Eigen::Index>(grid));
        out.noalias() = wm * cm;
        if (bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                float* row = y.data() + (static_cast<size_t>(n) * out_ch_ + oc) * grid;
                const float b = bias_->w.v[static_cast<size_t>(oc)];
                for (size_t i = 0; i < grid; ++i) row[i] += b;
            }
        }
    }
    if (tape) {
        auto e = std::make_unique<ConvEntry>();
        e->input = x;
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, TapeEntry& entry) {
    const Tensor& x = static_cast<ConvEntry&>(entry).input;
    const int oh = dy.h, ow = dy.w;
    const int ckk = in_ch_ * k_ * k_;
    const size_t grid = static_cast<size_t>(oh) * ow;

    Tensor dx = Tensor::zeros_like(x);
    std::vector<float> cols(static_cast<size_t>(ckk) * grid);
    std::vector<float> dcols(static_cast<size_t>(ckk) * grid);
    for (int n = 0; n < x.n; ++n) {
        im2col(x.data() + static_cast<size_t>(n) * in_ch_ * x.h * x.w, in_ch_, x.h, x.w, k_,
               stride_, pad_, oh, ow, cols.data());
        CMap dym(dy.data() + static_cast<size_t>(n) * out_ch_ * grid, out_ch_,
                 static_cast<Eigen::Index>(grid));
        CMap cm(cols.data(), ckk, static_cast<Eigen::Index>(grid));
        Map dwm(weight_.g.data(), out_ch_, ckk);
        dwm.noalias() += dym * cm.transpose();
        if (bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                const float* row = dy.data() + (static_cast<size_t>(n) * out_ch_ + oc) * grid;
                double acc = 0.0;
                for (size_t i = 0; i < grid; ++i) acc += row[i];
                bias_->g.v[static_cast<size_t>(oc)] += static_cast<float>(acc);
            }
        }
        CMap wm(weight_.w.data(), out_ch_, ckk);
        Map dcm(dcols.data(), ckk, static_cast<Eigen::Index>(grid));
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcols.data(), in_ch_, x.h, x.w, k_, stride_, pad_, oh, ow,
               dx.data() + static_cast<size_t>(n) * in_ch_ * x.h * x.w);
    }
    return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(bias_.get());
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad,
                                 int out_pad, bool bias, const std::string& name)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      out_pad_(out_pad),
      weight_(Tensor(in_ch, out_ch, kernel, kernel), name + ".w") {
    if (bias) bias_ = std::make_unique<Param>(Tensor(1, out_ch, 1, 1), name + ".b");
}

Tensor ConvTranspose2d::forward(const Tensor& x, Tape* tape) {
    if (x.c != in_ch_) throw ValidationError("ConvTranspose2d: channel mismatch");
    const int oh = (x.h - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
    const int ow = (x.w - 1) * stride_ - 2 * pad_ + k_ + out_pad_;
    const int ckk = out_ch_ * k_ * k_;
    const size_t grid = static_cast<size_t>(x.h) * x.w;
    const size_t oplane = static_cast<size_t>(oh) * ow;

    Tensor y(x.n, out_ch_, oh, ow);
    std::vector<float> cols(static_cast<size_t>(ckk) * grid);
    for (int n = 0; n < x.n; ++n) {
        CMap wm(weight_.w.data(), in_ch_, ckk);
        CMap xm(x.data() + static_cast<size_t>(n) * in_ch_ * grid, in_ch_,
                static_cast<Eigen::Index>(grid));
        Map cm(cols.data(), ckk, static_cast<Eigen::Index>(grid));
        cm.noalias() = wm.transpose() * xm;
        float* yplane = y.data() + static_cast<size_t>(n) * out_ch_ * oplane;
        col2im(cols.data(), out_ch_, oh, ow, k_, stride_, pad_, x.h, x.w, yplane);
        if (bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                float* row = yplane + static_cast<size_t>(oc) * oplane;
                const float b = bias_->w.v[static_cast<size_t>(oc)];
                for (size_t i = 0; i < oplane; ++i) row[i] += b;
            }
        }
    }
    if (tape) {
        auto e = std::make_unique<ConvEntry>();
        e->input = x;
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy, TapeEntry& entry) {
    const Tensor& x = static_cast<ConvEntry&>(entry).input;
    const int ckk = out_ch_ * k_ * k_;
    const size_t grid = static_cast<size_t>(x.h) * x.w;
    const size_t oplane = static_cast<size_t>(dy.h) * dy.w;

    Tensor dx(x.n, in_ch_, x.h, x.w);
    std::vector<float> dcols(static_cast<size_t>(ckk) * grid);
    for (int n = 0; n < x.n; ++n) {
        im2col(dy.data() + static_cast<size_t>(n) * out_ch_ * oplane, out_ch_, dy.h, dy.w, k_,
               stride_, pad_, x.h, x.w, dcols.data());
        CMap dcm(dcols.data(), ckk, static_cast<Eigen::Index>(grid));
        CMap wm(weight_.w.data(), in_ch_, ckk);
        Map dxm(dx.data() + static_cast<size_t>(n) * in_ch_ * grid, in_ch_,
                static_cast<Eigen::Index>(grid));
        dxm.noalias() = wm * dcm;
        CMap xm(x.data() + static_cast<size_t>(n) * in_ch_ * grid, in_ch_,
                static_cast<Eigen::Index>(grid));
        Map dwm(weight_.g.data(), in_ch_, ckk);
        dwm.noalias() += xm * dcm.transpose();
        if (bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                const float* row = dy.data() + (static_cast<size_t>(n) * out_ch_ + oc) * oplane;
                double acc = 0.0;
                for (size_t i = 0; i < oplane; ++i) acc += row[i];
                bias_->g.v[static_cast<size_t>(oc)] += static_cast<float>(acc);
            }
        }
    }
    return dx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(bias_.get());
}

// ---------------------------------------------------------------------------
// ReflectionPad2d

namespace {
inline int reflect_index(int t, int n) {
    if (t < 0) return -t;
    if (t >= n) return 2 * n - 2 - t;
    return t;
}
}  // namespace

Tensor ReflectionPad2d::forward(const Tensor& x, Tape* tape) {
    if (pad_ >= x.h || pad_ >= x.w)
        throw ValidationError("ReflectionPad2d: pad must be smaller than the spatial extent");
    Tensor y(x.n, x.c, x.h + 2 * pad_, x.w + 2 * pad_);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c)
            for (int oy = 0; oy < y.h; ++oy) {
                const int sy = reflect_index(oy - pad_, x.h);
                for (int ox = 0; ox < y.w; ++ox)
                    y.at(n, c, oy, ox) = x.at(n, c, sy, reflect_index(ox - pad_, x.w));
            }
    if (tape) tape->push_back(std::make_unique<EmptyEntry>());
    return y;
}

Tensor ReflectionPad2d::backward(const Tensor& dy, TapeEntry&) {
    Tensor dx(dy.n, dy.c, dy.h - 2 * pad_, dy.w - 2 * pad_);
    for (int n = 0; n < dy.n; ++n)
        for (int c = 0; c < dy.c; ++c)
            for (int oy = 0; oy < dy.h; ++oy) {
                const int sy = reflect_index(oy - pad_, dx.h);
                for (int ox = 0; ox < dy.w; ++ox)
                    dx.at(n, c, sy, reflect_index(ox - pad_, dx.w)) += dy.at(n, c, oy, ox);
            }
    return dx;
}

// ---------------------------------------------------------------------------
// InstanceNorm2d

Tensor InstanceNorm2d::forward(const Tensor& x, Tape* tape) {
    const size_t m = static_cast<size_t>(x.h) * x.w;
    if (m < 2) throw ValidationError("InstanceNorm2d: spatial extent too small");
    Tensor y = Tensor::zeros_like(x);
    std::vector<float> invs(static_cast<size_t>(x.n) * x.c);
    for (int n = 0; n < x.n; ++n) {
        for (int c = 0; c < x.c; ++c) {
            const float* src = x.data() + (static_cast<size_t>(n) * x.c + c) * m;
            float* dst = y.data() + (static_cast<size_t>(n) * x.c + c) * m;
            double mean = 0.0;
            for (size_t i = 0; i < m; ++i) mean += src[i];
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<double>(m);
            const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
            invs[static_cast<size_t>(n) * x.c + c] = inv;
            const float mu = static_cast<float>(mean);
            for (size_t i = 0; i < m; ++i) dst[i] = (src[i] - mu) * inv;
        }
    }
    if (tape) {
        auto e = std::make_unique<NormEntry>();
        e->xhat = y;
        e->inv = std::move(invs);
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor InstanceNorm2d::backward(const Tensor& dy, TapeEntry& entry) {
    const auto& e = static_cast<NormEntry&>(entry);
    const size_t m = static_cast<size_t>(dy.h) * dy.w;
    Tensor dx = Tensor::zeros_like(dy);
    for (int n = 0; n < dy.n; ++n) {
        for (int c = 0; c < dy.c; ++c) {
            const size_t off = (static_cast<size_t>(n) * dy.c + c) * m;
            const float* g = dy.data() + off;
            const float* xh = e.xhat.data() + off;
            float* out = dx.data() + off;
            double s1 = 0.0, s2 = 0.0;
            for (size_t i = 0; i < m; ++i) {
                s1 += g[i];
                s2 += g[i] * xh[i];
            }
            const float mean_g = static_cast<float>(s1 / static_cast<double>(m));
            const float mean_gx = static_cast<float>(s2 / static_cast<double>(m));
            const float inv = e.inv[static_cast<size_t>(n) * dy.c + c];
            for (size_t i = 0; i < m; ++i) out[i] = inv * (g[i] - mean_g - xh[i] * mean_gx);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum, const std::string& name)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(Tensor(1, channels, 1, 1, 1.0f), name + ".gamma"),
      beta_(Tensor(1, channels, 1, 1, 0.0f), name + ".beta"),
      running_mean_(static_cast<size_t>(channels), 0.0),
      running_var_(static_cast<size_t>(channels), 1.0) {}

Tensor BatchNorm2d::forward(const Tensor& x, Tape* tape) {
    if (x.c != channels_) throw ValidationError("BatchNorm2d: channel mismatch");
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const size_t m = static_cast<size_t>(x.n) * plane;
    if (m < 2) throw ValidationError("BatchNorm2d: batch too small");
    Tensor y = Tensor::zeros_like(x);
    std::vector<float> invs(static_cast<size_t>(channels_));
    Tensor xhat;
    if (tape) xhat = Tensor::zeros_like(x);

    for (int c = 0; c < channels_; ++c) {
        double mean, var;
        if (train_) {
            double acc = 0.0;
            for (int n = 0; n < x.n; ++n) {
                const float* src = x.data() + (static_cast<size_t>(n) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i) acc += src[i];
            }
            mean = acc / static_cast<double>(m);
            double vacc = 0.0;
            for (int n = 0; n < x.n; ++n) {
                const float* src = x.data() + (static_cast<size_t>(n) * channels_ + c) * plane;
                for (size_t i = 0; i < plane; ++i) vacc += (src[i] - mean) * (src[i] - mean);
            }
            var = vacc / static_cast<double>(m);
            running_mean_[static_cast<size_t>(c)] =
                (1.0 - momentum_) * running_mean_[static_cast<size_t>(c)] + momentum_ * mean;
            const double var_unbiased = vacc / static_cast<double>(m - 1);
            running_var_[static_cast<size_t>(c)] =
                (1.0 - momentum_) * running_var_[static_cast<size_t>(c)] + momentum_ * var_unbiased;
        } else {
            mean = running_mean_[static_cast<size_t>(c)];
            var = running_var_[static_cast<size_t>(c)];
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
        invs[static_cast<size_t>(c)] = inv;
        const float mu = static_cast<float>(mean);
        const float ga = gamma_.w.v[static_cast<size_t>(c)];
        const float be = beta_.w.v[static_cast<size_t>(c)];
        for (int n = 0; n < x.n; ++n) {
            const size_t off = (static_cast<size_t>(n) * channels_ + c) * plane;
            const float* src = x.data() + off;
            float* dst = y.data() + off;
            float* xh = tape ? xhat.data() + off : nullptr;
            for (size_t i = 0; i < plane; ++i) {
                const float h = (src[i] - mu) * inv;
                if (xh) xh[i] = h;
                dst[i] = ga * h + be;
            }
        }
    }
    if (tape) {
        if (!train_)
            throw ValidationError("BatchNorm2d: training tape requested in eval mode");
        auto e = std::make_unique<NormEntry>();
        e->xhat = std::move(xhat);
        e->inv = std::move(invs);
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, TapeEntry& entry) {
    const auto& e = static_cast<NormEntry&>(entry);
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    const size_t m = static_cast<size_t>(dy.n) * plane;
    Tensor dx = Tensor::zeros_like(dy);
    for (int c = 0; c < channels_; ++c) {
        double s1 = 0.0, s2 = 0.0;
        for (int n = 0; n < dy.n; ++n) {
            const size_t off = (static_cast<size_t>(n) * channels_ + c) * plane;
            const float* g = dy.data() + off;
            const float* xh = e.xhat.data() + off;
            for (size_t i = 0; i < plane; ++i) {
                s1 += g[i];
                s2 += g[i] * xh[i];
            }
        }
        beta_.g.v[static_cast<size_t>(c)] += static_cast<float>(s1);
        gamma_.g.v[static_cast<size_t>(c)] += static_cast<float>(s2);
        const float mean_g = static_cast<float>(s1 / static_cast<double>(m));
        const float mean_gx = static_cast<float>(s2 / static_cast<double>(m));
        const float scale = gamma_.w.v[static_cast<size_t>(c)] * e.inv[static_cast<size_t>(c)];
        for (int n = 0; n < dy.n; ++n) {
            const size_t off = (static_cast<size_t>(n) * channels_ + c) * plane;
            const float* g = dy.data() + off;
            const float* xh = e.xhat.data() + off;
            float* out = dx.data() + off;
            for (size_t i = 0; i < plane; ++i)
                out[i] = scale * (g[i] - mean_g - xh[i] * mean_gx);
        }
    }
    return dx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x, Tape* tape) {
    Tensor y = x;
    for (float& v : y.v) v = v > 0.0f ? v : 0.0f;
    if (tape) {
        auto e = std::make_unique<ActEntry>();
        e->output = y;
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor ReLU::backward(const Tensor& dy, TapeEntry& entry) {
    const auto& e = static_cast<ActEntry&>(entry);
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (e.output.v[i] <= 0.0f) dx.v[i] = 0.0f;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, Tape* tape) {
    Tensor y = x;
    for (float& v : y.v) v = v > 0.0f ? v : slope_ * v;
    if (tape) {
        auto e = std::make_unique<ActEntry>();
        e->output = y;
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, TapeEntry& entry) {
    const auto& e = static_cast<ActEntry&>(entry);
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (e.output.v[i] <= 0.0f) dx.v[i] *= slope_;
    return dx;
}

Tensor Tanh::forward(const Tensor& x, Tape* tape) {
    Tensor y = x;
    for (float& v : y.v) v = std::tanh(v);
    if (tape) {
        auto e = std::make_unique<ActEntry>();
        e->output = y;
        tape->push_back(std::move(e));
    }
    return y;
}

Tensor Tanh::backward(const Tensor& dy, TapeEntry& entry) {
    const auto& e = static_cast<ActEntry&>(entry);
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= 1.0f - e.output.v[i] * e.output.v[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Containers

Tensor Sequential::forward(const Tensor& x, Tape* tape) {
    if (!tape) {
        Tensor cur = x;
        for (auto& layer : layers_) cur = layer->forward(cur, nullptr);
        return cur;
    }
    auto e = std::make_unique<SeqEntry>();
    e->sub.reserve(layers_.size());
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, &e->sub);
    tape->push_back(std::move(e));
    return cur;
}

Tensor Sequential::backward(const Tensor& dy, TapeEntry& entry) {
    auto& e = static_cast<SeqEntry&>(entry);
    if (e.sub.size() != layers_.size())
        throw ValidationError("Sequential::backward: tape does not match layer count");
    Tensor cur = dy;
    for (size_t i = layers_.size(); i > 0; --i) cur = layers_[i - 1]->backward(cur, *e.sub[i - 1]);
    return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::set_train(bool train) {
    for (auto& layer : layers_) layer->set_train(train);
}

Tensor ResidualBlock::forward(const Tensor& x, Tape* tape) {
    if (!tape) {
        Tensor body = body_->forward(x, nullptr);
        Tensor y = x;
        for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += body.v[i];
        return y;
    }
    auto e = std::make_unique<ResEntry>();
    Tensor body = body_->forward(x, &e->sub);
    tape->push_back(std::move(e));
    Tensor y = x;
    for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += body.v[i];
    return y;
}

Tensor ResidualBlock::backward(const Tensor& dy, TapeEntry& entry) {
    auto& e = static_cast<ResEntry&>(entry);
    Tensor dbody = body_->backward(dy, *e.sub[0]);
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dbody.v[i];
    return dx;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) { body_->collect_params(out); }

// ---------------------------------------------------------------------------
// Network

void Network::zero_grad() {
    for (Param* p : params_) std::fill(p->g.v.begin(), p->g.v.end(), 0.0f);
}

size_t Network::param_count() const {
    size_t n = 0;
    for (const Param* p : params_) n += p->w.numel();
    return n;
}

uint64_t Network::param_checksum() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const Param* p : params_) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->w.v.data());
        const size_t len = p->w.v.size() * sizeof(float);
        for (size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void Network::flatten_params(std::vector<float>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const Param* p : params_) out.insert(out.end(), p->w.v.begin(), p->w.v.end());
}

void Network::unflatten_params(std::span<const float> in) {
    if (in.size() != param_count())
        throw ValidationError("Network::unflatten_params: size mismatch");
    size_t off = 0;
    for (Param* p : params_) {
        std::copy(in.begin() + static_cast<long>(off),
                  in.begin() + static_cast<long>(off + p->w.v.size()), p->w.v.begin());
        off += p->w.v.size();
    }
}

void Network::flatten_grads(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const Param* p : params_)
        for (float g : p->g.v) out.push_back(static_cast<double>(g));
}

// ---------------------------------------------------------------------------
// Adam (decoupled weight decay)

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
        m_.emplace_back(p->w.v.size(), 0.0f);
        v_.emplace_back(p->w.v.size(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param& p = *params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p.w.v.size(); ++i) {
            const double g = p.g.v[i];
            const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double w = p.w.v[i];
            p.w.v[i] = static_cast<float>(w - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) -
                                          cfg_.lr * cfg_.weight_decay * w);
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) std::fill(p->g.v.begin(), p->g.v.end(), 0.0f);
}

std::vector<std::vector<float>> Adam::state_blobs() const {
    std::vector<std::vector<float>> blobs;
    blobs.reserve(m_.size() + v_.size());
    for (const auto& m : m_) blobs.push_back(m);
    for (const auto& v : v_) blobs.push_back(v);
    return blobs;
}

void Adam::load_state_blobs(const std::vector<std::vector<float>>& blobs, long t) {
    if (blobs.size() != m_.size() + v_.size())
        throw ValidationError("Adam::load_state_blobs: blob count mismatch");
    for (size_t i = 0; i < m_.size(); ++i) {
        if (blobs[i].size() != m_[i].size())
            throw ValidationError("Adam::load_state_blobs: blob size mismatch");
        m_[i] = blobs[i];
    }
    for (size_t i = 0; i < v_.size(); ++i) {
        if (blobs[m_.size() + i].size() != v_[i].size())
            throw ValidationError("Adam::load_state_blobs: blob size mismatch");
        v_[i] = blobs[m_.size() + i];
    }
    t_ = t;
}

}  // namespace vce::nn
