#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vce/common.hpp"
#include "vce/tensor.hpp"

namespace vce::nn {

// Learnable tensor with its gradient accumulator.
struct Param {
    Tensor w;
    Tensor g;
    std::string name;

    explicit Param(Tensor init, std::string name_)
        : w(std::move(init)), g(Tensor::zeros_like(w)), name(std::move(name_)) {}
};

// Per-application saved state. Every layer pushes exactly one entry per
// forward call when a tape is supplied; backward consumes entries in reverse.
struct TapeEntry {
    virtual ~TapeEntry() = default;
};
using Tape = std::vector<std::unique_ptr<TapeEntry>>;

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Tape* tape) = 0;
    virtual Tensor backward(const Tensor& dy, TapeEntry& entry) = 0;
    virtual void collect_params(std::vector<Param*>&) {}
    virtual void set_train(bool) {}
};

class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, bool bias,
           const std::string& name);
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
    void collect_params(std::vector<Param*>& out) override;

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Param weight_;
    std::unique_ptr<Param> bias_;
};

// Stride-2 transposed convolution with output_padding 1: exact 2x upsample.
class ConvTranspose2d : public Layer {
public:
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, int out_pad, bool bias,
                    const std::string& name);
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
    void collect_params(std::vector<Param*>& out) override;

private:
    int in_ch_, out_ch_, k_, stride_, pad_, out_pad_;
    Param weight_;  // (in_ch, out_ch, k, k)
    std::unique_ptr<Param> bias_;
};

class ReflectionPad2d : public Layer {
public:
    explicit ReflectionPad2d(int pad) : pad_(pad) {}
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;

private:
    int pad_;
};

// Per-sample, per-channel normalization over the spatial extent; no affine
// parameters, identical behavior in train and eval modes.
class InstanceNorm2d : public Layer {
public:
    explicit InstanceNorm2d(double eps = 1e-5) : eps_(eps) {}
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;

private:
    double eps_;
};

class BatchNorm2d : public Layer {
public:
    BatchNorm2d(int channels, double eps, double momentum, const std::string& name);
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
    void collect_params(std::vector<Param*>& out) override;
    void set_train(bool train) override { train_ = train; }

private:
    int channels_;
    double eps_, momentum_;
    bool train_ = true;
    Param gamma_, beta_;
    std::vector<double> running_mean_, running_var_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;

private:
    float slope_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
};

class Sequential : public Layer {
public:
    Sequential() = default;
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    size_t size() const { return layers_.size(); }

    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
    void collect_params(std::vector<Param*>& out) override;
    void set_train(bool train) override;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + body(x)
class ResidualBlock : public Layer {
public:
    explicit ResidualBlock(std::unique_ptr<Sequential> body) : body_(std::move(body)) {}
    Tensor forward(const Tensor& x, Tape* tape) override;
    Tensor backward(const Tensor& dy, TapeEntry& entry) override;
    void collect_params(std::vector<Param*>& out) override;
    void set_train(bool train) override { body_->set_train(train); }

private:
    std::unique_ptr<Sequential> body_;
};

// A named stack of layers with parameter bookkeeping.
class Network {
public:
    Network() : root_(std::make_unique<Sequential>()) {}
    explicit Network(std::unique_ptr<Sequential> root) : root_(std::move(root)) { index_params(); }

    Tensor forward(const Tensor& x, Tape* tape = nullptr) { return root_->forward(x, tape); }
    Tensor backward(const Tensor& dy, Tape& tape) {
        if (tape.size() != 1) throw ValidationError("Network::backward: malformed tape");
        return root_->backward(dy, *tape[0]);
    }

    const std::vector<Param*>& params() const { return params_; }
    void zero_grad();
    void set_train(bool train) { root_->set_train(train); }

    size_t param_count() const;
    uint64_t param_checksum() const;

    void flatten_params(std::vector<float>& out) const;
    void unflatten_params(std::span<const float> in);
    void flatten_grads(std::vector<double>& out) const;

private:
    void index_params() {
        params_.clear();
        root_->collect_params(params_);
    }

    std::unique_ptr<Sequential> root_;
    std::vector<Param*> params_;
};

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // decoupled
};

class Adam {
public:
    Adam(std::vector<Param*> params, AdamConfig cfg);
    void step();
    void zero_grad();
    long step_count() const { return t_; }

    // Raw state for checkpointing: first-moment blobs, second-moment blobs,
    // then the step counter.
    std::vector<std::vector<float>> state_blobs() const;
    void load_state_blobs(const std::vector<std::vector<float>>& blobs, long t);

private:
    std::vector<Param*> params_;
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace vce::nn
