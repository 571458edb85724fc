#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "vce/nn.hpp"

namespace vce {

// Architecture preset shared by generators and discriminators.
struct NetConfig {
    int image_size = 256;
    int base_channels = 64;
    int n_res_blocks = 9;
    int disc_layers = 3;
    enum class Norm { instance, batch } norm = Norm::instance;

    // Scaled-down preset that trains on desk hardware.
    static NetConfig toy() { return NetConfig{64, 16, 4, 3, Norm::instance}; }
    // Minimal preset small enough for finite-difference sweeps.
    static NetConfig micro() { return NetConfig{16, 2, 1, 1, Norm::instance}; }

    void validate() const;
    bool operator==(const NetConfig&) const = default;
};

// The two generators and two discriminators; G maps X->Y, F maps Y->X,
// Dy scores domain-Y images, Dx scores domain-X images.
struct ModelBundle {
    NetConfig config;
    nn::Network G, F, Dx, Dy;

    // Forward passes without a tape, in the networks' current mode.
    Tensor apply_G(const Tensor& t) { return G.forward(t); }
    Tensor apply_F(const Tensor& t) { return F.forward(t); }
    Tensor apply_Dx(const Tensor& t) { return Dx.forward(t); }
    Tensor apply_Dy(const Tensor& t) { return Dy.forward(t); }

    void set_train(bool train) {
        G.set_train(train);
        F.set_train(train);
        Dx.set_train(train);
        Dy.set_train(train);
    }
};

// Deterministic construction: identical (cfg, seed) yields identical weights.
ModelBundle build_bundle(const NetConfig& cfg, uint64_t init_seed);

// Spatial size of the discriminator's patch score map for a given input size.
std::pair<int, int> disc_patch_dims(const NetConfig& cfg, int input_size);

// Inference entry points; both force evaluation mode and validate the input
// contract (shape per config, generator inputs within [-1, 1]).
Tensor translate(nn::Network& gen, const NetConfig& cfg, const Tensor& batch);
Tensor discriminate(nn::Network& disc, const NetConfig& cfg, const Tensor& batch);

// Self-describing checkpoint container: config echo, per-network parameter
// blobs, optional optimizer state, epoch counter and RNG stream states.
struct CheckpointExtras {
    int epoch = 0;
    std::map<std::string, std::string> rng_states;
    bool has_optimizer = false;
    long opt_g_t = 0, opt_d_t = 0;
    std::vector<std::vector<float>> opt_g_blobs, opt_d_blobs;
};

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     const CheckpointExtras& extras = {});

// Loads parameters (and returns the extras) into an existing bundle whose
// config must match the checkpoint's echo.
CheckpointExtras load_checkpoint(ModelBundle& bundle, const std::filesystem::path& path);

}  // namespace vce
