#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "vce/image.hpp"
#include "vce/model.hpp"
#include "vce/objective.hpp"
#include "vce/preprocess.hpp"

namespace vce {

struct TrainConfig {
    int max_epochs = 200;
    int patience = 50;
    double lr = 1e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 1;  // toy preset: 4
    LossWeights weights;
    int replay_buffer_size = 50;
    uint64_t seed = 0;
    bool pretrain = false;  // forces gamma = 0

    void validate() const;
    // Weights actually applied: pretraining zeroes the localized weight.
    LossWeights effective_weights() const {
        LossWeights w = weights;
        if (pretrain) w.gamma = 0.0;
        return w;
    }
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown train_mean;
    double val_objective = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;    // 1-based; 0 when no epoch completed
    int stopped_epoch = 0;
    bool aborted = false;  // non-finite loss; best parameters were retained
};

// Strict-improvement early stopping shared by the training loop and the
// trace-level tests.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Feed one epoch's validation value; returns true when training should
    // stop after this epoch.
    bool observe(int epoch, double val) {
        if (val < best_) {
            best_ = val;
            best_epoch_ = epoch;
            return false;
        }
        return epoch - best_epoch_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

private:
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
};

// Replays the trace through the stopper: returns (best_epoch, stopped_epoch).
std::pair<int, int> simulate_early_stopping(const std::vector<double>& val_trace, int patience);

// History of previously generated fakes fed to the discriminators. With
// capacity 0 every query returns the current fake; occupancy never exceeds
// the capacity.
class ImagePool {
public:
    ImagePool(int capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {}

    Tensor query(const Tensor& fake_batch);
    size_t size() const { return buffer_.size(); }

    std::string rng_state() const { return rng_.state(); }

private:
    int capacity_;
    Rng rng_;
    std::vector<Tensor> buffer_;
};

struct BatchTensors {
    Tensor x, y, s;
};

// Assembles a batch in network space: optional paired augmentation (one
// deterministic stream per (seed, epoch, index)), then [0,1] -> [-1,1].
BatchTensors make_batch(const std::vector<PairedSample>& data, const std::vector<int>& indices,
                        const AugmentPolicy* augment, uint64_t seed, int epoch);

// One sample of a network-space batch back to a metric-space [0,1] image.
GrayImage tensor_slice_to_unit_image(const Tensor& t, int index);

// Mean generator objective over the validation set, evaluation mode,
// discriminators frozen.
double validate_epoch(ModelBundle& bundle, const std::vector<PairedSample>& val_set,
                      const LossWeights& weights, int batch_size = 1);

// Alternating adversarial optimization with replay buffers, per-epoch
// validation and strict-improvement early stopping. The best checkpoint is
// written to checkpoint_path and the bundle holds the best parameters on
// return.
TrainHistory train(ModelBundle& bundle, const std::vector<PairedSample>& train_set,
                   const std::vector<PairedSample>& val_set, const TrainConfig& cfg,
                   const AugmentPolicy& augment, const std::filesystem::path& checkpoint_path);

// Loads checkpoint parameters into a config-compatible bundle; optimizer
// state starts fresh.
void warm_start(ModelBundle& bundle, const std::filesystem::path& checkpoint);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace vce
