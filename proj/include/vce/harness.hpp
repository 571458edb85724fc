#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vce/model.hpp"
#include "vce/phantom.hpp"
#include "vce/quality.hpp"
#include "vce/trainer.hpp"

namespace vce {

// Patient-level fold assignment, stratified on lesion presence: per-fold
// lesion-patient counts differ by at most one and every patient sits in
// exactly one fold.
struct FoldPlan {
    int n_folds = 10;
    uint64_t seed = 0;
    std::map<std::string, int> assignments;  // patient_id -> fold
};

FoldPlan make_folds(const std::vector<ManifestRow>& manifest, int n_folds, uint64_t seed);

// Sample indices (into the manifest order) for one rotation: fold r is the
// test set, fold r+1 the validation set, the rest trains. A two-fold plan has
// no third fold, so validation is carved stratified out of the train fold.
struct FoldSplit {
    std::vector<int> train, val, test;
};

FoldSplit rotation_split(const FoldPlan& plan, const std::vector<ManifestRow>& manifest,
                         int rotation);

// Per-sample evaluation rows for one trained (gamma, rotation) cell.
struct FoldFragment {
    int rotation = 0;
    double gamma = 0.0;
    bool failed = false;
    std::vector<MetricRecord> records;
};

// Mean of one metric over a fragment's records; ROI fields skip samples
// without lesions.
struct FragmentMeans {
    double mse = 0, psnr = 0, vif = 0, ssim = 0;
    double roi_mse = 0, roi_mae = 0;
    int n = 0, roi_n = 0;
};
FragmentMeans fragment_means(const FoldFragment& fragment);

// Evaluates a trained bundle on the test samples: synthesizes the target
// domain from each source image, maps back to [0,1] and computes the metric
// record (ROI metrics when the sample has a lesion).
std::vector<MetricRecord> evaluate_split(ModelBundle& bundle,
                                         const std::vector<PairedSample>& test_set);

// Trains one rotation and evaluates its test split.
struct RunFoldInputs {
    const std::vector<PairedSample>* data = nullptr;  // preprocessed samples
    FoldSplit split;
    NetConfig net;
    TrainConfig train_cfg;
    AugmentPolicy augment;
    std::filesystem::path checkpoint_path;
    std::filesystem::path warm_start_checkpoint;  // empty = cold start
    uint64_t bundle_seed = 0;
};
FoldFragment run_fold(const RunFoldInputs& in, int rotation, TrainHistory* history_out = nullptr);

// Table-style aggregate across fold fragments, one row per gamma variant:
// mean +/- population std over the per-fold means, displayed as
// MSE x 10^-2, PSNR (dB), VIF x 10^-2, SSIM x 10^-2, two decimals, best value
// per column flagged.
struct AggregateCell {
    double mean = 0, std_dev = 0;
    bool best = false;
};
struct AggregateRow {
    double gamma = 0;
    bool baseline = false;  // the gamma = 0 variant
    AggregateCell mse, psnr, vif, ssim;
    int folds = 0;
};
struct AggregateReport {
    std::vector<AggregateRow> rows;
    std::string text;  // aligned table
    std::string csv;   // long format: variant,fold,metric,value
};

AggregateReport aggregate(const std::vector<FoldFragment>& fragments,
                          const std::vector<double>& gammas);

// Absolute-difference heatmap (monotone black-red-yellow-white map over
// [0,1]) with the mask's tight bounding box outlined when a lesion exists.
void heatmap(const GrayImage& ref, const GrayImage& test, const LesionMask& s,
             const std::filesystem::path& out);

// Per-sample metric rows for one cell; schema documented in the README.
void write_metrics_csv(const std::vector<MetricRecord>& records,
                       const std::filesystem::path& path);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace vce
