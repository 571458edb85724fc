#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vce/harness.hpp"
#include "vce/model.hpp"
#include "vce/phantom.hpp"
#include "vce/preprocess.hpp"
#include "vce/trainer.hpp"

namespace vce {

// Single structured configuration behind every CLI command. Every field has
// a default; unknown keys are rejected; an echo of the effective values is
// written next to each command's outputs.
struct RunConfig {
    std::filesystem::path out_dir = "runs";
    int preprocess_size = 256;
    PhantomConfig phantom;
    AugmentPolicy augment;
    NetConfig net;
    TrainConfig train;
    std::vector<double> gamma_grid = {0.0, 35.0, 100.0};
    int n_folds = 10;
    uint64_t fold_seed = 0;

    void validate() const;

    std::filesystem::path dataset_dir() const { return out_dir / "dataset"; }
    std::filesystem::path cell_dir(double gamma, int fold) const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical echo of the effective configuration (defaults filled in).
std::string dump_run_config(const RunConfig& cfg);

}  // namespace vce
