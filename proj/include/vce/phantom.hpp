#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vce/image.hpp"

namespace vce {

// Deterministic synthetic paired-sample generator: the source domain shows a
// textured background with faint lesions, the target domain the same lesions
// at high contrast over a suppressed background. Identical config + seed
// yields a bitwise-identical dataset.
struct PhantomConfig {
    uint64_t seed = 7;
    int image_size = 64;
    int n_samples = 200;
    double lesion_prob = 0.5;
    int lesion_count_min = 1;
    int lesion_count_max = 3;
    double lesion_radius_min = 3.0;
    double lesion_radius_max = 10.0;
    double background_texture_scale = 0.12;
    double le_lesion_contrast = 0.18;        // (0, 0.3]
    double des_lesion_contrast = 0.65;       // [0.5, 1.0]
    double des_background_suppression = 0.85;  // [0, 1]
    // Consecutive samples sharing one patient_id; 1 = one patient per sample.
    int patients_group_size = 1;

    void validate() const;
};

PairedSample generate_sample(const PhantomConfig& cfg, int index);

struct ManifestRow {
    std::string path_x;
    std::string path_y;
    std::string path_s;  // empty when the sample has no mask file
    std::string patient_id;
    bool has_lesion = false;
};

// Writes n_samples portable-float triples plus manifest.csv into out_dir and
// returns the manifest rows. Paths in the manifest are relative to out_dir.
std::vector<ManifestRow> generate_dataset(const PhantomConfig& cfg,
                                          const std::filesystem::path& out_dir);

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Loads the sample behind one manifest row (paths resolved against base_dir).
PairedSample load_manifest_sample(const ManifestRow& row, const std::filesystem::path& base_dir);

}  // namespace vce
