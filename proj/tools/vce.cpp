// Command-line front end: dataset generation, per-cell training, evaluation
// and cross-variant reporting, all driven by one JSON configuration.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "vce/config.hpp"
#include "vce/harness.hpp"
#include "vce/image_io.hpp"

namespace {

using namespace vce;

void apply_out_override(RunConfig& cfg) {
    if (const char* env = std::getenv("VCE_OUT")) {
        if (*env) cfg.out_dir = env;
    }
}

void write_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "config_echo.json", std::ios::binary);
    if (!os) throw IoError("cannot write config echo into " + dir.string());
    os << dump_run_config(cfg);
}

// Wall-clock timestamps stay confined to this log so every other artifact is
// byte-reproducible.
void log_line(const std::filesystem::path& dir, const std::string& message) {
    std::ofstream os(dir / "run.log", std::ios::binary | std::ios::app);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%F %T", std::localtime(&now));
    os << stamp << " " << message << "\n";
}

std::vector<PairedSample> load_preprocessed(const RunConfig& cfg,
                                            const std::vector<ManifestRow>& manifest) {
    std::vector<PairedSample> out;
    out.reserve(manifest.size());
    for (const auto& row : manifest)
        out.push_back(preprocess_sample(load_manifest_sample(row, cfg.dataset_dir()),
                                        cfg.preprocess_size));
    return out;
}

std::vector<ManifestRow> require_manifest(const RunConfig& cfg) {
    const auto path = cfg.dataset_dir() / "manifest.csv";
    if (!std::filesystem::exists(path))
        throw IoError("dataset manifest not found at " + path.string() +
                      "; run `vce phantoms --config <file>` first");
    return read_manifest(path);
}

int cmd_phantoms(RunConfig cfg, std::optional<uint64_t> seed_override) {
    if (seed_override) cfg.phantom.seed = *seed_override;
    const auto rows = generate_dataset(cfg.phantom, cfg.dataset_dir());
    write_echo(cfg, cfg.dataset_dir());
    log_line(cfg.out_dir, "phantoms: wrote " + std::to_string(rows.size()) + " samples");
    std::cout << "wrote " << rows.size() << " samples to " << cfg.dataset_dir().string() << "\n";
    return 0;
}

int cmd_train(RunConfig cfg, double gamma, int fold, std::optional<uint64_t> seed_override,
              const std::string& warm_start_path) {
    if (seed_override) cfg.train.seed = *seed_override;
    if (gamma < 0) throw ConfigError("train: gamma must be nonnegative");
    if (fold < 0 || fold >= cfg.n_folds) throw ConfigError("train: fold out of range");

    const auto manifest = require_manifest(cfg);
    const auto data = load_preprocessed(cfg, manifest);
    const FoldPlan plan = make_folds(manifest, cfg.n_folds, cfg.fold_seed);
    const FoldSplit split = rotation_split(plan, manifest, fold);

    RunFoldInputs in;
    in.data = &data;
    in.split = split;
    in.net = cfg.net;
    in.train_cfg = cfg.train;
    in.train_cfg.weights.gamma = gamma;
    in.augment = cfg.augment;
    // One initialization per fold regardless of gamma, so variants compare
    // from identical starting weights.
    in.bundle_seed = derive_seed(cfg.train.seed, 0xB0D1, static_cast<uint64_t>(fold));

    const auto cell = cfg.cell_dir(gamma, fold);
    std::filesystem::create_directories(cell);
    in.checkpoint_path = cell / "checkpoint_best.vcec";
    if (!warm_start_path.empty()) in.warm_start_checkpoint = warm_start_path;

    log_line(cfg.out_dir, "train: gamma=" + std::to_string(gamma) + " fold=" +
                              std::to_string(fold) + " started");
    TrainHistory history;
    FoldFragment fragment = run_fold(in, fold, &history);
    write_history_csv(history, cell / "history.csv");
    write_echo(cfg, cell);
    log_line(cfg.out_dir, "train: gamma=" + std::to_string(gamma) + " fold=" +
                              std::to_string(fold) + " finished, best epoch " +
                              std::to_string(history.best_epoch));
    if (history.aborted) {
        std::cerr << "training aborted on a non-finite loss; best checkpoint retained\n";
        return 1;
    }
    write_metrics_csv(fragment.records, cell / "metrics.csv");
    std::cout << "best epoch " << history.best_epoch << " (stopped at " << history.stopped_epoch
              << "), checkpoint " << in.checkpoint_path.string() << "\n";
    return 0;
}

int cmd_evaluate(RunConfig cfg, double gamma, int fold, const std::string& checkpoint_path) {
    if (fold < 0 || fold >= cfg.n_folds) throw ConfigError("evaluate: fold out of range");
    const auto manifest = require_manifest(cfg);
    const auto data = load_preprocessed(cfg, manifest);
    const FoldPlan plan = make_folds(manifest, cfg.n_folds, cfg.fold_seed);
    const FoldSplit split = rotation_split(plan, manifest, fold);

    const auto cell = cfg.cell_dir(gamma, fold);
    const std::filesystem::path ckpt = checkpoint_path.empty()
                                           ? cell / "checkpoint_best.vcec"
                                           : std::filesystem::path(checkpoint_path);

    ModelBundle bundle = build_bundle(cfg.net, 0);
    load_checkpoint(bundle, ckpt);

    std::vector<PairedSample> test_set;
    for (int i : split.test) test_set.push_back(data[static_cast<size_t>(i)]);
    std::vector<MetricRecord> records = evaluate_split(bundle, test_set);

    std::filesystem::create_directories(cell);
    for (size_t k = 0; k < records.size(); ++k) {
        char id[64];
        std::snprintf(id, sizeof(id), "s%05d-%s", split.test[k],
                      test_set[k].patient_id.c_str());
        records[k].sample_id = id;
        if (test_set[k].has_lesion) {
            std::vector<int> idx{0};
            const std::vector<PairedSample> one{test_set[k]};
            BatchTensors b = make_batch(one, idx, nullptr, 0, 0);
            Tensor fake_y = translate(bundle.G, bundle.config, b.x);
            char name[96];
            std::snprintf(name, sizeof(name), "heatmap_%s.png", id);
            heatmap(test_set[k].y, tensor_slice_to_unit_image(fake_y, 0), test_set[k].s,
                    cell / name);
        }
    }
    write_metrics_csv(records, cell / "metrics.csv");
    write_echo(cfg, cell);
    log_line(cfg.out_dir, "evaluate: gamma=" + std::to_string(gamma) + " fold=" +
                              std::to_string(fold) + " on " + std::to_string(records.size()) +
                              " samples");
    std::cout << "evaluated " << records.size() << " test samples into "
              << (cell / "metrics.csv").string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    std::vector<FoldFragment> fragments;
    for (double gamma : cfg.gamma_grid) {
        for (int fold = 0; fold < cfg.n_folds; ++fold) {
            const auto path = cfg.cell_dir(gamma, fold) / "metrics.csv";
            if (!std::filesystem::exists(path)) continue;
            FoldFragment f;
            f.rotation = fold;
            f.gamma = gamma;
            f.records = read_metrics_csv(path);
            fragments.push_back(std::move(f));
        }
    }
    if (fragments.empty())
        throw ValidationError("report: no completed cells found; run `vce train` first");
    const AggregateReport report = aggregate(fragments, cfg.gamma_grid);

    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream os(cfg.out_dir / "report.txt", std::ios::binary);
        os << report.text;
    }
    {
        std::ofstream os(cfg.out_dir / "report.csv", std::ios::binary);
        os << report.csv;
    }
    log_line(cfg.out_dir, "report: " + std::to_string(fragments.size()) + " fragments");
    std::cout << report.text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual contrast enhancement pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed;
    double gamma = 0.0;
    int fold = 0;
    std::string warm_start_path, checkpoint_path;

    auto* phantoms = app.add_subcommand("phantoms", "generate the synthetic dataset");
    phantoms->add_option("--config", config_path, "configuration file")->required();
    phantoms->add_option("--seed", seed, "override the dataset seed");

    auto* train = app.add_subcommand("train", "train one (gamma, fold) cell");
    train->add_option("--config", config_path, "configuration file")->required();
    train->add_option("--gamma", gamma, "localized-loss weight")->required();
    train->add_option("--fold", fold, "fold rotation index")->required();
    train->add_option("--seed", seed, "override the training seed");
    train->add_option("--warm-start", warm_start_path, "checkpoint to initialize from");

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a trained cell on its test split");
    evaluate->add_option("--config", config_path, "configuration file")->required();
    evaluate->add_option("--gamma", gamma, "localized-loss weight")->required();
    evaluate->add_option("--fold", fold, "fold rotation index")->required();
    evaluate->add_option("--checkpoint", checkpoint_path, "explicit checkpoint path");

    auto* report = app.add_subcommand("report", "aggregate completed cells into the variant table");
    report->add_option("--config", config_path, "configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_run_config(config_path);
        apply_out_override(cfg);
        if (phantoms->parsed()) return cmd_phantoms(std::move(cfg), seed);
        if (train->parsed()) return cmd_train(std::move(cfg), gamma, fold, seed, warm_start_path);
        if (evaluate->parsed()) return cmd_evaluate(std::move(cfg), gamma, fold, checkpoint_path);
        if (report->parsed()) return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
