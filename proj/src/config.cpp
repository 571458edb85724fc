#include "vce/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace vce {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("config: unknown key \"" + key + "\" in " + ctx);
    }
}

template <class T>
void read_if(const json& j, const char* key, T& dst, const std::string& ctx) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(dst);
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for \"" + std::string(key) + "\" in " + ctx);
    }
}

void parse_phantom(const json& j, PhantomConfig& cfg) {
    check_keys(j,
               {"seed", "image_size", "n_samples", "lesion_prob", "lesion_count_range",
                "lesion_radius_range", "background_texture_scale", "le_lesion_contrast",
                "des_lesion_contrast", "des_background_suppression", "patients_group_size"},
               "phantom");
    read_if(j, "seed", cfg.seed, "phantom");
    read_if(j, "image_size", cfg.image_size, "phantom");
    read_if(j, "n_samples", cfg.n_samples, "phantom");
    read_if(j, "lesion_prob", cfg.lesion_prob, "phantom");
    if (j.contains("lesion_count_range")) {
        auto r = j.at("lesion_count_range").get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("config: lesion_count_range must be [min, max]");
        cfg.lesion_count_min = r[0];
        cfg.lesion_count_max = r[1];
    }
    if (j.contains("lesion_radius_range")) {
        auto r = j.at("lesion_radius_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("config: lesion_radius_range must be [min, max]");
        cfg.lesion_radius_min = r[0];
        cfg.lesion_radius_max = r[1];
    }
    read_if(j, "background_texture_scale", cfg.background_texture_scale, "phantom");
    read_if(j, "le_lesion_contrast", cfg.le_lesion_contrast, "phantom");
    read_if(j, "des_lesion_contrast", cfg.des_lesion_contrast, "phantom");
    read_if(j, "des_background_suppression", cfg.des_background_suppression, "phantom");
    read_if(j, "patients_group_size", cfg.patients_group_size, "phantom");
}

void parse_augment(const json& j, AugmentPolicy& cfg) {
    check_keys(j, {"shift_frac", "zoom_frac", "hflip", "max_rotation_deg"}, "augment");
    read_if(j, "shift_frac", cfg.shift_frac, "augment");
    read_if(j, "zoom_frac", cfg.zoom_frac, "augment");
    read_if(j, "hflip", cfg.hflip, "augment");
    read_if(j, "max_rotation_deg", cfg.max_rotation_deg, "augment");
}

void parse_net(const json& j, NetConfig& cfg) {
    check_keys(j, {"image_size", "base_channels", "n_res_blocks", "disc_layers", "norm"}, "net");
    read_if(j, "image_size", cfg.image_size, "net");
    read_if(j, "base_channels", cfg.base_channels, "net");
    read_if(j, "n_res_blocks", cfg.n_res_blocks, "net");
    read_if(j, "disc_layers", cfg.disc_layers, "net");
    if (j.contains("norm")) {
        const std::string norm = j.at("norm").get<std::string>();
        if (norm == "instance")
            cfg.norm = NetConfig::Norm::instance;
        else if (norm == "batch")
            cfg.norm = NetConfig::Norm::batch;
        else
            throw ConfigError("config: norm must be \"instance\" or \"batch\"");
    }
}

void parse_train(const json& j, TrainConfig& cfg) {
    check_keys(j,
               {"max_epochs", "patience", "lr", "weight_decay", "beta1", "beta2", "batch_size",
                "replay_buffer_size", "seed", "pretrain"},
               "train");
    read_if(j, "max_epochs", cfg.max_epochs, "train");
    read_if(j, "patience", cfg.patience, "train");
    read_if(j, "lr", cfg.lr, "train");
    read_if(j, "weight_decay", cfg.weight_decay, "train");
    read_if(j, "beta1", cfg.beta1, "train");
    read_if(j, "beta2", cfg.beta2, "train");
    read_if(j, "batch_size", cfg.batch_size, "train");
    read_if(j, "replay_buffer_size", cfg.replay_buffer_size, "train");
    read_if(j, "seed", cfg.seed, "train");
    read_if(j, "pretrain", cfg.pretrain, "train");
}

void parse_loss(const json& j, RunConfig& cfg) {
    check_keys(j, {"lambda1", "lambda2", "gamma_grid"}, "loss");
    read_if(j, "lambda1", cfg.train.weights.lambda1, "loss");
    read_if(j, "lambda2", cfg.train.weights.lambda2, "loss");
    read_if(j, "gamma_grid", cfg.gamma_grid, "loss");
}

void parse_folds(const json& j, RunConfig& cfg) {
    check_keys(j, {"n_folds", "seed"}, "folds");
    read_if(j, "n_folds", cfg.n_folds, "folds");
    read_if(j, "seed", cfg.fold_seed, "folds");
}

std::string format_gamma(double gamma) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", gamma);
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    phantom.validate();
    augment.validate();
    net.validate();
    train.validate();
    if (preprocess_size < 8) throw ConfigError("config: preprocess_size must be >= 8");
    if (net.image_size != preprocess_size)
        throw ConfigError("config: net.image_size must equal preprocess_size");
    if (gamma_grid.empty()) throw ConfigError("config: gamma_grid must not be empty");
    for (double g : gamma_grid)
        if (g < 0) throw ConfigError("config: gamma values must be nonnegative");
    if (n_folds < 2) throw ConfigError("config: n_folds must be >= 2");
}

std::filesystem::path RunConfig::cell_dir(double gamma, int fold) const {
    return out_dir / ("g" + format_gamma(gamma)) / ("fold" + std::to_string(fold));
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    check_keys(j,
               {"out_dir", "preprocess_size", "phantom", "augment", "net", "train", "loss",
                "folds"},
               "top level");

    RunConfig cfg;
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    read_if(j, "preprocess_size", cfg.preprocess_size, "top level");
    if (j.contains("phantom")) parse_phantom(j.at("phantom"), cfg.phantom);
    if (j.contains("augment")) parse_augment(j.at("augment"), cfg.augment);
    if (j.contains("net")) parse_net(j.at("net"), cfg.net);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("loss")) parse_loss(j.at("loss"), cfg);
    if (j.contains("folds")) parse_folds(j.at("folds"), cfg);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
    json j;
    j["out_dir"] = cfg.out_dir.string();
    j["preprocess_size"] = cfg.preprocess_size;
    j["phantom"] = {{"seed", cfg.phantom.seed},
                    {"image_size", cfg.phantom.image_size},
                    {"n_samples", cfg.phantom.n_samples},
                    {"lesion_prob", cfg.phantom.lesion_prob},
                    {"lesion_count_range", {cfg.phantom.lesion_count_min, cfg.phantom.lesion_count_max}},
                    {"lesion_radius_range", {cfg.phantom.lesion_radius_min, cfg.phantom.lesion_radius_max}},
                    {"background_texture_scale", cfg.phantom.background_texture_scale},
                    {"le_lesion_contrast", cfg.phantom.le_lesion_contrast},
                    {"des_lesion_contrast", cfg.phantom.des_lesion_contrast},
                    {"des_background_suppression", cfg.phantom.des_background_suppression},
                    {"patients_group_size", cfg.phantom.patients_group_size}};
    j["augment"] = {{"shift_frac", cfg.augment.shift_frac},
                    {"zoom_frac", cfg.augment.zoom_frac},
                    {"hflip", cfg.augment.hflip},
                    {"max_rotation_deg", cfg.augment.max_rotation_deg}};
    j["net"] = {{"image_size", cfg.net.image_size},
                {"base_channels", cfg.net.base_channels},
                {"n_res_blocks", cfg.net.n_res_blocks},
                {"disc_layers", cfg.net.disc_layers},
                {"norm", cfg.net.norm == NetConfig::Norm::instance ? "instance" : "batch"}};
    j["train"] = {{"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"lr", cfg.train.lr},
                  {"weight_decay", cfg.train.weight_decay},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"batch_size", cfg.train.batch_size},
                  {"replay_buffer_size", cfg.train.replay_buffer_size},
                  {"seed", cfg.train.seed},
                  {"pretrain", cfg.train.pretrain}};
    j["loss"] = {{"lambda1", cfg.train.weights.lambda1},
                 {"lambda2", cfg.train.weights.lambda2},
                 {"gamma_grid", cfg.gamma_grid}};
    j["folds"] = {{"n_folds", cfg.n_folds}, {"seed", cfg.fold_seed}};
    return j.dump(2) + "\n";
}

}  // namespace vce
