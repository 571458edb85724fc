#include "vce/model.hpp"

#include <json.hpp>

#include <fstream>

namespace vce {

using nn::Adam;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::InstanceNorm2d;
using nn::LeakyReLU;
using nn::Network;
using nn::Param;
using nn::ReflectionPad2d;
using nn::ReLU;
using nn::ResidualBlock;
using nn::Sequential;
using nn::Tanh;

namespace {

void add_norm(Sequential& seq, NetConfig::Norm kind, int channels, const std::string& name) {
    if (kind == NetConfig::Norm::instance)
        seq.add(std::make_unique<InstanceNorm2d>());
    else
        seq.add(std::make_unique<BatchNorm2d>(channels, 1e-5, 0.1, name));
}

std::unique_ptr<Sequential> build_generator(const NetConfig& cfg) {
    auto seq = std::make_unique<Sequential>();
    const int c = cfg.base_channels;

    seq->add(std::make_unique<ReflectionPad2d>(3));
    seq->add(std::make_unique<Conv2d>(1, c, 7, 1, 0, false, "g.stem"));
    add_norm(*seq, cfg.norm, c, "g.stem.norm");
    seq->add(std::make_unique<ReLU>());

    seq->add(std::make_unique<Conv2d>(c, 2 * c, 3, 2, 1, false, "g.down1"));
    add_norm(*seq, cfg.norm, 2 * c, "g.down1.norm");
    seq->add(std::make_unique<ReLU>());
    seq->add(std::make_unique<Conv2d>(2 * c, 4 * c, 3, 2, 1, false, "g.down2"));
    add_norm(*seq, cfg.norm, 4 * c, "g.down2.norm");
    seq->add(std::make_unique<ReLU>());

    for (int i = 0; i < cfg.n_res_blocks; ++i) {
        auto body = std::make_unique<Sequential>();
        const std::string base = "g.res" + std::to_string(i);
        body->add(std::make_unique<ReflectionPad2d>(1));
        body->add(std::make_unique<Conv2d>(4 * c, 4 * c, 3, 1, 0, false, base + ".c1"));
        add_norm(*body, cfg.norm, 4 * c, base + ".c1.norm");
        body->add(std::make_unique<ReLU>());
        body->add(std::make_unique<ReflectionPad2d>(1));
        body->add(std::make_unique<Conv2d>(4 * c, 4 * c, 3, 1, 0, false, base + ".c2"));
        add_norm(*body, cfg.norm, 4 * c, base + ".c2.norm");
        seq->add(std::make_unique<ResidualBlock>(std::move(body)));
    }

    seq->add(std::make_unique<ConvTranspose2d>(4 * c, 2 * c, 3, 2, 1, 1, false, "g.up1"));
    add_norm(*seq, cfg.norm, 2 * c, "g.up1.norm");
    seq->add(std::make_unique<ReLU>());
    seq->add(std::make_unique<ConvTranspose2d>(2 * c, c, 3, 2, 1, 1, false, "g.up2"));
    add_norm(*seq, cfg.norm, c, "g.up2.norm");
    seq->add(std::make_unique<ReLU>());

    seq->add(std::make_unique<ReflectionPad2d>(3));
    seq->add(std::make_unique<Conv2d>(c, 1, 7, 1, 0, true, "g.head"));
    seq->add(std::make_unique<Tanh>());
    return seq;
}

// Patch discriminator: stacked stride-2 4x4 convolutions, then two stride-1
// stages; no output nonlinearity (least-squares adversarial loss).
std::unique_ptr<Sequential> build_discriminator(const NetConfig& cfg) {
    auto seq = std::make_unique<Sequential>();
    const int c = cfg.base_channels;

    seq->add(std::make_unique<Conv2d>(1, c, 4, 2, 1, true, "d.l0"));
    seq->add(std::make_unique<LeakyReLU>(0.2f));

    int mult = 1;
    for (int i = 1; i < cfg.disc_layers; ++i) {
        const int prev = mult;
        mult = std::min(1 << i, 8);
        const std::string base = "d.l" + std::to_string(i);
        seq->add(std::make_unique<Conv2d>(c * prev, c * mult, 4, 2, 1, false, base));
        add_norm(*seq, cfg.norm, c * mult, base + ".norm");
        seq->add(std::make_unique<LeakyReLU>(0.2f));
    }

    const int prev = mult;
    mult = std::min(1 << cfg.disc_layers, 8);
    seq->add(std::make_unique<Conv2d>(c * prev, c * mult, 4, 1, 1, false, "d.pre"));
    add_norm(*seq, cfg.norm, c * mult, "d.pre.norm");
    seq->add(std::make_unique<LeakyReLU>(0.2f));
    seq->add(std::make_unique<Conv2d>(c * mult, 1, 4, 1, 1, true, "d.head"));
    return seq;
}

// Zero-mean Gaussian (std 0.02) on convolution weights; biases and norm
// parameters keep their constructed values.
void init_network(Network& net, uint64_t seed) {
    Rng rng(seed);
    for (Param* p : net.params()) {
        if (p->name.size() >= 2 && p->name.compare(p->name.size() - 2, 2, ".w") == 0) {
            for (float& v : p->w.v) v = static_cast<float>(rng.normal(0.0, 0.02));
        }
    }
}

}  // namespace

void NetConfig::validate() const {
    if (image_size < 8 || image_size % 4 != 0)
        throw ConfigError("net: image_size must be a multiple of 4 and >= 8");
    if (base_channels < 1) throw ConfigError("net: base_channels must be >= 1");
    if (n_res_blocks < 1) throw ConfigError("net: n_res_blocks must be >= 1");
    if (disc_layers < 1) throw ConfigError("net: disc_layers must be >= 1");
    // Patch map must stay nonempty: disc_layers stride-2 halvings, then two
    // 4x4 stride-1 stages each shrinking by one.
    int s = image_size;
    for (int i = 0; i < disc_layers; ++i) s /= 2;
    if (s - 2 < 1) throw ConfigError("net: disc_layers too deep for image_size");
}

std::pair<int, int> disc_patch_dims(const NetConfig& cfg, int input_size) {
    auto step = [](int s, int k, int stride, int pad) { return (s + 2 * pad - k) / stride + 1; };
    int s = input_size;
    for (int i = 0; i < cfg.disc_layers; ++i) s = step(s, 4, 2, 1);
    s = step(s, 4, 1, 1);
    s = step(s, 4, 1, 1);
    return {s, s};
}

ModelBundle build_bundle(const NetConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    ModelBundle b{cfg, Network(build_generator(cfg)), Network(build_generator(cfg)),
                  Network(build_discriminator(cfg)), Network(build_discriminator(cfg))};
    init_network(b.G, derive_seed(init_seed, 1));
    init_network(b.F, derive_seed(init_seed, 2));
    init_network(b.Dx, derive_seed(init_seed, 3));
    init_network(b.Dy, derive_seed(init_seed, 4));
    return b;
}

namespace {
void check_batch(const NetConfig& cfg, const Tensor& batch, bool bounded, const char* op) {
    if (batch.n < 1 || batch.c != 1 || batch.h != cfg.image_size || batch.w != cfg.image_size)
        throw ValidationError(std::string(op) + ": batch shape does not match the configuration");
    for (float v : batch.v) {
        if (!std::isfinite(v)) throw ValidationError(std::string(op) + ": non-finite input");
        if (bounded && (v < -1.0f || v > 1.0f))
            throw ValidationError(std::string(op) + ": input outside [-1, 1]");
    }
}
}  // namespace

Tensor translate(nn::Network& gen, const NetConfig& cfg, const Tensor& batch) {
    check_batch(cfg, batch, true, "translate");
    gen.set_train(false);
    return gen.forward(batch);
}

Tensor discriminate(nn::Network& disc, const NetConfig& cfg, const Tensor& batch) {
    check_batch(cfg, batch, true, "discriminate");
    disc.set_train(false);
    return disc.forward(batch);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[] = "VCEC1\n";

nlohmann::json config_json(const NetConfig& c) {
    return {{"image_size", c.image_size},
            {"base_channels", c.base_channels},
            {"n_res_blocks", c.n_res_blocks},
            {"disc_layers", c.disc_layers},
            {"norm", c.norm == NetConfig::Norm::instance ? "instance" : "batch"}};
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.n_res_blocks = j.at("n_res_blocks").get<int>();
    c.disc_layers = j.at("disc_layers").get<int>();
    const std::string norm = j.at("norm").get<std::string>();
    if (norm == "instance")
        c.norm = NetConfig::Norm::instance;
    else if (norm == "batch")
        c.norm = NetConfig::Norm::batch;
    else
        throw IoError("checkpoint: unknown norm kind " + norm);
    return c;
}

void write_blob(std::ofstream& os, const std::vector<float>& blob) {
    os.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

std::vector<float> read_blob(std::ifstream& is, size_t count, const std::string& path) {
    std::vector<float> blob(count);
    is.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw IoError("checkpoint: truncated blob in " + path);
    return blob;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     const CheckpointExtras& extras) {
    nlohmann::json header;
    header["config"] = config_json(bundle.config);
    header["epoch"] = extras.epoch;
    header["rng_states"] = extras.rng_states;

    std::vector<std::vector<float>> net_blobs(4);
    bundle.G.flatten_params(net_blobs[0]);
    bundle.F.flatten_params(net_blobs[1]);
    bundle.Dx.flatten_params(net_blobs[2]);
    bundle.Dy.flatten_params(net_blobs[3]);
    header["param_counts"] = {net_blobs[0].size(), net_blobs[1].size(), net_blobs[2].size(),
                              net_blobs[3].size()};

    header["has_optimizer"] = extras.has_optimizer;
    if (extras.has_optimizer) {
        header["opt_g_t"] = extras.opt_g_t;
        header["opt_d_t"] = extras.opt_d_t;
        std::vector<size_t> gs, ds;
        for (const auto& b : extras.opt_g_blobs) gs.push_back(b.size());
        for (const auto& b : extras.opt_d_blobs) ds.push_back(b.size());
        header["opt_g_sizes"] = gs;
        header["opt_d_sizes"] = ds;
    }

    const std::string head = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path.string() + " for writing");
    os << kCkptMagic;
    const uint64_t len = head.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os << head;
    for (const auto& blob : net_blobs) write_blob(os, blob);
    if (extras.has_optimizer) {
        for (const auto& blob : extras.opt_g_blobs) write_blob(os, blob);
        for (const auto& blob : extras.opt_d_blobs) write_blob(os, blob);
    }
    if (!os) throw IoError("save_checkpoint: write failed for " + path.string());
}

CheckpointExtras load_checkpoint(ModelBundle& bundle, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path.string());
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kCkptMagic, 6) != 0)
        throw IoError("load_checkpoint: bad magic in " + path.string());
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || len > (1ULL << 24)) throw IoError("load_checkpoint: bad header in " + path.string());
    std::string head(len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("load_checkpoint: truncated header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(head);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_checkpoint: malformed header in " + path.string() + ": " + e.what());
    }

    const NetConfig stored = config_from_json(header.at("config"));
    if (!(stored == bundle.config))
        throw ValidationError("load_checkpoint: incompatible configuration in " + path.string());

    const auto counts = header.at("param_counts").get<std::vector<size_t>>();
    if (counts.size() != 4 || counts[0] != bundle.G.param_count() ||
        counts[1] != bundle.F.param_count() || counts[2] != bundle.Dx.param_count() ||
        counts[3] != bundle.Dy.param_count())
        throw ValidationError("load_checkpoint: parameter count mismatch in " + path.string());

    bundle.G.unflatten_params(read_blob(is, counts[0], path.string()));
    bundle.F.unflatten_params(read_blob(is, counts[1], path.string()));
    bundle.Dx.unflatten_params(read_blob(is, counts[2], path.string()));
    bundle.Dy.unflatten_params(read_blob(is, counts[3], path.string()));

    CheckpointExtras extras;
    extras.epoch = header.at("epoch").get<int>();
    extras.rng_states = header.at("rng_states").get<std::map<std::string, std::string>>();
    extras.has_optimizer = header.at("has_optimizer").get<bool>();
    if (extras.has_optimizer) {
        extras.opt_g_t = header.at("opt_g_t").get<long>();
        extras.opt_d_t = header.at("opt_d_t").get<long>();
        for (size_t n : header.at("opt_g_sizes").get<std::vector<size_t>>())
            extras.opt_g_blobs.push_back(read_blob(is, n, path.string()));
        for (size_t n : header.at("opt_d_sizes").get<std::vector<size_t>>())
            extras.opt_d_blobs.push_back(read_blob(is, n, path.string()));
    }
    return extras;
}

}  // namespace vce
