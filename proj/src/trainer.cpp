#include "vce/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace vce {

namespace {

constexpr uint64_t kShuffleTag = 0x5348;
constexpr uint64_t kAugmentTag = 0x4155;
constexpr uint64_t kPoolXTag = 0x504f581;
constexpr uint64_t kPoolYTag = 0x504f592;

Tensor single(const Tensor& batch, int i) {
    Tensor out(1, batch.c, batch.h, batch.w);
    const size_t plane = static_cast<size_t>(batch.c) * batch.h * batch.w;
    std::copy_n(batch.v.begin() + static_cast<long>(plane) * i, plane, out.v.begin());
    return out;
}

void put_single(Tensor& batch, int i, const Tensor& img) {
    const size_t plane = static_cast<size_t>(batch.c) * batch.h * batch.w;
    std::copy_n(img.v.begin(), plane, batch.v.begin() + static_cast<long>(plane) * i);
}

void copy_image_into(Tensor& t, int i, const GrayImage& img) {
    float* dst = t.data() + static_cast<size_t>(i) * t.h * t.w;
    std::copy(img.pixels().begin(), img.pixels().end(), dst);
}

struct RunningBreakdown {
    LossBreakdown acc;
    int n = 0;

    void add(const LossBreakdown& b) {
        acc.adv_G += b.adv_G;
        acc.adv_F += b.adv_F;
        acc.adv_Dx += b.adv_Dx;
        acc.adv_Dy += b.adv_Dy;
        acc.cyc += b.cyc;
        acc.cyc_local += b.cyc_local;
        acc.id += b.id;
        acc.id_local += b.id_local;
        acc.total_G += b.total_G;
        acc.total_D += b.total_D;
        ++n;
    }

    LossBreakdown mean() const {
        LossBreakdown m = acc;
        if (n == 0) return m;
        const double inv = 1.0 / n;
        m.adv_G *= inv;
        m.adv_F *= inv;
        m.adv_Dx *= inv;
        m.adv_Dy *= inv;
        m.cyc *= inv;
        m.cyc_local *= inv;
        m.id *= inv;
        m.id_local *= inv;
        m.total_G *= inv;
        m.total_D *= inv;
        return m;
    }
};

struct ParamSnapshot {
    std::vector<float> g, f, dx, dy;

    static ParamSnapshot capture(const ModelBundle& b) {
        ParamSnapshot s;
        b.G.flatten_params(s.g);
        b.F.flatten_params(s.f);
        b.Dx.flatten_params(s.dx);
        b.Dy.flatten_params(s.dy);
        return s;
    }

    void restore(ModelBundle& b) const {
        b.G.unflatten_params(g);
        b.F.unflatten_params(f);
        b.Dx.unflatten_params(dx);
        b.Dy.unflatten_params(dy);
    }
};

}  // namespace

void TrainConfig::validate() const {
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs)
        throw ConfigError("train: patience must satisfy 1 <= patience < max_epochs");
    if (lr < 0 || weight_decay < 0) throw ConfigError("train: negative rate");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("train: betas must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (replay_buffer_size < 0) throw ConfigError("train: replay_buffer_size must be >= 0");
    weights.validate();
}

std::pair<int, int> simulate_early_stopping(const std::vector<double>& val_trace, int patience) {
    EarlyStopper stopper(patience);
    int stopped = static_cast<int>(val_trace.size());
    for (int e = 1; e <= static_cast<int>(val_trace.size()); ++e) {
        if (stopper.observe(e, val_trace[static_cast<size_t>(e - 1)])) {
            stopped = e;
            break;
        }
    }
    return {stopper.best_epoch(), stopped};
}

Tensor ImagePool::query(const Tensor& fake_batch) {
    if (capacity_ == 0) return fake_batch;
    Tensor out = fake_batch;
    for (int i = 0; i < fake_batch.n; ++i) {
        Tensor img = single(fake_batch, i);
        if (static_cast<int>(buffer_.size()) < capacity_) {
            buffer_.push_back(std::move(img));
            continue;  // fresh fake passes through
        }
        if (rng_.uniform() > 0.5) {
            const auto j = static_cast<size_t>(rng_.uniform_int(0, capacity_ - 1));
            put_single(out, i, buffer_[j]);
            buffer_[j] = std::move(img);
        }
    }
    return out;
}

BatchTensors make_batch(const std::vector<PairedSample>& data, const std::vector<int>& indices,
                        const AugmentPolicy* augment, uint64_t seed, int epoch) {
    if (indices.empty()) throw ValidationError("make_batch: empty batch");
    const PairedSample& first = data[static_cast<size_t>(indices[0])];
    const int h = first.x.height(), w = first.x.width();
    BatchTensors b{Tensor(static_cast<int>(indices.size()), 1, h, w),
                   Tensor(static_cast<int>(indices.size()), 1, h, w),
                   Tensor(static_cast<int>(indices.size()), 1, h, w)};
    for (size_t k = 0; k < indices.size(); ++k) {
        const PairedSample& sample = data[static_cast<size_t>(indices[k])];
        if (sample.x.height() != h || sample.x.width() != w)
            throw ValidationError("make_batch: inconsistent sample shapes");
        GrayImage xi = sample.x;
        GrayImage yi = sample.y;
        LesionMask si = sample.s;
        if (augment) {
            Rng rng(derive_seed(derive_seed(seed, kAugmentTag, static_cast<uint64_t>(epoch)),
                                static_cast<uint64_t>(indices[k])));
            std::tie(xi, yi, si) = augment_pair(xi, yi, si, *augment, rng);
        }
        copy_image_into(b.x, static_cast<int>(k), rescale(xi, kUnitRange, kSignedRange));
        copy_image_into(b.y, static_cast<int>(k), rescale(yi, kUnitRange, kSignedRange));
        float* ms = b.s.data() + static_cast<size_t>(k) * h * w;
        for (size_t i = 0; i < si.numel(); ++i) ms[i] = si.pixels()[i] ? 1.0f : 0.0f;
    }
    return b;
}

GrayImage tensor_slice_to_unit_image(const Tensor& t, int index) {
    std::vector<float> pix(static_cast<size_t>(t.h) * t.w);
    const float* src = t.data() + static_cast<size_t>(index) * t.c * t.h * t.w;
    for (size_t i = 0; i < pix.size(); ++i) {
        // tanh outputs can graze the bounds; clamp against rounding overshoot
        pix[i] = std::clamp(src[i], -1.0f, 1.0f);
    }
    return rescale(GrayImage(t.h, t.w, kSignedRange, std::move(pix)), kSignedRange, kUnitRange);
}

double validate_epoch(ModelBundle& bundle, const std::vector<PairedSample>& val_set,
                      const LossWeights& weights, int batch_size) {
    if (val_set.empty()) throw ValidationError("validate_epoch: empty validation set");
    bundle.set_train(false);
    double acc = 0.0;
    int batches = 0;
    for (size_t start = 0; start < val_set.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<int> idx;
        for (size_t i = start; i < std::min(val_set.size(), start + static_cast<size_t>(batch_size));
             ++i)
            idx.push_back(static_cast<int>(i));
        BatchTensors b = make_batch(val_set, idx, nullptr, 0, 0);
        acc += total_objective(bundle, b.x, b.y, b.s, weights).total_G;
        ++batches;
    }
    return acc / batches;
}

TrainHistory train(ModelBundle& bundle, const std::vector<PairedSample>& train_set,
                   const std::vector<PairedSample>& val_set, const TrainConfig& cfg,
                   const AugmentPolicy& augment, const std::filesystem::path& checkpoint_path) {
    cfg.validate();
    if (train_set.empty()) throw ValidationError("train: empty training set");
    if (val_set.empty()) throw ValidationError("train: empty validation set");
    const LossWeights weights = cfg.effective_weights();

    nn::AdamConfig opt_cfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
    std::vector<nn::Param*> gen_params = bundle.G.params();
    gen_params.insert(gen_params.end(), bundle.F.params().begin(), bundle.F.params().end());
    std::vector<nn::Param*> disc_params = bundle.Dx.params();
    disc_params.insert(disc_params.end(), bundle.Dy.params().begin(), bundle.Dy.params().end());
    nn::Adam opt_g(gen_params, opt_cfg);
    nn::Adam opt_d(disc_params, opt_cfg);

    ImagePool pool_x(cfg.replay_buffer_size, derive_seed(cfg.seed, kPoolXTag));
    ImagePool pool_y(cfg.replay_buffer_size, derive_seed(cfg.seed, kPoolYTag));

    TrainHistory history;
    EarlyStopper stopper(cfg.patience);
    ParamSnapshot best = ParamSnapshot::capture(bundle);

    auto save_best = [&](int epoch) {
        CheckpointExtras extras;
        extras.epoch = epoch;
        extras.rng_states = {{"pool_x", pool_x.rng_state()}, {"pool_y", pool_y.rng_state()}};
        extras.has_optimizer = true;
        extras.opt_g_t = opt_g.step_count();
        extras.opt_d_t = opt_d.step_count();
        extras.opt_g_blobs = opt_g.state_blobs();
        extras.opt_d_blobs = opt_d.state_blobs();
        save_checkpoint(bundle, checkpoint_path, extras);
    };

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, kShuffleTag, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        RunningBreakdown epoch_losses;
        bool aborted = false;
        for (size_t start = 0; start < order.size() && !aborted;
             start += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int> idx(order.begin() + static_cast<long>(start),
                                 order.begin() +
                                     static_cast<long>(std::min(order.size(),
                                                                start + static_cast<size_t>(
                                                                            cfg.batch_size))));
            BatchTensors b = make_batch(train_set, idx, &augment, cfg.seed, epoch);

            try {
                // Generators first; the adversarial backward pollutes the
                // discriminators' gradient buffers, which are zeroed before
                // their own update below.
                opt_g.zero_grad();
                bundle.Dx.zero_grad();
                bundle.Dy.zero_grad();
                Tensor fake_y, fake_x;
                LossBreakdown losses =
                    backprop_generator_objective(bundle, b.x, b.y, b.s, weights, &fake_y, &fake_x);
                opt_g.step();

                opt_d.zero_grad();
                losses.adv_Dy = backprop_discriminator_loss(bundle.Dy, b.y, pool_y.query(fake_y));
                losses.adv_Dx = backprop_discriminator_loss(bundle.Dx, b.x, pool_x.query(fake_x));
                losses.total_D = losses.adv_Dx + losses.adv_Dy;
                opt_d.step();

                epoch_losses.add(losses);
            } catch (const NumericError&) {
                aborted = true;
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mean = epoch_losses.mean();
        if (!aborted) {
            try {
                rec.val_objective = validate_epoch(bundle, val_set, weights, cfg.batch_size);
            } catch (const NumericError&) {
                aborted = true;
            }
        }
        if (aborted) {
            history.aborted = true;
            history.stopped_epoch = epoch;
            break;
        }
        history.epochs.push_back(rec);

        const bool stop = stopper.observe(epoch, rec.val_objective);
        if (stopper.best_epoch() == epoch) {
            best = ParamSnapshot::capture(bundle);
            history.best_epoch = epoch;
            save_best(epoch);
        }
        history.stopped_epoch = epoch;
        if (stop) break;
    }

    best.restore(bundle);
    if (history.best_epoch == 0 && !history.epochs.empty()) history.best_epoch = 1;
    return history;
}

void warm_start(ModelBundle& bundle, const std::filesystem::path& checkpoint) {
    load_checkpoint(bundle, checkpoint);
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_history_csv: cannot open " + path.string() + " for writing");
    os << "epoch,adv_G,adv_F,adv_Dx,adv_Dy,cyc,cyc_local,id,id_local,total_G,total_D,"
          "val_objective\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof(buf), "%.17g%c", v, sep);
        os << buf;
    };
    for (const EpochRecord& r : history.epochs) {
        os << r.epoch << ',';
        put(r.train_mean.adv_G, ',');
        put(r.train_mean.adv_F, ',');
        put(r.train_mean.adv_Dx, ',');
        put(r.train_mean.adv_Dy, ',');
        put(r.train_mean.cyc, ',');
        put(r.train_mean.cyc_local, ',');
        put(r.train_mean.id, ',');
        put(r.train_mean.id_local, ',');
        put(r.train_mean.total_G, ',');
        put(r.train_mean.total_D, ',');
        put(r.val_objective, '\n');
    }
    if (!os) throw IoError("write_history_csv: write failed for " + path.string());
}

}  // namespace vce
