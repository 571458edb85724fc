#include "vce/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vce/image_io.hpp"

namespace vce {

namespace {

struct PatientInfo {
    std::string id;
    bool has_lesion = false;
};

std::vector<PatientInfo> collect_patients(const std::vector<ManifestRow>& manifest) {
    std::vector<PatientInfo> patients;
    std::map<std::string, size_t> index;
    for (const auto& row : manifest) {
        auto it = index.find(row.patient_id);
        if (it == index.end()) {
            index.emplace(row.patient_id, patients.size());
            patients.push_back({row.patient_id, row.has_lesion});
        } else if (row.has_lesion) {
            patients[it->second].has_lesion = true;
        }
    }
    return patients;
}

}  // namespace

FoldPlan make_folds(const std::vector<ManifestRow>& manifest, int n_folds, uint64_t seed) {
    if (manifest.empty()) throw ValidationError("make_folds: empty manifest");
    if (n_folds < 2) throw ValidationError("make_folds: need at least two folds");
    std::vector<PatientInfo> patients = collect_patients(manifest);
    if (static_cast<int>(patients.size()) < n_folds)
        throw ValidationError("make_folds: fewer patients than folds");

    std::vector<std::string> lesion_ids, clear_ids;
    for (const auto& p : patients)
        (p.has_lesion ? lesion_ids : clear_ids).push_back(p.id);

    Rng rng(derive_seed(seed, 0xF01D));
    rng.shuffle(lesion_ids);
    rng.shuffle(clear_ids);

    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.seed = seed;

    // Lesion patients deal round-robin, then the rest fill the smallest fold
    // first; both counts stay within one across folds.
    std::vector<int> totals(static_cast<size_t>(n_folds), 0);
    for (size_t i = 0; i < lesion_ids.size(); ++i) {
        const int fold = static_cast<int>(i % static_cast<size_t>(n_folds));
        plan.assignments[lesion_ids[i]] = fold;
        ++totals[static_cast<size_t>(fold)];
    }
    for (const auto& id : clear_ids) {
        int fold = 0;
        for (int f = 1; f < n_folds; ++f)
            if (totals[static_cast<size_t>(f)] < totals[static_cast<size_t>(fold)]) fold = f;
        plan.assignments[id] = fold;
        ++totals[static_cast<size_t>(fold)];
    }
    return plan;
}

FoldSplit rotation_split(const FoldPlan& plan, const std::vector<ManifestRow>& manifest,
                         int rotation) {
    if (rotation < 0 || rotation >= plan.n_folds)
        throw ValidationError("rotation_split: rotation out of range");

    auto fold_of = [&](const std::string& patient) {
        auto it = plan.assignments.find(patient);
        if (it == plan.assignments.end())
            throw ValidationError("rotation_split: patient missing from the plan: " + patient);
        return it->second;
    };

    FoldSplit split;
    if (plan.n_folds >= 3) {
        const int val_fold = (rotation + 1) % plan.n_folds;
        for (size_t i = 0; i < manifest.size(); ++i) {
            const int f = fold_of(manifest[i].patient_id);
            if (f == rotation)
                split.test.push_back(static_cast<int>(i));
            else if (f == val_fold)
                split.val.push_back(static_cast<int>(i));
            else
                split.train.push_back(static_cast<int>(i));
        }
        return split;
    }

    // Two folds: carve a stratified fifth of the train fold's patients into
    // the validation set.
    std::vector<PatientInfo> patients = collect_patients(manifest);
    std::vector<std::string> lesion_ids, clear_ids;
    for (const auto& p : patients) {
        if (fold_of(p.id) == rotation) continue;
        (p.has_lesion ? lesion_ids : clear_ids).push_back(p.id);
    }
    Rng rng(derive_seed(plan.seed, 0x7A1, static_cast<uint64_t>(rotation)));
    rng.shuffle(lesion_ids);
    rng.shuffle(clear_ids);
    std::map<std::string, bool> is_val;
    const size_t lesion_val = (lesion_ids.size() + 4) / 5;
    const size_t clear_val = (clear_ids.size() + 4) / 5;
    for (size_t i = 0; i < lesion_ids.size(); ++i) is_val[lesion_ids[i]] = i < lesion_val;
    for (size_t i = 0; i < clear_ids.size(); ++i) is_val[clear_ids[i]] = i < clear_val;

    for (size_t i = 0; i < manifest.size(); ++i) {
        const int f = fold_of(manifest[i].patient_id);
        if (f == rotation)
            split.test.push_back(static_cast<int>(i));
        else if (is_val.at(manifest[i].patient_id))
            split.val.push_back(static_cast<int>(i));
        else
            split.train.push_back(static_cast<int>(i));
    }
    if (split.train.empty() || split.val.empty())
        throw ValidationError("rotation_split: degenerate two-fold split");
    return split;
}

std::vector<MetricRecord> evaluate_split(ModelBundle& bundle,
                                         const std::vector<PairedSample>& test_set) {
    std::vector<MetricRecord> records;
    records.reserve(test_set.size());
    bundle.set_train(false);
    for (const auto& sample : test_set) {
        std::vector<int> idx{0};
        const std::vector<PairedSample> one{sample};
        BatchTensors b = make_batch(one, idx, nullptr, 0, 0);
        Tensor fake_y = translate(bundle.G, bundle.config, b.x);
        GrayImage synthetic = tensor_slice_to_unit_image(fake_y, 0);
        records.push_back(evaluate_pair(sample.y, synthetic, sample.s, sample.patient_id));
    }
    return records;
}

FoldFragment run_fold(const RunFoldInputs& in, int rotation, TrainHistory* history_out) {
    if (!in.data) throw ValidationError("run_fold: missing data");
    const auto& data = *in.data;
    auto gather = [&](const std::vector<int>& idx) {
        std::vector<PairedSample> out;
        out.reserve(idx.size());
        for (int i : idx) out.push_back(data[static_cast<size_t>(i)]);
        return out;
    };
    const std::vector<PairedSample> train_set = gather(in.split.train);
    const std::vector<PairedSample> val_set = gather(in.split.val);
    const std::vector<PairedSample> test_set = gather(in.split.test);

    FoldFragment fragment;
    fragment.rotation = rotation;
    fragment.gamma = in.train_cfg.effective_weights().gamma;

    ModelBundle bundle = build_bundle(in.net, in.bundle_seed);
    if (!in.warm_start_checkpoint.empty()) warm_start(bundle, in.warm_start_checkpoint);

    TrainHistory history =
        train(bundle, train_set, val_set, in.train_cfg, in.augment, in.checkpoint_path);
    if (history_out) *history_out = history;
    if (history.aborted) {
        fragment.failed = true;
        return fragment;
    }
    fragment.records = evaluate_split(bundle, test_set);
    return fragment;
}

FragmentMeans fragment_means(const FoldFragment& fragment) {
    FragmentMeans m;
    for (const auto& r : fragment.records) {
        m.mse += r.mse;
        m.psnr += r.psnr;
        m.vif += r.vif;
        m.ssim += r.ssim;
        ++m.n;
        if (r.roi_mse && r.roi_mae) {
            m.roi_mse += *r.roi_mse;
            m.roi_mae += *r.roi_mae;
            ++m.roi_n;
        }
    }
    if (m.n > 0) {
        m.mse /= m.n;
        m.psnr /= m.n;
        m.vif /= m.n;
        m.ssim /= m.n;
    }
    if (m.roi_n > 0) {
        m.roi_mse /= m.roi_n;
        m.roi_mae /= m.roi_n;
    }
    return m;
}

namespace {

struct MeanStd {
    double mean = 0, sd = 0;
};

MeanStd mean_population_std(const std::vector<double>& xs) {
    MeanStd out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(var / static_cast<double>(xs.size()));
    return out;
}

std::string format_cell(const AggregateCell& c) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%.2f +/- %.2f", c.best ? "*" : " ", c.mean, c.std_dev);
    return buf;
}

}  // namespace

AggregateReport aggregate(const std::vector<FoldFragment>& fragments,
                          const std::vector<double>& gammas) {
    AggregateReport report;
    std::ostringstream csv;
    csv << "variant,fold,metric,value\n";

    bool any_variant = false;
    for (double gamma : gammas) {
        std::vector<const FoldFragment*> ok;
        int failed = 0;
        for (const auto& f : fragments) {
            if (f.gamma != gamma) continue;
            if (f.failed) {
                ++failed;
                continue;
            }
            ok.push_back(&f);
        }
        if (failed > 0)
            std::clog << "aggregate: excluding " << failed << " failed fold(s) for gamma=" << gamma
                      << "\n";
        if (ok.empty()) continue;
        if (ok.size() < 2)
            throw ValidationError("aggregate: need at least two completed folds per variant");
        any_variant = true;

        std::vector<double> mses, psnrs, vifs, ssims;
        for (const FoldFragment* f : ok) {
            const FragmentMeans m = fragment_means(*f);
            char variant[32];
            std::snprintf(variant, sizeof(variant), "gamma=%g", gamma);
            csv << variant << ',' << f->rotation << ",mse," << m.mse << '\n';
            csv << variant << ',' << f->rotation << ",psnr," << m.psnr << '\n';
            csv << variant << ',' << f->rotation << ",vif," << m.vif << '\n';
            csv << variant << ',' << f->rotation << ",ssim," << m.ssim << '\n';
            mses.push_back(m.mse);
            psnrs.push_back(m.psnr);
            vifs.push_back(m.vif);
            ssims.push_back(m.ssim);
        }

        AggregateRow row;
        row.gamma = gamma;
        row.baseline = gamma == 0.0;
        row.folds = static_cast<int>(ok.size());
        // Display scaling: MSE, VIF and SSIM in hundredths, PSNR raw dB.
        MeanStd ms = mean_population_std(mses);
        row.mse = {ms.mean * 100.0, ms.sd * 100.0, false};
        ms = mean_population_std(psnrs);
        row.psnr = {ms.mean, ms.sd, false};
        ms = mean_population_std(vifs);
        row.vif = {ms.mean * 100.0, ms.sd * 100.0, false};
        ms = mean_population_std(ssims);
        row.ssim = {ms.mean * 100.0, ms.sd * 100.0, false};
        report.rows.push_back(row);
    }
    if (!any_variant) throw ValidationError("aggregate: every fold fragment failed");

    // Flag the best value per column: lowest MSE, highest elsewhere.
    auto flag_best = [&](auto pick, bool lower_is_better) {
        size_t best = 0;
        for (size_t i = 1; i < report.rows.size(); ++i) {
            const double a = pick(report.rows[i])->mean;
            const double b = pick(report.rows[best])->mean;
            if (lower_is_better ? a < b : a > b) best = i;
        }
        pick(report.rows[best])->best = true;
    };
    if (!report.rows.empty()) {
        flag_best([](AggregateRow& r) { return &r.mse; }, true);
        flag_best([](AggregateRow& r) { return &r.psnr; }, false);
        flag_best([](AggregateRow& r) { return &r.vif; }, false);
        flag_best([](AggregateRow& r) { return &r.ssim; }, false);
    }

    std::ostringstream text;
    text << "variant            MSE (x1e-2, low)   PSNR (dB, high)    VIF (x1e-2, high)  "
            "SSIM (x1e-2, high)  folds\n";
    for (const auto& row : report.rows) {
        char name[32];
        if (row.baseline)
            std::snprintf(name, sizeof(name), "baseline");
        else
            std::snprintf(name, sizeof(name), "masked g=%g", row.gamma);
        char line[256];
        std::snprintf(line, sizeof(line), "%-18s %-18s %-18s %-18s %-19s %d\n", name,
                      format_cell(row.mse).c_str(), format_cell(row.psnr).c_str(),
                      format_cell(row.vif).c_str(), format_cell(row.ssim).c_str(), row.folds);
        text << line;
    }
    report.text = text.str();
    report.csv = csv.str();
    return report;
}

void heatmap(const GrayImage& ref, const GrayImage& test, const LesionMask& s,
             const std::filesystem::path& out) {
    if (!ref.same_shape(test)) throw ValidationError("heatmap: shape mismatch");
    if (ref.height() != s.height() || ref.width() != s.width())
        throw ValidationError("heatmap: mask shape mismatch");

    const int h = ref.height(), w = ref.width();
    std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = std::clamp(
                std::abs(static_cast<double>(ref.at(y, x)) - static_cast<double>(test.at(y, x))),
                0.0, 1.0);
            // black -> red -> yellow -> white, monotone in luminance
            const double r = std::clamp(3.0 * d, 0.0, 1.0);
            const double g = std::clamp(3.0 * d - 1.0, 0.0, 1.0);
            const double b = std::clamp(3.0 * d - 2.0, 0.0, 1.0);
            uint8_t* px = &rgb[(static_cast<size_t>(y) * w + x) * 3];
            px[0] = static_cast<uint8_t>(std::lround(255.0 * r));
            px[1] = static_cast<uint8_t>(std::lround(255.0 * g));
            px[2] = static_cast<uint8_t>(std::lround(255.0 * b));
        }
    }

    if (s.any()) {
        int y0 = h, y1 = -1, x0 = w, x1 = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (s.at(y, x)) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
        auto draw = [&](int y, int x) {
            if (y < 0 || y >= h || x < 0 || x >= w) return;
            uint8_t* px = &rgb[(static_cast<size_t>(y) * w + x) * 3];
            px[0] = 255;
            px[1] = 0;
            px[2] = 0;
        };
        for (int x = x0 - 1; x <= x1 + 1; ++x) {
            draw(y0 - 1, x);
            draw(y1 + 1, x);
        }
        for (int y = y0 - 1; y <= y1 + 1; ++y) {
            draw(y, x0 - 1);
            draw(y, x1 + 1);
        }
    }
    save_png_rgb8(rgb, h, w, out);
}

void write_metrics_csv(const std::vector<MetricRecord>& records,
                       const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_metrics_csv: cannot open " + path.string() + " for writing");
    os << "sample_id,mse,psnr,vif,ssim,roi_mse,roi_mae\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
    };
    for (const auto& r : records) {
        os << r.sample_id << ',';
        put(r.mse);
        os << ',';
        put(r.psnr);
        os << ',';
        put(r.vif);
        os << ',';
        put(r.ssim);
        os << ',';
        if (r.roi_mse) put(*r.roi_mse);
        os << ',';
        if (r.roi_mae) put(*r.roi_mae);
        os << '\n';
    }
    if (!os) throw IoError("write_metrics_csv: write failed for " + path.string());
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("read_metrics_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "sample_id,mse,psnr,vif,ssim,roi_mse,roi_mae")
        throw IoError("read_metrics_csv: bad header in " + path.string());
    std::vector<MetricRecord> records;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        MetricRecord r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(ls, field, ','))
                throw IoError("read_metrics_csv: malformed row in " + path.string());
            return field;
        };
        r.sample_id = next();
        r.mse = std::stod(next());
        r.psnr = std::stod(next());
        r.vif = std::stod(next());
        r.ssim = std::stod(next());
        std::string roi_mse_s, roi_mae_s;
        std::getline(ls, roi_mse_s, ',');
        std::getline(ls, roi_mae_s);
        if (!roi_mse_s.empty()) r.roi_mse = std::stod(roi_mse_s);
        if (!roi_mae_s.empty()) r.roi_mae = std::stod(roi_mae_s);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace vce
