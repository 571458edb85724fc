#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "test_util.hpp"
#include "vce/harness.hpp"

using namespace vce;
using testutil::TempDir;

namespace {

// Synthetic manifest: n_patients patients, images_per_patient rows each,
// the first n_lesion patients lesion-bearing.
std::vector<ManifestRow> synthetic_manifest(int n_patients, int n_lesion,
                                            int images_per_patient = 1) {
    std::vector<ManifestRow> rows;
    for (int p = 0; p < n_patients; ++p) {
        char id[16];
        std::snprintf(id, sizeof(id), "p%04d", p);
        for (int k = 0; k < images_per_patient; ++k) {
            ManifestRow r;
            r.path_x = "x.vcef";
            r.path_y = "y.vcef";
            r.patient_id = id;
            r.has_lesion = p < n_lesion;
            if (r.has_lesion) r.path_s = "s.vcef";
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

std::map<int, std::pair<int, int>> fold_counts(const FoldPlan& plan,
                                               const std::vector<ManifestRow>& manifest) {
    std::map<std::string, bool> lesion_by_patient;
    for (const auto& r : manifest)
        lesion_by_patient[r.patient_id] = lesion_by_patient[r.patient_id] || r.has_lesion;
    std::map<int, std::pair<int, int>> counts;  // fold -> (patients, lesion patients)
    for (const auto& [patient, fold] : plan.assignments) {
        ++counts[fold].first;
        if (lesion_by_patient.at(patient)) ++counts[fold].second;
    }
    return counts;
}

}  // namespace

TEST_CASE("stratified fold assignment") {
    SUBCASE("100 patients, 40 with lesions: ten folds of 10 with 4 each") {
        auto manifest = synthetic_manifest(100, 40);
        FoldPlan plan = make_folds(manifest, 10, 7);
        auto counts = fold_counts(plan, manifest);
        REQUIRE(counts.size() == 10);
        for (const auto& [fold, c] : counts) {
            CHECK(c.first == 10);
            CHECK(c.second == 4);
        }
    }
    SUBCASE("lesion-free manifests degrade to plain grouped folds") {
        auto manifest = synthetic_manifest(53, 0);
        FoldPlan plan = make_folds(manifest, 10, 3);
        auto counts = fold_counts(plan, manifest);
        int lo = 1 << 30, hi = 0;
        for (const auto& [fold, c] : counts) {
            lo = std::min(lo, c.first);
            hi = std::max(hi, c.first);
        }
        CHECK(hi - lo <= 1);
    }
    SUBCASE("one patient's images stay together") {
        auto manifest = synthetic_manifest(12, 4, 30);
        FoldPlan plan = make_folds(manifest, 10, 5);
        FoldSplit split = rotation_split(plan, manifest, 0);
        std::set<std::string> test_patients;
        for (int i : split.test) test_patients.insert(manifest[static_cast<size_t>(i)].patient_id);
        for (const auto& patient : test_patients) {
            int rows = 0;
            for (int i : split.test)
                if (manifest[static_cast<size_t>(i)].patient_id == patient) ++rows;
            CHECK(rows == 30);
        }
    }
    SUBCASE("fewer patients than folds") {
        CHECK_THROWS_AS(make_folds(synthetic_manifest(5, 2), 10, 1), ValidationError);
        CHECK_THROWS_AS(make_folds({}, 10, 1), ValidationError);
    }
}

TEST_CASE("rotation splits partition the manifest") {
    auto manifest = synthetic_manifest(40, 16, 2);
    FoldPlan plan = make_folds(manifest, 10, 11);

    std::set<int> seen_test;
    for (int r = 0; r < 10; ++r) {
        FoldSplit split = rotation_split(plan, manifest, r);
        CHECK_FALSE(split.train.empty());
        CHECK_FALSE(split.val.empty());
        CHECK_FALSE(split.test.empty());
        CHECK(split.train.size() + split.val.size() + split.test.size() == manifest.size());

        std::set<std::string> train_p, val_p, test_p;
        for (int i : split.train) train_p.insert(manifest[static_cast<size_t>(i)].patient_id);
        for (int i : split.val) val_p.insert(manifest[static_cast<size_t>(i)].patient_id);
        for (int i : split.test) test_p.insert(manifest[static_cast<size_t>(i)].patient_id);
        for (const auto& p : test_p) {
            CHECK_FALSE(train_p.count(p));
            CHECK_FALSE(val_p.count(p));
        }
        for (const auto& p : val_p) CHECK_FALSE(train_p.count(p));

        for (int i : split.test) {
            CHECK_FALSE(seen_test.count(i));  // pairwise disjoint across rotations
            seen_test.insert(i);
        }
    }
    CHECK(seen_test.size() == manifest.size());  // rotations cover the dataset

    SUBCASE("validation fold is the next fold in rotation") {
        FoldSplit split = rotation_split(plan, manifest, 3);
        for (int i : split.val)
            CHECK(plan.assignments.at(manifest[static_cast<size_t>(i)].patient_id) == 4);
    }
    SUBCASE("rotation out of range") {
        CHECK_THROWS_AS(rotation_split(plan, manifest, 10), ValidationError);
    }
}

TEST_CASE("two-fold plans carve validation out of the train fold") {
    auto manifest = synthetic_manifest(30, 12);
    FoldPlan plan = make_folds(manifest, 2, 13);
    for (int r = 0; r < 2; ++r) {
        FoldSplit split = rotation_split(plan, manifest, r);
        CHECK_FALSE(split.train.empty());
        CHECK_FALSE(split.val.empty());
        CHECK(split.train.size() + split.val.size() + split.test.size() == manifest.size());
        for (int i : split.test)
            CHECK(plan.assignments.at(manifest[static_cast<size_t>(i)].patient_id) == r);
        // stratified carve keeps some lesion patients in validation
        bool val_has_lesion = false;
        for (int i : split.val) val_has_lesion |= manifest[static_cast<size_t>(i)].has_lesion;
        CHECK(val_has_lesion);
    }
}

TEST_CASE("fragment means and aggregation") {
    FoldFragment f0;
    f0.rotation = 0;
    f0.gamma = 0.0;
    MetricRecord r;
    r.mse = 0.004;
    r.psnr = 26.5;
    r.vif = 0.17;
    r.ssim = 0.85;
    f0.records = {r, r};

    FoldFragment f1 = f0;
    f1.rotation = 1;
    for (auto& rec : f1.records) rec.psnr = 27.1;

    SUBCASE("fragment means average the records") {
        FragmentMeans m = fragment_means(f0);
        CHECK(m.n == 2);
        CHECK(m.psnr == doctest::Approx(26.5));
        CHECK(m.roi_n == 0);
    }
    SUBCASE("mean and population std over fold means, display scaling") {
        AggregateReport report = aggregate({f0, f1}, {0.0});
        REQUIRE(report.rows.size() == 1);
        const AggregateRow& row = report.rows[0];
        CHECK(row.psnr.mean == doctest::Approx(26.8).epsilon(1e-12));
        CHECK(row.psnr.std_dev == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(row.mse.mean == doctest::Approx(0.4).epsilon(1e-12));   // 0.004 in hundredths
        CHECK(row.ssim.mean == doctest::Approx(85.0).epsilon(1e-12));
        CHECK(report.text.find("26.80 ± 0.30") != std::string::npos);
        CHECK(report.text.find("0.40") != std::string::npos);
    }
    SUBCASE("identical fold means give zero spread") {
        FoldFragment same = f0;
        same.rotation = 1;
        AggregateReport report = aggregate({f0, same}, {0.0});
        CHECK(report.rows[0].psnr.std_dev == 0.0);
        CHECK(report.text.find("± 0.00") != std::string::npos);
    }
    SUBCASE("best flags go to the right columns") {
        FoldFragment g35a = f0, g35b = f1;
        g35a.gamma = g35b.gamma = 35.0;
        for (auto& rec : g35a.records) {
            rec.psnr = 28.0;
            rec.mse = 0.005;
        }
        for (auto& rec : g35b.records) {
            rec.psnr = 28.2;
            rec.mse = 0.005;
        }
        AggregateReport report = aggregate({f0, f1, g35a, g35b}, {0.0, 35.0});
        REQUIRE(report.rows.size() == 2);
        CHECK(report.rows[0].mse.best);    // baseline has the lower error
        CHECK(report.rows[1].psnr.best);   // masked variant has the higher psnr
        CHECK_FALSE(report.rows[0].psnr.best);
    }
    SUBCASE("aggregation is permutation invariant") {
        AggregateReport a = aggregate({f0, f1}, {0.0});
        AggregateReport b = aggregate({f1, f0}, {0.0});
        CHECK(a.text == b.text);
        CHECK(a.rows[0].psnr.mean == b.rows[0].psnr.mean);
    }
    SUBCASE("a single fold per variant is not aggregable") {
        CHECK_THROWS_AS(aggregate({f0}, {0.0}), ValidationError);
    }
    SUBCASE("failed fragments are excluded") {
        FoldFragment failed;
        failed.rotation = 2;
        failed.gamma = 0.0;
        failed.failed = true;
        AggregateReport report = aggregate({f0, f1, failed}, {0.0});
        CHECK(report.rows[0].folds == 2);
    }
    SUBCASE("all fragments failed") {
        FoldFragment failed = f0;
        failed.failed = true;
        CHECK_THROWS_AS(aggregate({failed}, {0.0}), ValidationError);
    }
}

TEST_CASE("heatmap rendering") {
    TempDir dir("heatmap");
    GrayImage ref = testutil::textured_image(24, 24, 1);

    SUBCASE("identical images render the minimum color everywhere") {
        auto rgb = heatmap_rgb(ref, ref, LesionMask::zeros(24, 24));
        for (uint8_t v : rgb) CHECK(v == 0);
    }
    SUBCASE("a single differing pixel lights exactly one cell") {
        std::vector<float> pix = ref.pixels();
        pix[24 * 5 + 7] = pix[24 * 5 + 7] > 0.5f ? 0.0f : 1.0f;
        GrayImage test(24, 24, kUnitRange, pix);
        auto rgb = heatmap_rgb(ref, test, LesionMask::zeros(24, 24));
        int lit = 0;
        for (size_t i = 0; i < rgb.size(); i += 3)
            if (rgb[i] || rgb[i + 1] || rgb[i + 2]) ++lit;
        CHECK(lit == 1);
    }
    SUBCASE("lesion masks draw a bounding box, empty masks do not") {
        std::vector<uint8_t> bits(24 * 24, 0);
        for (int y = 10; y < 14; ++y)
            for (int x = 6; x < 9; ++x) bits[static_cast<size_t>(y) * 24 + x] = 1;
        auto with_box = heatmap_rgb(ref, ref, LesionMask(24, 24, bits));
        int red = 0;
        for (size_t i = 0; i < with_box.size(); i += 3)
            if (with_box[i] == 255 && with_box[i + 1] == 0 && with_box[i + 2] == 0) ++red;
        CHECK(red > 0);

        heatmap(ref, ref, LesionMask(24, 24, bits), dir.path() / "h.png");
        CHECK(std::filesystem::exists(dir.path() / "h.png"));
    }
}

TEST_CASE("metrics csv round trip") {
    TempDir dir("metrics");
    MetricRecord a;
    a.sample_id = "s0";
    a.mse = 0.004;
    a.psnr = 26.5;
    a.vif = 0.17;
    a.ssim = 0.85;
    MetricRecord b = a;
    b.sample_id = "s1";
    b.roi_mse = 0.002;
    b.roi_mae = 0.03;

    write_metrics_csv({a, b}, dir.path() / "m.csv");
    auto back = read_metrics_csv(dir.path() / "m.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].sample_id == "s0");
    CHECK_FALSE(back[0].roi_mse.has_value());
    CHECK(back[1].roi_mse.has_value());
    CHECK(*back[1].roi_mae == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(back[1].mse == b.mse);
}

TEST_CASE("evaluate_split produces one record per test sample") {
    PhantomConfig cfg;
    cfg.n_samples = 3;
    cfg.image_size = 16;
    cfg.lesion_prob = 1.0;
    cfg.lesion_radius_min = 2.0;
    cfg.lesion_radius_max = 4.0;
    std::vector<PairedSample> test_set;
    for (int i = 0; i < 3; ++i) test_set.push_back(preprocess_sample(generate_sample(cfg, i), 16));

    ModelBundle bundle = build_bundle(NetConfig::micro(), 5);
    auto records = evaluate_split(bundle, test_set);
    REQUIRE(records.size() == 3);
    for (const auto& rec : records) {
        CHECK(std::isfinite(rec.mse));
        CHECK(std::isfinite(rec.ssim));
        CHECK(rec.roi_mse.has_value());
    }
}
