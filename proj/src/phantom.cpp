#include "vce/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vce/image_io.hpp"

namespace vce {

namespace {

constexpr uint64_t kPatientStream = 0x70617469ULL;  // patient-level draws
constexpr uint64_t kSampleStream = 0x73616d70ULL;   // per-sample content draws

struct Ellipse {
    double cy, cx;      // center
    double a, b;        // semi-axes, a >= b
    double cos_t, sin_t;
};

// Fraction of the pixel covered by the ellipse, 4x4 supersampling.
double coverage(const Ellipse& e, int y, int x) {
    int hits = 0;
    for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
            const double py = y + (sy + 0.5) / 4.0 - e.cy;
            const double px = x + (sx + 0.5) / 4.0 - e.cx;
            const double u = (px * e.cos_t + py * e.sin_t) / e.a;
            const double v = (-px * e.sin_t + py * e.cos_t) / e.b;
            if (u * u + v * v <= 1.0) ++hits;
        }
    }
    return hits / 16.0;
}

// Separable Gaussian blur, zero-phase, edge-clamped.
std::vector<float> gaussian_blur(const std::vector<float>& in, int h, int w, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& k : kernel) k /= sum;

    std::vector<float> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * in[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
        }
    }
    return out;
}

std::string make_patient_id(uint64_t seed, int group) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p%05d-%04x", group,
                  static_cast<unsigned>(splitmix64(seed) & 0xffff));
    return buf;
}

bool patient_has_lesion(const PhantomConfig& cfg, int group) {
    Rng rng(derive_seed(cfg.seed, kPatientStream, static_cast<uint64_t>(group)));
    return rng.bernoulli(cfg.lesion_prob);
}

std::string csv_escape_free(const std::string& s) {
    if (s.find_first_of(",\"\n") != std::string::npos)
        throw ValidationError("manifest field contains a CSV delimiter: " + s);
    return s;
}

}  // namespace

void PhantomConfig::validate() const {
    if (image_size < 8) throw ConfigError("phantom: image_size must be >= 8");
    if (n_samples < 0) throw ConfigError("phantom: n_samples must be >= 0");
    if (lesion_prob < 0.0 || lesion_prob > 1.0)
        throw ConfigError("phantom: lesion_prob must be in [0, 1]");
    if (lesion_count_min < 1 || lesion_count_max < lesion_count_min)
        throw ConfigError("phantom: bad lesion count range");
    if (lesion_radius_min < 1.0 || lesion_radius_max < lesion_radius_min)
        throw ConfigError("phantom: bad lesion radius range");
    if (lesion_radius_max > image_size / 3.0)
        throw ConfigError("phantom: lesion radius too large for the image size");
    if (le_lesion_contrast <= 0.0 || le_lesion_contrast > 0.3)
        throw ConfigError("phantom: le_lesion_contrast must be in (0, 0.3]");
    if (des_lesion_contrast < 0.5 || des_lesion_contrast > 1.0)
        throw ConfigError("phantom: des_lesion_contrast must be in [0.5, 1.0]");
    if (le_lesion_contrast >= des_lesion_contrast)
        throw ConfigError("phantom: lesion contrast must be lower in the source domain");
    if (des_background_suppression < 0.0 || des_background_suppression > 1.0)
        throw ConfigError("phantom: des_background_suppression must be in [0, 1]");
    if (background_texture_scale < 0.0 || background_texture_scale > 0.25)
        throw ConfigError("phantom: background_texture_scale must be in [0, 0.25]");
    if (patients_group_size < 1) throw ConfigError("phantom: patients_group_size must be >= 1");
}

PairedSample generate_sample(const PhantomConfig& cfg, int index) {
    cfg.validate();
    if (index < 0 || index >= cfg.n_samples)
        throw ValidationError("generate_sample: index out of range");

    const int n = cfg.image_size;
    const size_t numel = static_cast<size_t>(n) * n;
    const int group = index / cfg.patients_group_size;
    const bool lesion_bearing = patient_has_lesion(cfg, group);

    Rng rng(derive_seed(cfg.seed, kSampleStream, static_cast<uint64_t>(index)));

    // Low-frequency parenchyma-like field, normalized to a fixed amplitude.
    std::vector<float> noise(numel);
    for (float& v : noise) v = static_cast<float>(rng.normal());
    std::vector<float> low = gaussian_blur(noise, n, n, n / 12.0);
    double mean = 0.0;
    for (float v : low) mean += v;
    mean /= static_cast<double>(numel);
    double var = 0.0;
    for (float v : low) var += (v - mean) * (v - mean);
    var /= static_cast<double>(numel);
    const double amp = var > 0.0 ? cfg.background_texture_scale / std::sqrt(var) : 0.0;
    for (float& v : low) v = static_cast<float>((v - mean) * amp);

    // Fine grain, one field per domain.
    std::vector<float> grain_x(numel), grain_y(numel);
    for (float& v : grain_x) v = static_cast<float>(rng.normal(0.0, 0.01));
    for (float& v : grain_y) v = static_cast<float>(rng.normal(0.0, 0.01));

    // Lesion stamps: union coverage of anti-aliased ellipses.
    std::vector<float> cov(numel, 0.0f);
    if (lesion_bearing) {
        const int count = static_cast<int>(rng.uniform_int(cfg.lesion_count_min, cfg.lesion_count_max));
        for (int k = 0; k < count; ++k) {
            Ellipse e;
            e.a = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
            e.b = e.a * rng.uniform(0.55, 1.0);
            const double theta = rng.uniform(0.0, M_PI);
            e.cos_t = std::cos(theta);
            e.sin_t = std::sin(theta);
            const double margin = e.a + 1.0;
            e.cy = rng.uniform(margin, n - 1 - margin);
            e.cx = rng.uniform(margin, n - 1 - margin);
            const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.a - 1)));
            const int y1 = std::min(n - 1, static_cast<int>(std::ceil(e.cy + e.a + 1)));
            const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.a - 1)));
            const int x1 = std::min(n - 1, static_cast<int>(std::ceil(e.cx + e.a + 1)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    float c = static_cast<float>(coverage(e, y, x));
                    float& dst = cov[static_cast<size_t>(y) * n + x];
                    dst = std::max(dst, c);
                }
            }
        }
    }

    const float le_base = 0.45f;
    const float des_base = 0.12f;
    const float keep = static_cast<float>(1.0 - cfg.des_background_suppression);

    std::vector<float> px(numel), py(numel);
    std::vector<uint8_t> mask(numel);
    for (size_t i = 0; i < numel; ++i) {
        float vx = le_base + low[i] + grain_x[i] + static_cast<float>(cfg.le_lesion_contrast) * cov[i];
        float vy = des_base + low[i] * keep + grain_y[i] +
                   static_cast<float>(cfg.des_lesion_contrast) * cov[i];
        px[i] = std::clamp(vx, 0.0f, 1.0f);
        py[i] = std::clamp(vy, 0.0f, 1.0f);
        mask[i] = cov[i] >= 0.5f ? 1 : 0;
    }

    GrayImage x(n, n, kUnitRange, std::move(px));
    GrayImage y(n, n, kUnitRange, std::move(py));
    LesionMask s(n, n, std::move(mask));

    // The lesion stamp must survive to the mask, and the target domain must
    // show it brighter than the source domain.
    if (lesion_bearing && !s.any())
        throw ValidationError("generate_sample: lesion stamp produced an empty mask");
    if (s.any()) {
        double mx = 0.0, my = 0.0;
        size_t cnt = 0;
        for (size_t i = 0; i < numel; ++i) {
            if (s.pixels()[i]) {
                mx += x.pixels()[i];
                my += y.pixels()[i];
                ++cnt;
            }
        }
        if (!(my / cnt > mx / cnt))
            throw ValidationError("generate_sample: masked intensity ordering violated");
    }

    return PairedSample::make(std::move(x), std::move(y), std::move(s),
                              make_patient_id(cfg.seed, group));
}

std::vector<ManifestRow> generate_dataset(const PhantomConfig& cfg,
                                          const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    std::vector<ManifestRow> rows;
    rows.reserve(static_cast<size_t>(cfg.n_samples));
    for (int i = 0; i < cfg.n_samples; ++i) {
        PairedSample sample = generate_sample(cfg, i);
        char name[32];
        ManifestRow row;
        std::snprintf(name, sizeof(name), "x_%05d.vcef", i);
        row.path_x = name;
        save_pfloat(sample.x, out_dir / name);
        std::snprintf(name, sizeof(name), "y_%05d.vcef", i);
        row.path_y = name;
        save_pfloat(sample.y, out_dir / name);
        if (sample.has_lesion) {
            std::snprintf(name, sizeof(name), "s_%05d.vcef", i);
            row.path_s = name;
            std::vector<float> bits(sample.s.numel());
            for (size_t k = 0; k < bits.size(); ++k) bits[k] = sample.s.pixels()[k] ? 1.0f : 0.0f;
            save_pfloat(GrayImage(sample.s.height(), sample.s.width(), kUnitRange, std::move(bits)),
                        out_dir / name);
        }
        row.patient_id = sample.patient_id;
        row.has_lesion = sample.has_lesion;
        rows.push_back(std::move(row));
    }
    write_manifest(rows, out_dir / "manifest.csv");
    return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_manifest: cannot open " + path.string() + " for writing");
    os << "path_x,path_y,path_s,patient_id,has_lesion\n";
    for (const auto& r : rows) {
        os << csv_escape_free(r.path_x) << ',' << csv_escape_free(r.path_y) << ','
           << csv_escape_free(r.path_s) << ',' << csv_escape_free(r.patient_id) << ','
           << (r.has_lesion ? 1 : 0) << '\n';
    }
    if (!os) throw IoError("write_manifest: write failed for " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("read_manifest: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "path_x,path_y,path_s,patient_id,has_lesion")
        throw IoError("read_manifest: bad header in " + path.string());
    std::vector<ManifestRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRow r;
        std::string flag;
        if (!std::getline(ls, r.path_x, ',') || !std::getline(ls, r.path_y, ',') ||
            !std::getline(ls, r.path_s, ',') || !std::getline(ls, r.patient_id, ',') ||
            !std::getline(ls, flag))
            throw IoError("read_manifest: malformed row in " + path.string() + ": " + line);
        if (flag != "0" && flag != "1")
            throw IoError("read_manifest: bad has_lesion flag in " + path.string());
        r.has_lesion = flag == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

PairedSample load_manifest_sample(const ManifestRow& row, const std::filesystem::path& base_dir) {
    std::optional<std::filesystem::path> mask_path;
    if (!row.path_s.empty()) mask_path = base_dir / row.path_s;
    PairedSample sample =
        load_sample(base_dir / row.path_x, base_dir / row.path_y, mask_path, row.patient_id);
    if (sample.has_lesion != row.has_lesion)
        throw ValidationError("load_manifest_sample: manifest has_lesion flag disagrees with mask " +
                              row.path_s);
    return sample;
}

}  // namespace vce
