#include "semiforge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "semiforge/numcore.hpp"

namespace semiforge {

void ClassProfile::validate() const {
    if (K < 2) throw std::invalid_argument("ClassProfile: K must be >= 2");
    if (N1 < 1 || M1 < 1) throw std::invalid_argument("ClassProfile: head counts must be >= 1");
    if (!(gamma_l > 0.0) || !(gamma_u > 0.0))
        throw std::invalid_argument("ClassProfile: imbalance ratios must be > 0");
}

void AugmentConfig::validate() const {
    // <= rather than < so the degenerate all-zero config stays expressible
    if (sigma_weak < 0.0 || !(sigma_weak <= sigma_strong))
        throw std::invalid_argument("AugmentConfig: need 0 <= sigma_weak <= sigma_strong");
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw std::invalid_argument("AugmentConfig: drop_prob must be in [0,1)");
}

namespace {

long long tail_count(long long head, double gamma, int k, int K) {
    // head * gamma^(-(k-1)/(K-1)), rounded, clamped to >= 1
    const double exponent = -static_cast<double>(k - 1) / static_cast<double>(K - 1);
    const double raw = static_cast<double>(head) * std::pow(gamma, exponent);
    if (!std::isfinite(raw) || raw > 9.0e15)
        throw std::invalid_argument("ClassProfile: per-class count overflow");
    return std::max(1LL, static_cast<long long>(std::llround(raw)));
}

}  // namespace

ClassCounts class_counts(const ClassProfile& profile) {
    profile.validate();
    ClassCounts out;
    out.labeled.resize(profile.K);
    out.unlabeled.resize(profile.K);
    for (int k = 1; k <= profile.K; ++k) {
        out.labeled[k - 1] = tail_count(profile.N1, profile.gamma_l, k, profile.K);
        out.unlabeled[k - 1] = tail_count(profile.M1, profile.gamma_u, k, profile.K);
    }
    out.labeled[0] = profile.N1;
    out.unlabeled[0] = profile.M1;
    return out;
}

namespace {

// K unit directions, re-drawn until no two nearly coincide, then scaled so the
// min pairwise distance equals class_sep exactly.
std::vector<std::vector<double>> place_centers(int K, int d, double class_sep, std::mt19937& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> dirs;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        dirs.assign(K, std::vector<double>(d, 0.0));
        for (auto& dir : dirs) {
            double norm = 0.0;
            for (double& v : dir) {
                v = gauss(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-12) norm = 1.0;
            for (double& v : dir) v /= norm;
        }
        double min_dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i < K; ++i)
            for (int j = i + 1; j < K; ++j)
                min_dist = std::min(min_dist, euclidean_dist(dirs[i], dirs[j]));
        if (min_dist > 0.1) {
            const double radius = class_sep / min_dist;
            for (auto& dir : dirs)
                for (double& v : dir) v *= radius;
            return dirs;
        }
    }
    throw std::runtime_error("synth_dataset: failed to place distinct class centers");
}

}  // namespace

Dataset synth_dataset(const ClassProfile& profile, int d, double class_sep,
                      int test_per_class, std::uint64_t seed) {
    profile.validate();
    if (d < 2) throw std::invalid_argument("synth_dataset: d must be >= 2");
    if (!(class_sep > 0.0)) throw std::invalid_argument("synth_dataset: class_sep must be > 0");
    if (test_per_class < 1) throw std::invalid_argument("synth_dataset: test_per_class must be >= 1");

    const ClassCounts counts = class_counts(profile);
    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Dataset ds;
    ds.K = profile.K;
    ds.d = d;
    ds.seed = seed;

    const auto centers = place_centers(profile.K, d, class_sep, rng);
    auto draw = [&](int k) {
        Sample s;
        s.label = k;
        s.x.resize(d);
        for (int i = 0; i < d; ++i) s.x[i] = centers[k][i] + gauss(rng);
        return s;
    };

    for (int k = 0; k < profile.K; ++k)
        for (long long i = 0; i < counts.labeled[k]; ++i) ds.labeled.push_back(draw(k));
    for (int k = 0; k < profile.K; ++k)
        for (long long i = 0; i < counts.unlabeled[k]; ++i) ds.unlabeled.push_back(draw(k));
    for (int k = 0; k < profile.K; ++k)
        for (int i = 0; i < test_per_class; ++i) ds.test.push_back(draw(k));
    return ds;
}

std::vector<double> feature_std(const Dataset& ds) {
    std::vector<double> mean(ds.d, 0.0), m2(ds.d, 0.0);
    long long n = 0;
    auto accumulate = [&](const std::vector<Sample>& split) {
        for (const Sample& s : split) {
            ++n;
            for (int i = 0; i < ds.d; ++i) {
                const double delta = s.x[i] - mean[i];
                mean[i] += delta / static_cast<double>(n);
                m2[i] += delta * (s.x[i] - mean[i]);
            }
        }
    };
    accumulate(ds.labeled);
    accumulate(ds.unlabeled);
    std::vector<double> out(ds.d, 1.0);
    if (n > 1)
        for (int i = 0; i < ds.d; ++i) out[i] = std::sqrt(m2[i] / static_cast<double>(n - 1));
    return out;
}

std::vector<double> augment_weak(std::span<const double> x, const AugmentConfig& cfg,
                                 std::span<const double> feat_std, std::mt19937& rng) {
    cfg.validate();
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += cfg.sigma_weak * feat_std[i] * gauss(rng);
    return out;
}

std::vector<double> augment_strong(std::span<const double> x, const AugmentConfig& cfg,
                                   std::span<const double> feat_std, std::mt19937& rng) {
    cfg.validate();
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += cfg.sigma_strong * feat_std[i] * gauss(rng);
    for (double& v : out)
        if (unit(rng) < cfg.drop_prob) v = 0.0;
    return out;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

const char* split_name(int which) {
    switch (which) {
        case 0: return "labeled";
        case 1: return "unlabeled";
        default: return "test";
    }
}

[[noreturn]] void parse_fail(const std::string& path, long line, const std::string& msg) {
    std::ostringstream os;
    os << path << ":" << line << ": " << msg;
    throw std::runtime_error(os.str());
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    out << "semiforge-dataset v1 K=" << ds.K << " d=" << ds.d << " seed=" << ds.seed << "\n";
    const std::vector<Sample>* splits[3] = {&ds.labeled, &ds.unlabeled, &ds.test};
    for (int which = 0; which < 3; ++which) {
        for (const Sample& s : *splits[which]) {
            out << split_name(which) << "," << s.label;
            for (double v : s.x) out << "," << fmt_double(v);
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);

    std::string line;
    long line_no = 1;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing header");

    Dataset ds;
    {
        std::istringstream hs(line);
        std::string magic, version, kv;
        hs >> magic >> version;
        if (magic != "semiforge-dataset" || version != "v1")
            parse_fail(path, 1, "bad header, expected 'semiforge-dataset v1'");
        bool have_k = false, have_d = false, have_seed = false;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) parse_fail(path, 1, "bad header field '" + kv + "'");
            const std::string key = kv.substr(0, eq);
            const std::string val = kv.substr(eq + 1);
            try {
                if (key == "K") { ds.K = std::stoi(val); have_k = true; }
                else if (key == "d") { ds.d = std::stoi(val); have_d = true; }
                else if (key == "seed") { ds.seed = std::stoull(val); have_seed = true; }
                else parse_fail(path, 1, "unknown header field '" + key + "'");
            } catch (const std::invalid_argument&) {
                parse_fail(path, 1, "bad header value for '" + key + "'");
            }
        }
        if (!have_k || !have_d || !have_seed) parse_fail(path, 1, "header missing K/d/seed");
        if (ds.K < 2 || ds.d < 1) parse_fail(path, 1, "header K/d out of range");
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != static_cast<std::size_t>(ds.d) + 2)
            parse_fail(path, line_no, "expected " + std::to_string(ds.d + 2) + " fields, got " +
                                          std::to_string(fields.size()));
        Sample s;
        try {
            s.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            parse_fail(path, line_no, "bad label '" + fields[1] + "'");
        }
        if (s.label < 0 || s.label >= ds.K) parse_fail(path, line_no, "label out of range");
        s.x.resize(ds.d);
        for (int i = 0; i < ds.d; ++i) {
            const std::string& f = fields[i + 2];
            char* end = nullptr;
            s.x[i] = std::strtod(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0')
                parse_fail(path, line_no, "bad feature value '" + f + "'");
        }
        if (fields[0] == "labeled") ds.labeled.push_back(std::move(s));
        else if (fields[0] == "unlabeled") ds.unlabeled.push_back(std::move(s));  // hidden label, eval-only
        else if (fields[0] == "test") ds.test.push_back(std::move(s));
        else parse_fail(path, line_no, "unknown split '" + fields[0] + "'");
    }
    return ds;
}

}  // namespace semiforge
