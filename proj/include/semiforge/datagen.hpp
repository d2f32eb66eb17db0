#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace semiforge {

// Long-tailed split profile. gamma < 1 encodes a reversed (tail-heavy) pool.
struct ClassProfile {
    int K = 2;
    long long N1 = 1;       // head labeled count
    long long M1 = 1;       // head unlabeled count
    double gamma_l = 1.0;
    double gamma_u = 1.0;

    void validate() const;  // throws std::invalid_argument
};

struct Sample {
    std::vector<double> x;
    int label = 0;  // for unlabeled samples this is the hidden label, evaluation-only

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    int K = 0;
    int d = 0;
    std::uint64_t seed = 0;
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;
    std::vector<Sample> test;  // exactly class-balanced

    bool operator==(const Dataset&) const = default;
};

struct AugmentConfig {
    double sigma_weak = 0.05;   // noise scale, fraction of per-feature std
    double sigma_strong = 0.25;
    double drop_prob = 0.3;     // strong-view feature zeroing probability

    void validate() const;  // throws std::invalid_argument
};

struct ClassCounts {
    std::vector<long long> labeled;    // N_k
    std::vector<long long> unlabeled;  // M_k
};

// N_k = round(N1 * gamma_l^(-(k-1)/(K-1))), M_k likewise with gamma_u,
// each clamped to >= 1. k is 1-based in the formula, 0-based in the vectors.
ClassCounts class_counts(const ClassProfile& profile);

// Gaussian clusters around seeded hypersphere centers with min pairwise
// center distance = class_sep. Deterministic given seed.
Dataset synth_dataset(const ClassProfile& profile, int d, double class_sep,
                      int test_per_class, std::uint64_t seed);

// Per-feature standard deviation over labeled + unlabeled samples.
std::vector<double> feature_std(const Dataset& ds);

std::vector<double> augment_weak(std::span<const double> x, const AugmentConfig& cfg,
                                 std::span<const double> feat_std, std::mt19937& rng);
std::vector<double> augment_strong(std::span<const double> x, const AugmentConfig& cfg,
                                   std::span<const double> feat_std, std::mt19937& rng);

// Line-based UTF-8 format, exact round-trip. Malformed input throws
// std::runtime_error carrying the offending line number.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// %.17g round-trip formatting used by all text serializers.
std::string fmt_double(double x);

}  // namespace semiforge
