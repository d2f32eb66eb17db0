#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace semiforge {

// Row-major dense matrix of 64-bit reals.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool all_finite() const;
};

// y = A x
std::vector<double> matvec(const Mat& a, std::span<const double> x);
// y = A^T x
std::vector<double> matvec_t(const Mat& a, std::span<const double> x);
// A += scale * (u outer v), u length rows, v length cols
void add_outer(Mat& a, std::span<const double> u, std::span<const double> v, double scale = 1.0);

// Discrete probability distribution: entries in [0,1], sums to 1 within 1e-9.
struct ProbVec {
    std::vector<double> v;

    ProbVec() = default;
    explicit ProbVec(std::vector<double> vals) : v(std::move(vals)) {}
    ProbVec(std::initializer_list<double> vals) : v(vals) {}
    static ProbVec uniform(std::size_t k);
    static ProbVec one_hot(std::size_t k, std::size_t index);

    std::size_t size() const { return v.size(); }
    double operator[](std::size_t i) const { return v[i]; }
    bool valid(double tol = 1e-9) const;
};

// Lowest index wins on ties.
std::size_t argmax_index(std::span<const double> v);
double max_value(std::span<const double> v);

// softmax(logits / temperature), max-subtracted for stability.
// Throws std::invalid_argument on non-finite input or temperature <= 0.
ProbVec softmax(std::span<const double> logits, double temperature = 1.0);

// -sum_k target_k * ln(prediction_k), prediction clamped to >= 1e-12.
// Throws std::invalid_argument on length mismatch.
double cross_entropy(const ProbVec& target, const ProbVec& prediction);

// -sum p_i ln p_i with 0*ln(0) := 0.
double entropy(const ProbVec& p);

// L2 norm of a - b. Throws std::invalid_argument on length mismatch.
double euclidean_dist(std::span<const double> a, std::span<const double> b);

inline constexpr double kLogClamp = 1e-12;
inline constexpr double kDefaultFdStep = 1e-4;

// Central finite differences per coordinate against the supplied analytic
// gradient. Returns max over coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// Throws std::runtime_error if loss_fn returns a non-finite value.
double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  std::span<const double> analytic_grad,
                  std::span<const double> params,
                  double step = kDefaultFdStep);

}  // namespace semiforge
