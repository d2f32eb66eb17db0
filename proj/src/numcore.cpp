#include "semiforge/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semiforge {

bool Mat::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> matvec(const Mat& a, std::span<const double> x) {
    if (x.size() != a.cols) throw std::invalid_argument("matvec: size mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        double acc = 0.0;
        const double* row = a.data.data() + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

std::vector<double> matvec_t(const Mat& a, std::span<const double> x) {
    if (x.size() != a.rows) throw std::invalid_argument("matvec_t: size mismatch");
    std::vector<double> y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + r * a.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

void add_outer(Mat& a, std::span<const double> u, std::span<const double> v, double scale) {
    if (u.size() != a.rows || v.size() != a.cols) throw std::invalid_argument("add_outer: size mismatch");
    for (std::size_t r = 0; r < a.rows; ++r) {
        double* row = a.data.data() + r * a.cols;
        const double ur = scale * u[r];
        for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

ProbVec ProbVec::uniform(std::size_t k) {
    return ProbVec(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

ProbVec ProbVec::one_hot(std::size_t k, std::size_t index) {
    std::vector<double> v(k, 0.0);
    v.at(index) = 1.0;
    return ProbVec(std::move(v));
}

bool ProbVec::valid(double tol) const {
    if (v.empty()) return false;
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

std::size_t argmax_index(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

double max_value(std::span<const double> v) {
    return v[argmax_index(v)];
}

ProbVec softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("softmax: temperature must be positive");
    for (double x : logits)
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite logit");

    double mx = logits[0] / temperature;
    for (double x : logits) mx = std::max(mx, x / temperature);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / temperature - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return ProbVec(std::move(out));
}

double cross_entropy(const ProbVec& target, const ProbVec& prediction) {
    if (target.size() != prediction.size())
        throw std::invalid_argument("cross_entropy: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double p = std::max(prediction.v[i], kLogClamp);
        acc -= target.v[i] * std::log(p);
    }
    return acc;
}

double entropy(const ProbVec& p) {
    double acc = 0.0;
    for (double x : p.v)
        if (x > 0.0) acc -= x * std::log(x);
    return acc;
}

double euclidean_dist(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("euclidean_dist: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  std::span<const double> analytic_grad,
                  std::span<const double> params,
                  double step) {
    if (analytic_grad.size() != params.size())
        throw std::invalid_argument("grad_check: gradient/parameter length mismatch");
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    std::vector<double> p(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + step;
        const double lp = loss_fn(p);
        p[i] = saved - step;
        const double lm = loss_fn(p);
        p[i] = saved;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw std::runtime_error("grad_check: non-finite loss");
        const double numeric = (lp - lm) / (2.0 * step);
        const double analytic = analytic_grad[i];
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace semiforge
