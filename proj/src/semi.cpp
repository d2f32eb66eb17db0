#include "semiforge/semi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace semiforge {

Hardness hardness_class(const ProbVec& p, double tau) {
    // boundary max p == tau counts as ultra-hard so that ultra_hard <=> !mask_std
    const double m = max_value(p.v);
    if (m >= 0.95) return Hardness::easy;
    if (m > tau) return Hardness::hard;
    return Hardness::ultra_hard;
}

bool mask_std(const ProbVec& p, double tau) {
    return max_value(p.v) > tau;
}

double hardness_weight(const ProbVec& p, double s) {
    if (!(s > 0.0) || s > 1.0) throw std::invalid_argument("hardness_weight: s must be in (0,1]");
    const double log_k = std::log(static_cast<double>(p.size()));
    if (log_k <= 0.0) return 1.0;  // K=1 degenerate: entropy is identically 0
    return (entropy(p) / log_k) * s + (1.0 - s);
}

void SemiHyper::validate() const {
    if (!(tau > 0.0) || !(tau < 1.0)) throw std::invalid_argument("SemiHyper: tau must be in (0,1)");
    if (!(s > 0.0) || s > 1.0) throw std::invalid_argument("SemiHyper: s must be in (0,1]");
    if (!(T_e > 0.0) || !(T_p > 0.0)) throw std::invalid_argument("SemiHyper: temperatures must be > 0");
    if (T_b < 0.0) throw std::invalid_argument("SemiHyper: T_b must be >= 0");
    if (alpha < 0.0) throw std::invalid_argument("SemiHyper: alpha must be >= 0");
    if (!(beta > 0.0) || !(beta < 1.0)) throw std::invalid_argument("SemiHyper: beta must be in (0,1)");
    if (decay_interval < 1) throw std::invalid_argument("SemiHyper: decay_interval must be >= 1");
    if (bank_capacity < 1) throw std::invalid_argument("SemiHyper: bank_capacity must be >= 1");
    if (!(rho > 0.0) || rho > 1.0) throw std::invalid_argument("SemiHyper: rho must be in (0,1]");
    if (!(eps_pi > 0.0)) throw std::invalid_argument("SemiHyper: eps_pi must be > 0");
}

MemoryBank::MemoryBank(int num_classes, int capacity, double beta, int decay_interval, bool fifo)
    : cells_(num_classes), capacity_(capacity), beta_(beta), decay_interval_(decay_interval),
      fifo_(fifo) {
    if (num_classes < 1 || capacity < 1) throw std::invalid_argument("MemoryBank: bad shape");
    if (!fifo && (!(beta > 0.0) || !(beta < 1.0)))
        throw std::invalid_argument("MemoryBank: beta must be in (0,1)");
}

bool MemoryBank::insert(int k, std::span<const double> embedding, double confidence) {
    if (k < 0 || k >= num_classes()) throw std::invalid_argument("MemoryBank::insert: bad class");
    if (!(confidence > 0.0) || confidence > 1.0)
        throw std::invalid_argument("MemoryBank::insert: confidence must be in (0,1]");
    auto& cell = cells_[k];
    BankEntry entry{std::vector<double>(embedding.begin(), embedding.end()), confidence};
    if (static_cast<int>(cell.size()) < capacity_) {
        cell.push_back(std::move(entry));
        return true;
    }
    if (fifo_) {
        cell.erase(cell.begin());
        cell.push_back(std::move(entry));
        return true;
    }
    std::size_t min_idx = 0;
    for (std::size_t i = 1; i < cell.size(); ++i)
        if (cell[i].confidence < cell[min_idx].confidence) min_idx = i;
    if (confidence > cell[min_idx].confidence) {
        cell[min_idx] = std::move(entry);
        return true;
    }
    return false;
}

void MemoryBank::decay() {
    if (fifo_) return;
    for (auto& cell : cells_)
        for (BankEntry& e : cell) e.confidence *= beta_;
}

void MemoryBank::tick() {
    ++step_count_;
    if (step_count_ % decay_interval_ == 0) decay();
}

bool PrototypeSet::any_valid() const {
    return std::any_of(valid.begin(), valid.end(), [](char v) { return v != 0; });
}

PrototypeSet prototypes(const MemoryBank& bank) {
    PrototypeSet out;
    out.center.resize(bank.num_classes());
    out.valid.assign(bank.num_classes(), 0);
    for (int k = 0; k < bank.num_classes(); ++k) {
        const auto& cell = bank.cell(k);
        if (cell.empty()) continue;
        std::vector<double> mean(cell.front().embedding.size(), 0.0);
        for (const BankEntry& e : cell)
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e.embedding[i];
        for (double& v : mean) v /= static_cast<double>(cell.size());
        out.center[k] = std::move(mean);
        out.valid[k] = 1;
    }
    return out;
}

std::optional<ProbVec> semantic_label(std::span<const double> e_strong,
                                      const PrototypeSet& protos, double T_p) {
    if (!(T_p > 0.0)) throw std::invalid_argument("semantic_label: T_p must be > 0");
    if (!protos.any_valid()) return std::nullopt;

    const std::size_t K = protos.valid.size();
    std::vector<double> score(K, -std::numeric_limits<double>::infinity());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
        if (!protos.valid[k]) continue;
        score[k] = -euclidean_dist(e_strong, protos.center[k]) / T_p;
        mx = std::max(mx, score[k]);
    }
    std::vector<double> out(K, 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (!protos.valid[k]) continue;
        out[k] = std::exp(score[k] - mx);
        sum += out[k];
    }
    for (double& v : out) v /= sum;
    return ProbVec(std::move(out));
}

ProbVec mix_labels(const ProbVec& q, const ProbVec& q_hat, double gamma, double w_k) {
    if (q.size() != q_hat.size()) throw std::invalid_argument("mix_labels: length mismatch");
    double lam = gamma * w_k;
    if (lam < 0.0 || lam > 1.0) {
        std::cerr << "semiforge: warning: gamma*w_k = " << lam << " outside [0,1], clamping\n";
        lam = std::clamp(lam, 0.0, 1.0);
    }
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        out[i] = (1.0 - lam) * q.v[i] + lam * q_hat.v[i];
    return ProbVec(std::move(out));
}

double mix_schedule(int epoch_current, int epoch_total, double alpha) {
    if (epoch_current < 0 || epoch_current > epoch_total)
        throw std::invalid_argument("mix_schedule: epoch out of range");
    if (epoch_total == 0) return 0.0;
    return alpha * static_cast<double>(epoch_current) / static_cast<double>(epoch_total);
}

ClassDistTracker::ClassDistTracker(int num_classes, double rho, double eps)
    : m_tilde_(ProbVec::uniform(num_classes)), pi_counts_(num_classes, 0.0), rho_(rho), eps_(eps) {
    if (num_classes < 2) throw std::invalid_argument("ClassDistTracker: need >= 2 classes");
    if (!(rho > 0.0) || rho > 1.0) throw std::invalid_argument("ClassDistTracker: rho in (0,1]");
    if (!(eps > 0.0)) throw std::invalid_argument("ClassDistTracker: eps must be > 0");
}

namespace {

// (base + eps) / (1 + K*eps), keeping every entry >= eps/(1+K*eps)
ProbVec smooth(const std::vector<double>& base, double eps) {
    const double denom = 1.0 + static_cast<double>(base.size()) * eps;
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = (base[i] + eps) / denom;
    return ProbVec(std::move(out));
}

}  // namespace

void ClassDistTracker::update(std::span<const int> labeled_labels,
                              std::span<const int> masked_pseudo_labels) {
    const int K = num_classes();
    auto check = [K](int k) {
        if (k < 0 || k >= K) throw std::invalid_argument("ClassDistTracker: label out of range");
    };
    if (!masked_pseudo_labels.empty()) {
        std::vector<double> hist(K, 0.0);
        for (int k : masked_pseudo_labels) {
            check(k);
            hist[k] += 1.0;
        }
        for (double& v : hist) v /= static_cast<double>(masked_pseudo_labels.size());
        const ProbVec smoothed = smooth(hist, eps_);
        for (int k = 0; k < K; ++k)
            m_tilde_.v[k] = (1.0 - rho_) * m_tilde_.v[k] + rho_ * smoothed.v[k];
    }
    for (int k : labeled_labels) {
        check(k);
        pi_counts_[k] += 1.0;
    }
    for (int k : masked_pseudo_labels) pi_counts_[k] += 1.0;
}

ProbVec ClassDistTracker::pi() const {
    const int K = num_classes();
    double total = 0.0;
    for (double c : pi_counts_) total += c;
    std::vector<double> base(K, 1.0 / static_cast<double>(K));
    if (total > 0.0)
        for (int k = 0; k < K; ++k) base[k] = pi_counts_[k] / total;
    return smooth(base, eps_);
}

double ClassDistTracker::class_weight(int k) const {
    if (k < 0 || k >= num_classes()) throw std::invalid_argument("class_weight: bad class");
    return m_tilde_.v[k] / max_value(m_tilde_.v);
}

bool mask_bal(const ProbVec& p_bal, const ProbVec& pi, double T_b, double tau) {
    if (p_bal.size() != pi.size()) throw std::invalid_argument("mask_bal: length mismatch");
    for (double v : pi.v)
        if (!(v > 0.0)) throw std::invalid_argument("mask_bal: pi must be strictly positive");
    const std::size_t k = argmax_index(p_bal.v);
    return p_bal.v[k] - T_b * std::log(pi.v[k]) > tau;
}

namespace {

double mean_head_ce(std::span<const std::vector<double>> logits, std::span<const int> labels) {
    if (logits.empty()) throw std::invalid_argument("supervised loss: empty batch");
    if (logits.size() != labels.size())
        throw std::invalid_argument("supervised loss: logits/labels mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const ProbVec p = softmax(logits[i]);
        const auto k = static_cast<std::size_t>(labels[i]);
        if (k >= p.size()) throw std::invalid_argument("supervised loss: label out of range");
        acc += cross_entropy(ProbVec::one_hot(p.size(), k), p);
    }
    return acc / static_cast<double>(logits.size());
}

}  // namespace

double loss_supervised(std::span<const std::vector<double>> logits, std::span<const int> labels) {
    return mean_head_ce(logits, labels);
}

double loss_unlabeled(std::span<const PseudoRecord> records, std::span<const ProbVec> strong_probs) {
    if (records.size() != strong_probs.size())
        throw std::runtime_error("loss_unlabeled: record/prediction misalignment");
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const PseudoRecord& r = records[i];
        if (!r.mask_std_bit) continue;
        acc += r.weight * cross_entropy(r.q_prime, strong_probs[i]);
    }
    return acc / static_cast<double>(records.size());
}

double loss_embed_align(std::span<const PseudoRecord> records,
                        std::span<const std::vector<double>> e_weak,
                        std::span<const std::vector<double>> e_strong, double T_e) {
    if (records.size() != e_weak.size() || records.size() != e_strong.size())
        throw std::runtime_error("loss_embed_align: misaligned batch");
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].mask_std_bit) continue;
        const ProbVec target = softmax(e_weak[i], 5.0 * T_e);
        const ProbVec pred = softmax(e_strong[i], T_e);
        acc += cross_entropy(target, pred);
    }
    return acc / static_cast<double>(records.size());
}

double loss_balanced_sup(std::span<const std::vector<double>> logits, std::span<const int> labels) {
    return mean_head_ce(logits, labels);
}

double loss_balanced_unsup(std::span<const PseudoRecord> records,
                           std::span<const ProbVec> strong_probs) {
    if (records.size() != strong_probs.size())
        throw std::runtime_error("loss_balanced_unsup: record/prediction misalignment");
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const PseudoRecord& r = records[i];
        if (!r.mask_bal_bit) continue;
        acc += cross_entropy(r.q_prime, strong_probs[i]);
    }
    return acc / static_cast<double>(records.size());
}

double loss_total(double l_s, double l_u, double l_ea, double l_bs, double l_bu) {
    for (double v : {l_s, l_u, l_ea, l_bs, l_bu})
        if (!std::isfinite(v)) throw std::runtime_error("loss_total: training divergence");
    return l_s + l_u + l_ea + l_bs + l_bu;
}

std::vector<double> softmax_ce_grad(const ProbVec& probs, const ProbVec& target) {
    if (probs.size() != target.size()) throw std::invalid_argument("softmax_ce_grad: length mismatch");
    std::vector<double> g(probs.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = probs.v[i] - target.v[i];
    return g;
}

}  // namespace semiforge
