#pragma once

#include <optional>
#include <span>
#include <vector>

#include "semiforge/numcore.hpp"

namespace semiforge {

enum class Hardness { easy, hard, ultra_hard };

// easy: max p >= 0.95; hard: tau < max p < 0.95; ultra_hard: max p <= tau.
Hardness hardness_class(const ProbVec& p, double tau);

// 1 iff max p strictly exceeds tau.
bool mask_std(const ProbVec& p, double tau);

// w = (entropy(p)/ln K) * s + (1 - s), in [1-s, 1].
double hardness_weight(const ProbVec& p, double s);

struct SemiHyper {
    double tau = 0.7;           // confidence threshold
    double s = 0.5;             // entropy scale; xi = 1 - s
    double T_e = 0.1;           // embedding-alignment temperature
    double T_p = 1.0;           // prototype temperature
    double T_b = 0.5;           // balanced-mask temperature
    double alpha = 1.0;         // mixing schedule scale
    double beta = 0.999;        // bank confidence decay factor
    int decay_interval = 50;    // bank decay every n steps
    int bank_capacity = 64;     // per-class cell capacity
    double rho = 0.05;          // tracker EMA rate
    double eps_pi = 1e-3;       // distribution smoothing
    bool bal_logit_adjust = false;  // adds T_b*ln(pi) to balanced logits in the losses

    double xi() const { return 1.0 - s; }
    void validate() const;  // throws std::invalid_argument
};

struct BankEntry {
    std::vector<double> embedding;
    double confidence = 0.0;
};

// Per-class fixed-capacity store of strong-view embeddings keyed by pseudo-label
// confidence, with periodic multiplicative confidence decay. In fifo mode
// (standard balanced bank, used by the no-bank ablation) confidence gating and
// decay are disabled and the oldest entry is evicted instead.
class MemoryBank {
public:
    MemoryBank(int num_classes, int capacity, double beta, int decay_interval, bool fifo = false);

    // Accepts when the cell has space or confidence strictly exceeds the cell
    // minimum (replacing that minimum). Returns whether the entry was stored.
    bool insert(int k, std::span<const double> embedding, double confidence);

    // Multiplies every stored confidence by beta; embeddings unchanged.
    void decay();

    // Advances the step counter; applies decay() every decay_interval steps.
    void tick();

    const std::vector<BankEntry>& cell(int k) const { return cells_.at(k); }
    int num_classes() const { return static_cast<int>(cells_.size()); }
    int capacity() const { return capacity_; }

private:
    std::vector<std::vector<BankEntry>> cells_;
    int capacity_;
    double beta_;
    int decay_interval_;
    long long step_count_ = 0;
    bool fifo_;
};

struct PrototypeSet {
    std::vector<std::vector<double>> center;  // per-class mean embedding
    std::vector<char> valid;                  // 0 for empty cells

    bool any_valid() const;
};

PrototypeSet prototypes(const MemoryBank& bank);

// softmax over classes of -dist(e, c_k)/T_p; empty-cell classes get probability
// zero. nullopt when no prototype is valid (caller falls back to q' = q).
std::optional<ProbVec> semantic_label(std::span<const double> e_strong,
                                      const PrototypeSet& protos, double T_p);

// q' = (1 - gamma*w_k) q + (gamma*w_k) q_hat; gamma*w_k clamped to [0,1] with a
// logged warning if outside.
ProbVec mix_labels(const ProbVec& q, const ProbVec& q_hat, double gamma, double w_k);

// gamma = alpha * epoch_current / epoch_total
double mix_schedule(int epoch_current, int epoch_total, double alpha);

// Tracks m_tilde (EMA of mixed-pseudo-label histograms over masked samples) and
// pi (smoothed cumulative distribution of labeled labels + masked pseudo-labels).
class ClassDistTracker {
public:
    ClassDistTracker(int num_classes, double rho, double eps);

    void update(std::span<const int> labeled_labels, std::span<const int> masked_pseudo_labels);

    const ProbVec& m_tilde() const { return m_tilde_; }
    ProbVec pi() const;
    // w_k = m_tilde_k / max_j m_tilde_j
    double class_weight(int k) const;
    int num_classes() const { return static_cast<int>(m_tilde_.size()); }

private:
    ProbVec m_tilde_;
    std::vector<double> pi_counts_;
    double rho_;
    double eps_;
};

// 1 iff max(p_bal) - T_b*ln(pi_k) > tau, with k = argmax p_bal.
bool mask_bal(const ProbVec& p_bal, const ProbVec& pi, double T_b, double tau);

struct PseudoRecord {
    ProbVec q;        // one-hot argmax of the weak-view standard-head prediction
    ProbVec q_hat;    // semantic label (equals q when unavailable or mixing off)
    ProbVec q_prime;  // mixed label
    double conf = 0.0;       // max of the weak-view prediction
    bool mask_std_bit = false;
    bool mask_bal_bit = false;
    double weight = 1.0;     // hardness weight
};

// Loss terms; each returns the batch mean of its per-sample contributions.
double loss_supervised(std::span<const std::vector<double>> logits, std::span<const int> labels);
double loss_unlabeled(std::span<const PseudoRecord> records, std::span<const ProbVec> strong_probs);
double loss_embed_align(std::span<const PseudoRecord> records,
                        std::span<const std::vector<double>> e_weak,
                        std::span<const std::vector<double>> e_strong, double T_e);
double loss_balanced_sup(std::span<const std::vector<double>> logits, std::span<const int> labels);
double loss_balanced_unsup(std::span<const PseudoRecord> records,
                           std::span<const ProbVec> strong_probs);

// Unweighted sum; throws std::runtime_error on any non-finite input.
double loss_total(double l_s, double l_u, double l_ea, double l_bs, double l_bu);

// d/dlogits of cross_entropy(target, softmax(logits)) = probs - target.
std::vector<double> softmax_ce_grad(const ProbVec& probs, const ProbVec& target);

}  // namespace semiforge
