#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semiforge/datagen.hpp"
#include "semiforge/model.hpp"
#include "semiforge/semi.hpp"

namespace semiforge {

struct TrainConfig {
    int epochs_total = 30;
    int steps_per_epoch = 50;
    int batch_labeled = 64;
    int batch_unlabeled = 128;
    int warmup_epochs = 5;
    double warmup_tau = 0.95;
    SemiHyper hyper;
    double lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int hidden = 64;
    int embed_dim = 16;
    AugmentConfig aug;
    std::uint64_t seed = 1;
    bool use_bank = true;
    bool use_oheml = true;
    bool use_ea = true;
    bool use_plce = true;
    bool use_balanced = true;

    void validate() const;  // throws std::invalid_argument
};

struct EpochMetrics {
    int epoch = 0;
    double acc_std = 0.0;
    double acc_bal = 0.0;
    std::vector<double> acc_per_class;   // headline head
    double mask_prob = 0.0;              // fraction of unlabeled draws with mask_std = 1
    double used_acc = 0.0;               // masked draws whose q' argmax matches the hidden label
    double mean_weight = 0.0;
    double gamma_u_est = 0.0;            // max/min of the epoch's estimated-label histogram
    double loss_s = 0.0, loss_u = 0.0, loss_ea = 0.0, loss_bs = 0.0, loss_bu = 0.0;
    double headline_acc = 0.0;           // acc_bal when the balanced branch is active, else acc_std
    std::vector<long long> confusion;    // K x K row-major (true x predicted), headline head
};

// JSON-lines metrics record (fixed field names) and its inverse.
std::string metrics_json_line(const EpochMetrics& m);
EpochMetrics parse_metrics_line(const std::string& line);

struct LabeledBatch {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
};

struct UnlabeledBatch {
    std::vector<std::vector<double>> weak;
    std::vector<std::vector<double>> strong;
    std::vector<int> hidden;  // ground truth, metrics only
};

struct StepBatch {
    LabeledBatch labeled;
    UnlabeledBatch unlabeled;
};

struct BatchTraces {
    std::vector<ForwardTrace> labeled;
    std::vector<ForwardTrace> weak;
    std::vector<ForwardTrace> strong;
};

BatchTraces forward_batch(const ModelParams& params, const StepBatch& batch);

// Per-step quantities treated as constants by backpropagation: pseudo-label
// records, embedding-alignment targets, and the pi snapshot.
struct FrozenStep {
    std::vector<PseudoRecord> records;
    std::vector<ProbVec> ea_targets;
    ProbVec pi;
    double eff_tau = 0.95;
    bool logit_adjust = false;
};

// protos == nullptr disables mixing (q' = q).
FrozenStep build_frozen(const BatchTraces& traces, const TrainConfig& cfg,
                        const ClassDistTracker& tracker, const PrototypeSet* protos,
                        double gamma, bool warmup);

struct TermSelect {
    bool s = true, u = true, ea = true, bs = true, bu = true;
};

struct StepLosses {
    double s = 0.0, u = 0.0, ea = 0.0, bs = 0.0, bu = 0.0;
    double total() const;  // loss_total over the five terms
};

// Loss values for the selected terms plus (optionally) their exact parameter
// gradients; unselected terms are zero with zero gradient.
StepLosses compute_losses(const ModelParams& params, const BatchTraces& traces,
                          std::span<const int> labels, const FrozenStep& frozen,
                          const SemiHyper& hyper, const TermSelect& select,
                          Gradients* grads_out);

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalResult {
    double acc_std = 0.0;
    double acc_bal = 0.0;
    std::vector<double> per_class_std;
    std::vector<double> per_class_bal;
    std::vector<long long> confusion_std;  // K x K row-major, true x predicted
    std::vector<long long> confusion_bal;
};

// Top-1 accuracy of both heads on a class-balanced test split.
EvalResult evaluate(const ModelParams& params, std::span<const Sample> test);

// Fraction of (un-augmented) unlabeled samples whose standard-head confidence
// strictly exceeds tau.
double mask_probability(const ModelParams& params, std::span<const Sample> unlabeled, double tau);

struct ExperimentResult {
    std::vector<EpochMetrics> metrics;
    ModelParams final_params;
    ModelParams best_params;
    int best_epoch = -1;
};

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const Dataset& data);

    StepBatch assemble_batch();
    StepLosses train_step(const StepBatch& batch);
    EpochMetrics finish_epoch();  // evaluates and resets the epoch accumulators

    ExperimentResult run();

    const TrainConfig& config() const { return cfg_; }
    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }
    const MemoryBank& bank() const { return bank_; }
    const ClassDistTracker& tracker() const { return tracker_; }
    int epoch() const { return epoch_; }
    void set_epoch(int e) { epoch_ = e; }
    bool in_warmup() const { return epoch_ < cfg_.warmup_epochs; }
    TermSelect active_terms() const;
    double headline(const EvalResult& ev) const;

private:
    struct EpochAccum {
        long long unlabeled_draws = 0;
        long long masked = 0;
        long long masked_correct = 0;
        double weight_sum = 0.0;
        std::vector<long long> est_label_hist;
        double loss_s = 0.0, loss_u = 0.0, loss_ea = 0.0, loss_bs = 0.0, loss_bu = 0.0;
        long long steps = 0;
    };

    TrainConfig cfg_;
    const Dataset* data_;
    std::vector<double> feat_std_;
    ModelParams params_;
    OptState opt_;
    MemoryBank bank_;
    ClassDistTracker tracker_;
    std::mt19937 rng_;
    int epoch_ = 0;
    EpochAccum accum_;
};

ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& data);

}  // namespace semiforge
