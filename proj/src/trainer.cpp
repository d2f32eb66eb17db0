#include "semiforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace semiforge {

void TrainConfig::validate() const {
    if (epochs_total < 0) throw std::invalid_argument("TrainConfig: epochs_total must be >= 0");
    if (steps_per_epoch < 1) throw std::invalid_argument("TrainConfig: steps_per_epoch must be >= 1");
    if (batch_labeled < 1 || batch_unlabeled < 1)
        throw std::invalid_argument("TrainConfig: batch sizes must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("TrainConfig: warmup_epochs must be >= 0");
    if (epochs_total > 0 && warmup_epochs >= epochs_total)
        throw std::invalid_argument("TrainConfig: warmup_epochs must be < epochs_total");
    if (!(warmup_tau > 0.0) || !(warmup_tau < 1.0))
        throw std::invalid_argument("TrainConfig: warmup_tau must be in (0,1)");
    if (!(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
        throw std::invalid_argument("TrainConfig: optimizer settings must be >= 0");
    if (hidden < 1 || embed_dim < 1) throw std::invalid_argument("TrainConfig: bad model dims");
    hyper.validate();
    aug.validate();
}

BatchTraces forward_batch(const ModelParams& params, const StepBatch& batch) {
    BatchTraces t;
    t.labeled.reserve(batch.labeled.x.size());
    for (const auto& x : batch.labeled.x) t.labeled.push_back(forward(params, x));
    t.weak.reserve(batch.unlabeled.weak.size());
    for (const auto& x : batch.unlabeled.weak) t.weak.push_back(forward(params, x));
    t.strong.reserve(batch.unlabeled.strong.size());
    for (const auto& x : batch.unlabeled.strong) t.strong.push_back(forward(params, x));
    return t;
}

FrozenStep build_frozen(const BatchTraces& traces, const TrainConfig& cfg,
                        const ClassDistTracker& tracker, const PrototypeSet* protos,
                        double gamma, bool warmup) {
    const SemiHyper& hy = cfg.hyper;
    FrozenStep out;
    out.eff_tau = (warmup || !cfg.use_oheml) ? cfg.warmup_tau : hy.tau;
    out.logit_adjust = cfg.use_balanced && hy.bal_logit_adjust;
    out.pi = tracker.pi();

    const std::size_t n = traces.weak.size();
    out.records.reserve(n);
    out.ea_targets.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        const ProbVec p_weak = softmax(traces.weak[j].logits_std);
        PseudoRecord r;
        r.conf = max_value(p_weak.v);
        r.mask_std_bit = mask_std(p_weak, out.eff_tau);
        r.weight = (warmup || !cfg.use_oheml) ? 1.0 : hardness_weight(p_weak, hy.s);
        r.q = ProbVec::one_hot(p_weak.size(), argmax_index(p_weak.v));
        r.q_hat = r.q;
        r.q_prime = r.q;
        if (protos != nullptr) {
            if (auto sem = semantic_label(traces.strong[j].embedding, *protos, hy.T_p)) {
                r.q_hat = std::move(*sem);
                const int k = static_cast<int>(argmax_index(r.q.v));
                r.q_prime = mix_labels(r.q, r.q_hat, gamma, tracker.class_weight(k));
            }
        }
        if (cfg.use_balanced) {
            const ProbVec p_bal = softmax(traces.weak[j].logits_bal);
            r.mask_bal_bit = mask_bal(p_bal, out.pi, hy.T_b, out.eff_tau);
        }
        out.ea_targets.push_back(softmax(traces.weak[j].embedding, 5.0 * hy.T_e));
        out.records.push_back(std::move(r));
    }
    return out;
}

double StepLosses::total() const {
    return loss_total(s, u, ea, bs, bu);
}

namespace {

std::vector<double> adjusted_bal_logits(const std::vector<double>& logits, const FrozenStep& frozen,
                                        double t_b) {
    if (!frozen.logit_adjust) return logits;
    std::vector<double> out = logits;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += t_b * std::log(frozen.pi.v[k]);
    return out;
}

}  // namespace

StepLosses compute_losses(const ModelParams& params, const BatchTraces& traces,
                          std::span<const int> labels, const FrozenStep& frozen,
                          const SemiHyper& hyper, const TermSelect& select,
                          Gradients* grads_out) {
    if (traces.labeled.size() != labels.size())
        throw std::runtime_error("compute_losses: labeled trace/label misalignment");
    if (traces.weak.size() != traces.strong.size() ||
        traces.weak.size() != frozen.records.size() ||
        frozen.ea_targets.size() != frozen.records.size())
        throw std::runtime_error("compute_losses: unlabeled trace/record misalignment");

    const double bl = static_cast<double>(std::max<std::size_t>(1, traces.labeled.size()));
    const double bu = static_cast<double>(std::max<std::size_t>(1, traces.weak.size()));
    const std::size_t K = static_cast<std::size_t>(params.K);

    StepLosses losses;
    std::vector<LossGrad> grads_labeled, grads_strong;
    if (grads_out) {
        grads_labeled.resize(traces.labeled.size());
        grads_strong.resize(traces.strong.size());
    }

    if ((select.s || select.bs) && traces.labeled.empty())
        throw std::invalid_argument("compute_losses: empty labeled batch");

    for (std::size_t i = 0; i < traces.labeled.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= K) throw std::invalid_argument("compute_losses: label out of range");
        const ProbVec onehot = ProbVec::one_hot(K, y);
        if (select.s) {
            const ProbVec p = softmax(traces.labeled[i].logits_std);
            losses.s += cross_entropy(onehot, p);
            if (grads_out) {
                auto g = softmax_ce_grad(p, onehot);
                for (double& v : g) v /= bl;
                grads_labeled[i].d_logits_std = std::move(g);
            }
        }
        if (select.bs) {
            const ProbVec p = softmax(adjusted_bal_logits(traces.labeled[i].logits_bal, frozen, hyper.T_b));
            losses.bs += cross_entropy(onehot, p);
            if (grads_out) {
                auto g = softmax_ce_grad(p, onehot);
                for (double& v : g) v /= bl;
                grads_labeled[i].d_logits_bal = std::move(g);
            }
        }
    }
    losses.s /= bl;
    losses.bs /= bl;

    for (std::size_t j = 0; j < traces.strong.size(); ++j) {
        const PseudoRecord& r = frozen.records[j];
        if (select.u && r.mask_std_bit) {
            const ProbVec p = softmax(traces.strong[j].logits_std);
            losses.u += r.weight * cross_entropy(r.q_prime, p);
            if (grads_out) {
                auto g = softmax_ce_grad(p, r.q_prime);
                for (double& v : g) v *= r.weight / bu;
                grads_strong[j].d_logits_std = std::move(g);
            }
        }
        if (select.ea && !r.mask_std_bit) {
            const ProbVec pred = softmax(traces.strong[j].embedding, hyper.T_e);
            losses.ea += cross_entropy(frozen.ea_targets[j], pred);
            if (grads_out) {
                auto g = softmax_ce_grad(pred, frozen.ea_targets[j]);
                for (double& v : g) v /= hyper.T_e * bu;
                grads_strong[j].d_embedding = std::move(g);
            }
        }
        if (select.bu && r.mask_bal_bit) {
            const ProbVec p = softmax(adjusted_bal_logits(traces.strong[j].logits_bal, frozen, hyper.T_b));
            losses.bu += cross_entropy(r.q_prime, p);
            if (grads_out) {
                auto g = softmax_ce_grad(p, r.q_prime);
                for (double& v : g) v /= bu;
                grads_strong[j].d_logits_bal = std::move(g);
            }
        }
    }
    losses.u /= bu;
    losses.ea /= bu;
    losses.bu /= bu;

    if (grads_out) {
        *grads_out = backward(params, traces.labeled, grads_labeled);
        grads_out->accumulate(backward(params, traces.strong, grads_strong));
    }
    return losses;
}

EvalResult evaluate(const ModelParams& params, std::span<const Sample> test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    const int K = params.K;
    EvalResult ev;
    ev.confusion_std.assign(static_cast<std::size_t>(K) * K, 0);
    ev.confusion_bal.assign(static_cast<std::size_t>(K) * K, 0);
    std::vector<long long> per_class_total(K, 0);
    std::vector<long long> correct_std(K, 0), correct_bal(K, 0);

    for (const Sample& s : test) {
        if (s.label < 0 || s.label >= K) throw std::invalid_argument("evaluate: label out of range");
        const ForwardTrace t = forward(params, s.x);
        const int pred_std = static_cast<int>(argmax_index(t.logits_std));
        const int pred_bal = static_cast<int>(argmax_index(t.logits_bal));
        ++per_class_total[s.label];
        ev.confusion_std[static_cast<std::size_t>(s.label) * K + pred_std] += 1;
        ev.confusion_bal[static_cast<std::size_t>(s.label) * K + pred_bal] += 1;
        if (pred_std == s.label) ++correct_std[s.label];
        if (pred_bal == s.label) ++correct_bal[s.label];
    }

    long long total = 0, tot_std = 0, tot_bal = 0;
    ev.per_class_std.resize(K);
    ev.per_class_bal.resize(K);
    for (int k = 0; k < K; ++k) {
        total += per_class_total[k];
        tot_std += correct_std[k];
        tot_bal += correct_bal[k];
        const double denom = per_class_total[k] > 0 ? static_cast<double>(per_class_total[k]) : 1.0;
        ev.per_class_std[k] = static_cast<double>(correct_std[k]) / denom;
        ev.per_class_bal[k] = static_cast<double>(correct_bal[k]) / denom;
    }
    ev.acc_std = static_cast<double>(tot_std) / static_cast<double>(total);
    ev.acc_bal = static_cast<double>(tot_bal) / static_cast<double>(total);
    return ev;
}

double mask_probability(const ModelParams& params, std::span<const Sample> unlabeled, double tau) {
    if (unlabeled.empty()) throw std::invalid_argument("mask_probability: empty pool");
    long long masked = 0;
    for (const Sample& s : unlabeled) {
        const ForwardTrace t = forward(params, s.x);
        if (mask_std(softmax(t.logits_std), tau)) ++masked;
    }
    return static_cast<double>(masked) / static_cast<double>(unlabeled.size());
}

Trainer::Trainer(const TrainConfig& cfg, const Dataset& data)
    : cfg_(cfg), data_(&data), feat_std_(feature_std(data)),
      params_(ModelParams::init(data.d, cfg.hidden, cfg.embed_dim, data.K, cfg.seed)),
      bank_(data.K, cfg.hyper.bank_capacity, cfg.hyper.beta, cfg.hyper.decay_interval,
            /*fifo=*/!cfg.use_bank),
      tracker_(data.K, cfg.hyper.rho, cfg.hyper.eps_pi),
      rng_(static_cast<std::uint32_t>(cfg.seed * 0x9e3779b9ULL + 1)) {
    cfg_.validate();
    if (data.labeled.empty() || data.unlabeled.empty())
        throw std::invalid_argument("Trainer: dataset needs labeled and unlabeled samples");
    opt_.lr = cfg.lr;
    opt_.momentum = cfg.momentum;
    opt_.weight_decay = cfg.weight_decay;
    accum_.est_label_hist.assign(data.K, 0);
}

StepBatch Trainer::assemble_batch() {
    StepBatch batch;
    std::uniform_int_distribution<std::size_t> pick_l(0, data_->labeled.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_u(0, data_->unlabeled.size() - 1);
    for (int i = 0; i < cfg_.batch_labeled; ++i) {
        const Sample& s = data_->labeled[pick_l(rng_)];
        batch.labeled.x.push_back(s.x);
        batch.labeled.y.push_back(s.label);
    }
    for (int j = 0; j < cfg_.batch_unlabeled; ++j) {
        const Sample& s = data_->unlabeled[pick_u(rng_)];
        batch.unlabeled.weak.push_back(augment_weak(s.x, cfg_.aug, feat_std_, rng_));
        batch.unlabeled.strong.push_back(augment_strong(s.x, cfg_.aug, feat_std_, rng_));
        batch.unlabeled.hidden.push_back(s.label);
    }
    return batch;
}

TermSelect Trainer::active_terms() const {
    const bool warmup = in_warmup();
    TermSelect sel;
    sel.s = true;
    sel.u = true;
    sel.ea = cfg_.use_ea && !warmup;
    sel.bs = cfg_.use_balanced && !warmup;
    sel.bu = cfg_.use_balanced && !warmup;
    return sel;
}

StepLosses Trainer::train_step(const StepBatch& batch) {
    const bool warmup = in_warmup();
    const BatchTraces traces = forward_batch(params_, batch);

    PrototypeSet protos;
    const PrototypeSet* protos_ptr = nullptr;
    double gamma = 0.0;
    if (!warmup && cfg_.use_plce) {
        protos = prototypes(bank_);
        protos_ptr = &protos;
        gamma = mix_schedule(epoch_ - cfg_.warmup_epochs, cfg_.epochs_total - cfg_.warmup_epochs,
                             cfg_.hyper.alpha);
    }
    const FrozenStep frozen = build_frozen(traces, cfg_, tracker_, protos_ptr, gamma, warmup);

    Gradients grads = Gradients::zeros_like(params_);
    const StepLosses losses =
        compute_losses(params_, traces, batch.labeled.y, frozen, cfg_.hyper, active_terms(), &grads);
    for (double v : {losses.s, losses.u, losses.ea, losses.bs, losses.bu})
        if (!std::isfinite(v) || v > 1e6)
            throw DivergenceError("train_step: loss diverged");

    sgd_step(params_, grads, opt_);
    if (!params_.all_finite()) throw DivergenceError("train_step: parameters diverged");

    std::vector<int> masked_labels;
    for (std::size_t j = 0; j < frozen.records.size(); ++j) {
        const PseudoRecord& r = frozen.records[j];
        const int est = static_cast<int>(argmax_index(r.q_prime.v));
        ++accum_.est_label_hist[est];
        ++accum_.unlabeled_draws;
        accum_.weight_sum += r.weight;
        if (r.mask_std_bit) {
            ++accum_.masked;
            if (est == batch.unlabeled.hidden[j]) ++accum_.masked_correct;
            masked_labels.push_back(est);
            bank_.insert(est, traces.strong[j].embedding, max_value(r.q_prime.v));
        }
    }
    bank_.tick();
    tracker_.update(batch.labeled.y, masked_labels);

    accum_.loss_s += losses.s;
    accum_.loss_u += losses.u;
    accum_.loss_ea += losses.ea;
    accum_.loss_bs += losses.bs;
    accum_.loss_bu += losses.bu;
    ++accum_.steps;
    return losses;
}

double Trainer::headline(const EvalResult& ev) const {
    return cfg_.use_balanced ? ev.acc_bal : ev.acc_std;
}

EpochMetrics Trainer::finish_epoch() {
    const EvalResult ev = evaluate(params_, data_->test);
    EpochMetrics m;
    m.epoch = epoch_;
    m.acc_std = ev.acc_std;
    m.acc_bal = ev.acc_bal;
    m.acc_per_class = cfg_.use_balanced ? ev.per_class_bal : ev.per_class_std;
    m.confusion = cfg_.use_balanced ? ev.confusion_bal : ev.confusion_std;
    m.headline_acc = headline(ev);

    const double draws = static_cast<double>(std::max<long long>(1, accum_.unlabeled_draws));
    m.mask_prob = static_cast<double>(accum_.masked) / draws;
    m.used_acc = accum_.masked > 0
                     ? static_cast<double>(accum_.masked_correct) / static_cast<double>(accum_.masked)
                     : 0.0;
    m.mean_weight = accum_.weight_sum / draws;

    long long hist_max = 0;
    long long hist_min = accum_.unlabeled_draws > 0 ? accum_.est_label_hist[0] : 0;
    for (long long c : accum_.est_label_hist) {
        hist_max = std::max(hist_max, c);
        hist_min = std::min(hist_min, c);
    }
    m.gamma_u_est = hist_max > 0
                        ? static_cast<double>(hist_max) / static_cast<double>(std::max<long long>(1, hist_min))
                        : 1.0;

    const double steps = static_cast<double>(std::max<long long>(1, accum_.steps));
    m.loss_s = accum_.loss_s / steps;
    m.loss_u = accum_.loss_u / steps;
    m.loss_ea = accum_.loss_ea / steps;
    m.loss_bs = accum_.loss_bs / steps;
    m.loss_bu = accum_.loss_bu / steps;

    accum_ = EpochAccum{};
    accum_.est_label_hist.assign(data_->K, 0);
    return m;
}

ExperimentResult Trainer::run() {
    ExperimentResult result;
    result.final_params = params_;
    result.best_params = params_;
    double best = -1.0;
    for (epoch_ = 0; epoch_ < cfg_.epochs_total; ++epoch_) {
        for (int s = 0; s < cfg_.steps_per_epoch; ++s) train_step(assemble_batch());
        EpochMetrics m = finish_epoch();
        if (m.headline_acc > best) {
            best = m.headline_acc;
            result.best_params = params_;
            result.best_epoch = m.epoch;
        }
        result.metrics.push_back(std::move(m));
    }
    result.final_params = params_;
    return result;
}

ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& data) {
    Trainer trainer(cfg, data);
    return trainer.run();
}

std::string metrics_json_line(const EpochMetrics& m) {
    nlohmann::json j;
    j["epoch"] = m.epoch;
    j["acc_std"] = m.acc_std;
    j["acc_bal"] = m.acc_bal;
    j["acc_per_class"] = m.acc_per_class;
    j["mask_prob"] = m.mask_prob;
    j["used_acc"] = m.used_acc;
    j["mean_weight"] = m.mean_weight;
    j["gamma_u_est"] = m.gamma_u_est;
    j["loss_s"] = m.loss_s;
    j["loss_u"] = m.loss_u;
    j["loss_ea"] = m.loss_ea;
    j["loss_bs"] = m.loss_bs;
    j["loss_bu"] = m.loss_bu;
    j["headline_acc"] = m.headline_acc;
    j["confusion"] = m.confusion;
    return j.dump();
}

EpochMetrics parse_metrics_line(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    EpochMetrics m;
    m.epoch = j.at("epoch").get<int>();
    m.acc_std = j.at("acc_std").get<double>();
    m.acc_bal = j.at("acc_bal").get<double>();
    m.acc_per_class = j.at("acc_per_class").get<std::vector<double>>();
    m.mask_prob = j.at("mask_prob").get<double>();
    m.used_acc = j.at("used_acc").get<double>();
    m.mean_weight = j.at("mean_weight").get<double>();
    m.gamma_u_est = j.at("gamma_u_est").get<double>();
    m.loss_s = j.at("loss_s").get<double>();
    m.loss_u = j.at("loss_u").get<double>();
    m.loss_ea = j.at("loss_ea").get<double>();
    m.loss_bs = j.at("loss_bs").get<double>();
    m.loss_bu = j.at("loss_bu").get<double>();
    m.headline_acc = j.at("headline_acc").get<double>();
    m.confusion = j.at("confusion").get<std::vector<long long>>();
    return m;
}

}  // namespace semiforge
