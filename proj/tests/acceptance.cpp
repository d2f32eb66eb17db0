// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "fixmatch_reference.hpp"
#include "semiforge/config.hpp"
#include "semiforge/datagen.hpp"
#include "semiforge/model.hpp"
#include "semiforge/numcore.hpp"
#include "semiforge/semi.hpp"
#include "semiforge/trainer.hpp"

using namespace semiforge;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProbVec random_prob(std::mt19937& rng, std::size_t k) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> v(k);
    double sum = 0.0;
    for (double& x : v) {
        x = -std::log(std::max(unit(rng), 1e-300));
        sum += x;
    }
    for (double& x : v) x /= sum;
    return ProbVec(std::move(v));
}

// ------------------------------------------------------------------
// 1. Gradient correctness of the five loss terms, individually and summed
// ------------------------------------------------------------------
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int exercised[5] = {0, 0, 0, 0, 0};  // vacuity guard per term

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937 rng(static_cast<std::uint32_t>(seed * 977));
        std::uniform_int_distribution<int> d_dist(3, 6), h_dist(4, 8), k_dist(3, 5), b_dist(1, 4);
        const int d = d_dist(rng), hidden = h_dist(rng), h = h_dist(rng), K = k_dist(rng);
        const int bl = b_dist(rng), bu = b_dist(rng);

        ModelParams params = ModelParams::init(d, hidden, h, K, seed);

        TrainConfig cfg;
        // near-init confidences straddle this threshold, so both the masked
        // (L_U) and unmasked (L_EA) paths get exercised across seeds
        cfg.hyper.tau = (seed % 2 == 0) ? 0.30 : 0.35;
        cfg.hyper.bal_logit_adjust = (seed % 3 == 0);
        cfg.hyper.T_e = 0.2;
        cfg.hyper.T_b = 0.5;

        std::normal_distribution<double> gauss(0.0, 1.0);
        StepBatch batch;
        std::uniform_int_distribution<int> label(0, K - 1);
        for (int i = 0; i < bl; ++i) {
            std::vector<double> x(d);
            for (double& v : x) v = gauss(rng);
            batch.labeled.x.push_back(std::move(x));
            batch.labeled.y.push_back(label(rng));
        }
        for (int j = 0; j < bu; ++j) {
            std::vector<double> xw(d), xs(d);
            for (double& v : xw) v = gauss(rng);
            for (double& v : xs) v = gauss(rng);
            batch.unlabeled.weak.push_back(std::move(xw));
            batch.unlabeled.strong.push_back(std::move(xs));
            batch.unlabeled.hidden.push_back(label(rng));
        }

        ClassDistTracker tracker(K, 0.3, 1e-3);
        std::vector<int> seen;
        for (int i = 0; i < 8; ++i) seen.push_back(label(rng));
        tracker.update(seen, seen);

        MemoryBank bank(K, 4, 0.999, 100);
        std::uniform_real_distribution<double> conf(0.1, 1.0);
        for (int i = 0; i < 3 * K; ++i) {
            std::vector<double> e(h);
            for (double& v : e) v = gauss(rng);
            bank.insert(label(rng), e, conf(rng));  // some cells may stay empty
        }
        const PrototypeSet protos = prototypes(bank);
        const double gamma = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

        const BatchTraces traces = forward_batch(params, batch);
        const FrozenStep frozen = build_frozen(traces, cfg, tracker, &protos, gamma, false);

        struct Term { const char* name; TermSelect sel; int idx; };
        const Term terms[] = {
            {"L_S", {true, false, false, false, false}, 0},
            {"L_U", {false, true, false, false, false}, 1},
            {"L_EA", {false, false, true, false, false}, 2},
            {"L_S^b", {false, false, false, true, false}, 3},
            {"L_U^b", {false, false, false, false, true}, 4},
            {"sum", {true, true, true, true, true}, -1},
        };
        for (const Term& term : terms) {
            Gradients grads = Gradients::zeros_like(params);
            compute_losses(params, traces, batch.labeled.y, frozen, cfg.hyper, term.sel, &grads);
            const auto flat = flatten(grads);
            if (term.idx >= 0) {
                bool nonzero = false;
                for (double v : flat)
                    if (v != 0.0) nonzero = true;
                if (nonzero) ++exercised[term.idx];
            }
            const auto loss_at = [&](const std::vector<double>& theta) {
                ModelParams p = params;
                unflatten(p, theta);
                const BatchTraces t = forward_batch(p, batch);
                const StepLosses l =
                    compute_losses(p, t, batch.labeled.y, frozen, cfg.hyper, term.sel, nullptr);
                return l.s + l.u + l.ea + l.bs + l.bu;
            };
            worst = std::max(worst, grad_check(loss_at, flat, flatten(params)));
        }
    }

    const double secs = elapsed_s(t0);
    bool coverage = true;
    for (int c : exercised) coverage = coverage && c >= 5;
    std::ostringstream os;
    os << "gradients of the five loss terms vs central differences, 20 seeds: max rel err "
       << worst << " (< 1e-4), every term exercised >= 5 times ("
       << exercised[0] << "/" << exercised[1] << "/" << exercised[2] << "/" << exercised[3] << "/"
       << exercised[4] << "), runtime " << secs << " s (< 10)";
    report(1, worst < 1e-4 && coverage && secs < 10.0, os.str());
}

// ------------------------------------------------------------------
// 2. FixMatch reduction oracle
// ------------------------------------------------------------------
void criterion_2() {
    ClassProfile profile{4, 50, 200, 10.0, 0.1};
    const Dataset ds = synth_dataset(profile, 5, 3.0, 50, 7);

    TrainConfig cfg;
    cfg.epochs_total = 5;
    cfg.warmup_epochs = 1;
    cfg.steps_per_epoch = 30;
    cfg.batch_labeled = 16;
    cfg.batch_unlabeled = 32;
    cfg.hidden = 16;
    cfg.embed_dim = 8;
    cfg.seed = 21;
    cfg.use_bank = cfg.use_oheml = cfg.use_ea = cfg.use_plce = cfg.use_balanced = false;

    Trainer trainer(cfg, ds);
    double worst = 0.0;
    double used_total = 0.0;
    for (int step = 0; step < 100; ++step) {
        trainer.set_epoch(step / cfg.steps_per_epoch);
        const StepBatch batch = trainer.assemble_batch();
        const ModelParams snapshot = trainer.params();
        const fixmatch_ref::RefLosses ref = fixmatch_ref::loss(snapshot, batch, 0.95);
        const StepLosses got = trainer.train_step(batch);
        worst = std::max(worst, std::abs(ref.supervised - got.s));
        worst = std::max(worst, std::abs(ref.unlabeled - got.u));
        worst = std::max(worst, std::abs(got.ea) + std::abs(got.bs) + std::abs(got.bu));
        used_total += got.u;
    }
    std::ostringstream os;
    os << "all flags off vs independent FixMatch reference on 100 fixed batches: max loss diff "
       << worst << " (< 1e-12), unlabeled term active (sum " << used_total << " > 0)";
    report(2, worst < 1e-12 && used_total > 0.0, os.str());
}

// ------------------------------------------------------------------
// 3. Memory-bank oracle equivalence over a 10k event stream
// ------------------------------------------------------------------
void criterion_3() {
    const int K = 5, cap = 8;
    const double beta = 0.995;
    MemoryBank bank(K, cap, beta, 1000000);

    struct Offered {
        double conf;
        long long arrival;
        double payload;
    };
    std::vector<std::vector<Offered>> offered(K);

    std::mt19937 rng(20240915);
    std::uniform_real_distribution<double> conf(1e-6, 1.0);
    std::uniform_int_distribution<int> klass(0, K - 1);
    std::uniform_int_distribution<int> kind(0, 9);

    long long inserts = 0, decays = 0;
    for (long long ev = 0; ev < 10000; ++ev) {
        if (kind(rng) == 0) {
            bank.decay();
            for (auto& cell : offered)
                for (auto& o : cell) o.conf *= beta;
            ++decays;
        } else {
            const int k = klass(rng);
            const double c = conf(rng);
            bank.insert(k, std::vector<double>{static_cast<double>(ev)}, c);
            offered[k].push_back({c, ev, static_cast<double>(ev)});
            ++inserts;
        }
    }

    bool equal = true;
    for (int k = 0; k < K && equal; ++k) {
        auto cell = offered[k];
        std::stable_sort(cell.begin(), cell.end(), [](const Offered& a, const Offered& b) {
            if (a.conf != b.conf) return a.conf > b.conf;
            return a.arrival < b.arrival;
        });
        const std::size_t keep = std::min<std::size_t>(cap, cell.size());
        std::vector<std::pair<double, double>> expect, got;
        for (std::size_t i = 0; i < keep; ++i) expect.emplace_back(cell[i].conf, cell[i].payload);
        for (const BankEntry& e : bank.cell(k)) got.emplace_back(e.confidence, e.embedding[0]);
        std::sort(expect.begin(), expect.end());
        std::sort(got.begin(), got.end());
        equal = (expect == got) && got.size() <= static_cast<std::size_t>(cap);
    }
    std::ostringstream os;
    os << "bank contents exactly equal brute-force top-" << cap << " oracle over " << inserts
       << " inserts + " << decays << " decays (K=" << K << ")";
    report(3, equal, os.str());
}

// ------------------------------------------------------------------
// 4. Hardness-weight envelope
// ------------------------------------------------------------------
void criterion_4() {
    std::mt19937 rng(1123);
    bool ok = true;
    double worst_boundary = 0.0;
    for (int si = 1; si <= 10 && ok; ++si) {
        const double s = si / 10.0;
        for (int trial = 0; trial < 10000; ++trial) {
            const std::size_t k = 2 + trial % 9;
            const double w = hardness_weight(random_prob(rng, k), s);
            if (!(w >= 1.0 - s - 1e-12 && w <= 1.0 + 1e-12)) {
                ok = false;
                break;
            }
        }
        const double at_onehot = hardness_weight(ProbVec::one_hot(6, 1), s);
        const double at_uniform = hardness_weight(ProbVec::uniform(6), s);
        worst_boundary = std::max(worst_boundary, std::abs(at_onehot - (1.0 - s)));
        worst_boundary = std::max(worst_boundary, std::abs(at_uniform - 1.0));
    }
    ok = ok && worst_boundary < 1e-12;
    std::ostringstream os;
    os << "w in [1-s, 1] over 10000 random ProbVecs x s in {0.1..1.0}; boundary error "
       << worst_boundary << " (< 1e-12)";
    report(4, ok, os.str());
}

// ------------------------------------------------------------------
// 5 & 6. Comparative experiment and ablation direction check
// ------------------------------------------------------------------
struct VariantResult {
    double mean_acc = 0.0;
    double mean_tail = 0.0;
    double max_run_s = 0.0;
};

TrainConfig comparative_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs_total = 30;
    cfg.warmup_epochs = 6;
    cfg.steps_per_epoch = 50;
    cfg.batch_labeled = 64;
    cfg.batch_unlabeled = 128;
    cfg.seed = seed;
    return cfg;
}

VariantResult run_variant(const Dataset& ds, bool bank, bool oheml, bool ea, bool plce, bool bal) {
    VariantResult out;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        TrainConfig cfg = comparative_config(seed);
        cfg.use_bank = bank;
        cfg.use_oheml = oheml;
        cfg.use_ea = ea;
        cfg.use_plce = plce;
        cfg.use_balanced = bal;
        const auto t0 = std::chrono::steady_clock::now();
        const ExperimentResult r = run_experiment(cfg, ds);
        out.max_run_s = std::max(out.max_run_s, elapsed_s(t0));
        const EpochMetrics& best = r.metrics.at(static_cast<std::size_t>(r.best_epoch));
        out.mean_acc += best.headline_acc;
        out.mean_tail += best.acc_per_class.back();
    }
    out.mean_acc /= 3.0;
    out.mean_tail /= 3.0;
    return out;
}

Dataset comparative_dataset() {
    ClassProfile profile{5, 200, 2000, 50.0, 1.0 / 50.0};
    return synth_dataset(profile, 8, 2.5, 200, 424242);
}

void criteria_5_and_6(const Dataset& ds) {
    const VariantResult full = run_variant(ds, true, true, true, true, true);
    const VariantResult base = run_variant(ds, false, false, false, false, false);

    const double gap = (full.mean_acc - base.mean_acc) * 100.0;
    const double tail_gap = (full.mean_tail - base.mean_tail) * 100.0;
    {
        std::ostringstream os;
        os << "reversed scenario (K=5, gamma_l=50, gamma_u=1/50), 3 seeds: full method " << full.mean_acc
           << " vs FixMatch " << base.mean_acc << " (+" << gap << " pts, need >= 5); tail "
           << full.mean_tail << " vs " << base.mean_tail << " (+" << tail_gap
           << " pts, need >= 10); slowest run " << full.max_run_s << " s (< 300)";
        report(5, gap >= 5.0 && tail_gap >= 10.0 && full.max_run_s < 300.0 && base.max_run_s < 300.0,
               os.str());
    }

    struct Ablation { const char* name; bool bank, oheml, ea, plce, bal; };
    const Ablation ablations[] = {
        {"no-bank", false, true, true, true, true},
        {"no-oheml", true, false, true, true, true},
        {"no-ea", true, true, false, true, true},
        {"no-plce", true, true, true, false, true},
        {"no-bc", true, true, true, true, false},
    };
    bool ok = true;
    std::ostringstream os;
    os << "single-flag ablations vs full-method mean " << full.mean_acc << " (+1.0 pt tolerance):";
    for (const Ablation& a : ablations) {
        const VariantResult r = run_variant(ds, a.bank, a.oheml, a.ea, a.plce, a.bal);
        const bool this_ok = r.mean_acc <= full.mean_acc + 0.01;
        ok = ok && this_ok;
        os << " " << a.name << "=" << r.mean_acc << (this_ok ? "" : "(!)");
    }
    report(6, ok, os.str());
}

// ------------------------------------------------------------------
// 7. Diagnostics: metrics fields present; mask_prob monotone in tau
// ------------------------------------------------------------------
void criterion_7() {
    ClassProfile profile{4, 50, 200, 10.0, 0.1};
    const Dataset ds = synth_dataset(profile, 5, 3.0, 50, 7);

    TrainConfig cfg;
    cfg.epochs_total = 10;
    cfg.warmup_epochs = 2;
    cfg.steps_per_epoch = 20;
    cfg.batch_labeled = 16;
    cfg.batch_unlabeled = 32;
    cfg.hidden = 16;
    cfg.embed_dim = 8;
    cfg.seed = 31;

    Trainer trainer(cfg, ds);
    std::vector<ModelParams> checkpoints;
    bool fields_ok = true;
    for (int epoch = 0; epoch < cfg.epochs_total; ++epoch) {
        trainer.set_epoch(epoch);
        for (int s = 0; s < cfg.steps_per_epoch; ++s) trainer.train_step(trainer.assemble_batch());
        const EpochMetrics m = trainer.finish_epoch();
        const std::string line = metrics_json_line(m);
        fields_ok = fields_ok && line.find("\"mask_prob\"") != std::string::npos &&
                    line.find("\"used_acc\"") != std::string::npos;
        if (epoch % 2 == 1) checkpoints.push_back(trainer.params());  // 5 checkpoints
    }

    bool monotone = checkpoints.size() == 5;
    double worst_low = 1.0, worst_high = 0.0;
    for (const ModelParams& p : checkpoints) {
        const double low = mask_probability(p, ds.unlabeled, 0.7);
        const double high = mask_probability(p, ds.unlabeled, 0.95);
        monotone = monotone && low >= high;
        worst_low = std::min(worst_low, low);
        worst_high = std::max(worst_high, high);
    }
    std::ostringstream os;
    os << "metrics stream reports mask_prob/used_acc per epoch; mask_prob(tau=0.7) >= "
          "mask_prob(tau=0.95) on 5 checkpoints (min@0.7 "
       << worst_low << ", max@0.95 " << worst_high << ")";
    report(7, fields_ok && monotone, os.str());
}

// ------------------------------------------------------------------
// 8. Bitwise determinism across two CLI invocations
// ------------------------------------------------------------------
std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_8(const std::string& cli) {
    char tmpl[] = "/tmp/semiforge_accept_XXXXXX";
    const std::string dir = mkdtemp(tmpl);
    const std::string ds_path = dir + "/data.txt";
    {
        ClassProfile profile{4, 50, 200, 10.0, 0.1};
        save_dataset(synth_dataset(profile, 5, 3.0, 50, 7), ds_path);
    }
    const std::string cfg_path = dir + "/run.cfg";
    {
        std::ofstream out(cfg_path);
        out << "epochs_total = 4\nsteps_per_epoch = 15\nbatch_labeled = 16\n"
               "batch_unlabeled = 32\nwarmup_epochs = 1\nhidden = 16\nembed_dim = 8\n"
               "bank_capacity = 16\ndecay_interval = 10\n";
    }
    auto train_once = [&](const std::string& out_dir) {
        const std::string cmd = cli + " train --dataset " + ds_path + " --config " + cfg_path +
                                " --seed 17 --out " + out_dir + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    };
    const bool ran = train_once(dir + "/run1") && train_once(dir + "/run2");
    const std::string m1 = slurp(dir + "/run1/metrics_seed17.jsonl");
    const std::string m2 = slurp(dir + "/run2/metrics_seed17.jsonl");
    const bool ok = ran && !m1.empty() && m1 == m2;
    std::ostringstream os;
    os << "two CLI invocations with identical (dataset, config, seed) produce byte-identical "
          "metrics streams ("
       << m1.size() << " bytes)";
    report(8, ok, os.str());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-semiforge-cli>\n");
        return 2;
    }
    const std::string cli = argv[1];

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    const Dataset comparative = comparative_dataset();
    criteria_5_and_6(comparative);
    criterion_7();
    criterion_8(cli);

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
