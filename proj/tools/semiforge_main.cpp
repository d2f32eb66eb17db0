#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "semiforge/config.hpp"
#include "semiforge/datagen.hpp"
#include "semiforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace semiforge;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

std::uint64_t env_seed_fallback(std::uint64_t def) {
    if (const char* env = std::getenv("SEMIFORGE_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw std::invalid_argument("SEMIFORGE_SEED is not an integer");
        }
    }
    return def;
}

struct GenArgs {
    int K = 10;
    long long N1 = 500;
    long long M1 = 4000;
    double gamma_l = 100.0;
    double gamma_u = 100.0;
    int d = 8;
    double sep = 3.0;
    int test_per_class = 100;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out = "dataset.txt";
};

int run_gen(const GenArgs& args) {
    ClassProfile profile{args.K, args.N1, args.M1, args.gamma_l, args.gamma_u};
    const std::uint64_t seed = args.seed_given ? args.seed : env_seed_fallback(1);
    const ClassCounts counts = class_counts(profile);
    const Dataset ds = synth_dataset(profile, args.d, args.sep, args.test_per_class, seed);
    save_dataset(ds, args.out);

    std::cout << "wrote " << args.out << " (seed " << seed << ")\n";
    std::cout << "class  labeled  unlabeled\n";
    for (int k = 0; k < profile.K; ++k)
        std::cout << (k + 1) << "  " << counts.labeled[k] << "  " << counts.unlabeled[k] << "\n";
    return 0;
}

struct TrainArgs {
    std::string dataset;
    std::string config_path;
    std::string out_dir = "run";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int seeds = 1;
    bool no_bank = false, no_oheml = false, no_ea = false, no_plce = false, no_bc = false;
    std::string ablate;
};

void write_confusion_csv(const std::string& path, const std::vector<long long>& confusion, int K) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "true\\pred";
    for (int c = 0; c < K; ++c) out << ",c" << c;
    out << "\n";
    for (int r = 0; r < K; ++r) {
        out << "c" << r;
        for (int c = 0; c < K; ++c) out << "," << confusion[static_cast<std::size_t>(r) * K + c];
        out << "\n";
    }
}

int run_train(const TrainArgs& args) {
    if (args.dataset.empty()) throw std::invalid_argument("train: --dataset is required");
    if (args.seeds < 1) throw std::invalid_argument("train: --seeds must be >= 1");
    if (!args.ablate.empty() && args.ablate != "all")
        throw std::invalid_argument("train: --ablate only supports 'all'");

    const Dataset ds = load_dataset(args.dataset);
    TrainConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    cfg.seed = args.seed_given ? args.seed : env_seed_fallback(cfg.seed);
    if (args.ablate == "all") {
        cfg.use_bank = cfg.use_oheml = cfg.use_ea = cfg.use_plce = cfg.use_balanced = false;
    }
    if (args.no_bank) cfg.use_bank = false;
    if (args.no_oheml) cfg.use_oheml = false;
    if (args.no_ea) cfg.use_ea = false;
    if (args.no_plce) cfg.use_plce = false;
    if (args.no_bc) cfg.use_balanced = false;
    cfg.validate();

    fs::create_directories(args.out_dir);

    nlohmann::json summary;
    summary["runs"] = nlohmann::json::array();
    std::vector<double> best_accs;

    for (int r = 0; r < args.seeds; ++r) {
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
        const std::string tag = "seed" + std::to_string(run_cfg.seed);

        const ExperimentResult result = run_experiment(run_cfg, ds);

        const std::string metrics_path = args.out_dir + "/metrics_" + tag + ".jsonl";
        std::ofstream metrics(metrics_path);
        if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
        for (const EpochMetrics& m : result.metrics) metrics << metrics_json_line(m) << "\n";
        metrics.close();

        save_checkpoint(result.final_params, args.out_dir + "/ckpt_final_" + tag + ".txt");
        save_checkpoint(result.best_params, args.out_dir + "/ckpt_best_" + tag + ".txt");

        nlohmann::json run;
        run["seed"] = run_cfg.seed;
        run["metrics_file"] = metrics_path;
        if (result.best_epoch >= 0) {
            const EpochMetrics& best = result.metrics[static_cast<std::size_t>(result.best_epoch)];
            run["best_epoch"] = best.epoch;
            run["best_acc"] = best.headline_acc;
            run["acc_std"] = best.acc_std;
            run["acc_bal"] = best.acc_bal;
            run["acc_per_class"] = best.acc_per_class;
            const std::string conf_path = args.out_dir + "/confusion_best_" + tag + ".csv";
            write_confusion_csv(conf_path, best.confusion, ds.K);
            run["confusion_file"] = conf_path;
            best_accs.push_back(best.headline_acc);
            std::cout << tag << ": best epoch " << best.epoch << ", best acc "
                      << best.headline_acc << " (std " << best.acc_std << ", bal " << best.acc_bal
                      << ")\n";
        } else {
            run["best_epoch"] = -1;
            std::cout << tag << ": no epochs ran\n";
        }
        summary["runs"].push_back(std::move(run));
    }

    if (!best_accs.empty()) {
        double mean = 0.0;
        for (double a : best_accs) mean += a;
        mean /= static_cast<double>(best_accs.size());
        double var = 0.0;
        for (double a : best_accs) var += (a - mean) * (a - mean);
        const double stdev = best_accs.size() > 1
                                 ? std::sqrt(var / static_cast<double>(best_accs.size() - 1))
                                 : 0.0;
        summary["mean_best_acc"] = mean;
        summary["std_best_acc"] = stdev;
        std::cout << "mean best acc " << mean << " +- " << stdev << " over " << best_accs.size()
                  << " run(s)\n";
    }
    summary["config"] = dump_config(cfg);

    std::ofstream sum(args.out_dir + "/summary.json");
    if (!sum) throw std::runtime_error("cannot write summary.json");
    sum << summary.dump(2) << "\n";
    return 0;
}

struct ReportArgs {
    std::vector<std::string> metrics_files;
    std::string out_dir = "report";
};

std::vector<EpochMetrics> load_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("report: cannot open " + path);
    std::vector<EpochMetrics> out;
    std::string line;
    long record = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++record;
        try {
            out.push_back(parse_metrics_line(line));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path + ": record " + std::to_string(record) +
                                        ": parse error: " + e.what());
        }
    }
    if (out.empty()) throw std::invalid_argument("report: no records in " + path);
    return out;
}

void write_series_csv(const std::string& path, const std::string& name,
                      const std::vector<std::vector<EpochMetrics>>& runs,
                      double (*field)(const EpochMetrics&)) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const bool multi = runs.size() > 1;
    std::size_t epochs = 0;
    for (const auto& r : runs) epochs = std::max(epochs, r.size());
    out << (multi ? "epoch,mean,std" : ("epoch," + name)) << "\n";
    for (std::size_t e = 0; e < epochs; ++e) {
        std::vector<double> vals;
        for (const auto& r : runs)
            if (e < r.size()) vals.push_back(field(r[e]));
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        out << e << "," << fmt_double(mean);
        if (multi) {
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            const double stdev =
                vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
            out << "," << fmt_double(stdev);
        }
        out << "\n";
    }
}

int run_report(const ReportArgs& args) {
    if (args.metrics_files.empty()) throw std::invalid_argument("report: need >= 1 metrics file");
    std::vector<std::vector<EpochMetrics>> runs;
    for (const auto& path : args.metrics_files) runs.push_back(load_metrics(path));
    fs::create_directories(args.out_dir);

    write_series_csv(args.out_dir + "/mask_prob.csv", "mask_prob", runs,
                     [](const EpochMetrics& m) { return m.mask_prob; });
    write_series_csv(args.out_dir + "/used_acc.csv", "used_acc", runs,
                     [](const EpochMetrics& m) { return m.used_acc; });

    // best epoch per run by headline accuracy
    std::vector<const EpochMetrics*> best;
    for (const auto& r : runs) {
        const EpochMetrics* b = &r.front();
        for (const EpochMetrics& m : r)
            if (m.headline_acc > b->headline_acc) b = &m;
        best.push_back(b);
    }

    const std::size_t K = best.front()->acc_per_class.size();
    const bool multi = runs.size() > 1;
    {
        std::ofstream out(args.out_dir + "/per_class_acc.csv");
        if (!out) throw std::runtime_error("cannot write per_class_acc.csv");
        out << (multi ? "class,mean,std" : "class,accuracy") << "\n";
        for (std::size_t k = 0; k < K; ++k) {
            double mean = 0.0;
            for (const EpochMetrics* b : best) mean += b->acc_per_class[k];
            mean /= static_cast<double>(best.size());
            out << k << "," << fmt_double(mean);
            if (multi) {
                double var = 0.0;
                for (const EpochMetrics* b : best)
                    var += (b->acc_per_class[k] - mean) * (b->acc_per_class[k] - mean);
                const double stdev =
                    best.size() > 1 ? std::sqrt(var / static_cast<double>(best.size() - 1)) : 0.0;
                out << "," << fmt_double(stdev);
            }
            out << "\n";
        }
    }
    {
        std::ofstream out(args.out_dir + "/confusion.csv");
        if (!out) throw std::runtime_error("cannot write confusion.csv");
        out << "true\\pred";
        for (std::size_t c = 0; c < K; ++c) out << ",c" << c;
        out << "\n";
        for (std::size_t r = 0; r < K; ++r) {
            out << "c" << r;
            for (std::size_t c = 0; c < K; ++c) {
                double mean = 0.0;
                for (const EpochMetrics* b : best)
                    mean += static_cast<double>(b->confusion[r * K + c]);
                mean /= static_cast<double>(best.size());
                out << "," << fmt_double(mean);
            }
            out << "\n";
        }
    }
    std::cout << "wrote mask_prob.csv used_acc.csv per_class_acc.csv confusion.csv in "
              << args.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semiforge: class-imbalanced semi-supervised learning on synthetic data"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen", "synthesize a long-tailed dataset");
    cmd_gen->add_option("--K", gen.K, "number of classes");
    cmd_gen->add_option("--N1", gen.N1, "head-class labeled count");
    cmd_gen->add_option("--M1", gen.M1, "head-class unlabeled count");
    cmd_gen->add_option("--gamma-l", gen.gamma_l, "labeled imbalance ratio");
    cmd_gen->add_option("--gamma-u", gen.gamma_u, "unlabeled imbalance ratio (<1 = reversed)");
    cmd_gen->add_option("--d", gen.d, "feature dimension");
    cmd_gen->add_option("--sep", gen.sep, "min pairwise class-center distance");
    cmd_gen->add_option("--test-per-class", gen.test_per_class, "balanced test count per class");
    cmd_gen->add_option("--seed", gen.seed, "random seed")->each([&](const std::string&) {
        gen.seed_given = true;
    });
    cmd_gen->add_option("--out", gen.out, "output dataset file");

    TrainArgs train;
    CLI::App* cmd_train = app.add_subcommand("train", "run a training experiment");
    cmd_train->add_option("--dataset", train.dataset, "dataset file")->required();
    cmd_train->add_option("--config", train.config_path, "key = value config file");
    cmd_train->add_option("--out", train.out_dir, "output directory");
    cmd_train->add_option("--seed", train.seed, "base seed")->each([&](const std::string&) {
        train.seed_given = true;
    });
    cmd_train->add_option("--seeds", train.seeds, "number of sequential runs");
    cmd_train->add_flag("--no-bank", train.no_bank, "replace the confidence-decay bank with a fifo bank");
    cmd_train->add_flag("--no-oheml", train.no_oheml, "disable hard-example reweighting (tau stays 0.95)");
    cmd_train->add_flag("--no-ea", train.no_ea, "disable embedding alignment");
    cmd_train->add_flag("--no-plce", train.no_plce, "disable pseudo-label mixing");
    cmd_train->add_flag("--no-bc", train.no_bc, "disable the balanced classifier");
    cmd_train->add_option("--ablate", train.ablate, "'all' disables every component (baseline)");

    ReportArgs report;
    CLI::App* cmd_report = app.add_subcommand("report", "emit CSV plot data from metrics files");
    cmd_report->add_option("metrics", report.metrics_files, "metrics JSONL files");
    cmd_report->add_option("--out", report.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_report->parsed()) return run_report(report);
        std::cerr << "no command given\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
