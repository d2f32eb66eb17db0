#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/stat.h>
#include <sys/wait.h>

#include "semiforge/trainer.hpp"

namespace {

std::string bin() {
    const char* env = std::getenv("SEMIFORGE_BIN");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args, const std::string& log = "/tmp/semiforge_cli_out.txt") {
    const std::string cmd = bin() + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool file_exists(const std::string& path) {
    struct stat st{};
    return ::stat(path.c_str(), &st) == 0;
}

struct Workdir {
    std::string dir;
    Workdir() {
        char tmpl[] = "/tmp/semiforge_cli_XXXXXX";
        dir = mkdtemp(tmpl);
    }
};

void write_tiny_config(const std::string& path) {
    std::ofstream out(path);
    out << "# tiny run\n";
    out << "epochs_total = 3\n";
    out << "steps_per_epoch = 5\n";
    out << "batch_labeled = 8\n";
    out << "batch_unlabeled = 16\n";
    out << "warmup_epochs = 1\n";
    out << "hidden = 8\n";
    out << "embed_dim = 4\n";
    out << "bank_capacity = 8\n";
    out << "decay_interval = 5\n";
}

}  // namespace

TEST_CASE("gen writes a dataset and prints the counts table") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    const std::string log = w.dir + "/gen.log";
    CHECK(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 0.5 --d 4 --sep 6 "
              "--test-per-class 10 --seed 7 --out " + ds, log) == 0);
    CHECK(file_exists(ds));
    const std::string out = slurp(log);
    CHECK(out.find("class") != std::string::npos);
    CHECK(out.find("20") != std::string::npos);

    const semiforge::Dataset loaded = semiforge::load_dataset(ds);
    CHECK(loaded.K == 3);
    CHECK(loaded.d == 4);
    CHECK(loaded.test.size() == 30);
}

TEST_CASE("gen rejects K=1 with a usage exit code") {
    CHECK(run("gen --K 1") == 2);
}

TEST_CASE("train requires an existing dataset") {
    Workdir w;
    CHECK(run("train --dataset " + w.dir + "/missing.txt --out " + w.dir + "/run") == 2);
}

TEST_CASE("unknown config keys are usage errors") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    REQUIRE(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 1 --d 4 --sep 6 "
                "--test-per-class 5 --seed 1 --out " + ds) == 0);
    const std::string cfg = w.dir + "/bad.cfg";
    {
        std::ofstream out(cfg);
        out << "epochs_total = 2\n";
        out << "warmup_epoch = 1\n";  // typo must be fatal
    }
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --out " + w.dir + "/run") == 2);
}

TEST_CASE("train and report round trip") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    REQUIRE(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 0.5 --d 4 --sep 6 "
                "--test-per-class 10 --seed 7 --out " + ds) == 0);
    const std::string cfg = w.dir + "/run.cfg";
    write_tiny_config(cfg);

    const std::string run_dir = w.dir + "/run";
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --seed 11 --out " + run_dir) == 0);
    const std::string metrics = run_dir + "/metrics_seed11.jsonl";
    REQUIRE(file_exists(metrics));
    CHECK(file_exists(run_dir + "/summary.json"));
    CHECK(file_exists(run_dir + "/ckpt_final_seed11.txt"));
    CHECK(file_exists(run_dir + "/ckpt_best_seed11.txt"));
    CHECK(file_exists(run_dir + "/confusion_best_seed11.csv"));

    // metrics parse and have one record per epoch
    std::ifstream in(metrics);
    std::string line;
    int records = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const semiforge::EpochMetrics m = semiforge::parse_metrics_line(line);
        CHECK(m.epoch == records);
        ++records;
    }
    CHECK(records == 3);

    const std::string report_dir = w.dir + "/report";
    CHECK(run("report --out " + report_dir + " " + metrics) == 0);
    for (const char* f : {"mask_prob.csv", "used_acc.csv", "per_class_acc.csv", "confusion.csv"})
        CHECK(file_exists(report_dir + "/" + f));

    const std::string mask_csv = slurp(report_dir + "/mask_prob.csv");
    CHECK(mask_csv.rfind("epoch,mask_prob", 0) == 0);

    // confusion rows sum to the per-class test counts
    std::ifstream conf(report_dir + "/confusion.csv");
    std::string header;
    std::getline(conf, header);
    CHECK(header == "true\\pred,c0,c1,c2");
    while (std::getline(conf, line)) {
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        double sum = 0.0;
        while (std::getline(row, cell, ',')) sum += std::stod(cell);
        CHECK(sum == doctest::Approx(10.0).epsilon(1e-12));
    }
}

TEST_CASE("multi-seed training reports mean and std") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    REQUIRE(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 1 --d 4 --sep 8 "
                "--test-per-class 5 --seed 3 --out " + ds) == 0);
    const std::string cfg = w.dir + "/run.cfg";
    write_tiny_config(cfg);

    const std::string run_dir = w.dir + "/multi";
    const std::string log = w.dir + "/multi.log";
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --seed 5 --seeds 2 --out " + run_dir,
              log) == 0);
    CHECK(file_exists(run_dir + "/metrics_seed5.jsonl"));
    CHECK(file_exists(run_dir + "/metrics_seed6.jsonl"));
    const std::string summary = slurp(run_dir + "/summary.json");
    CHECK(summary.find("mean_best_acc") != std::string::npos);
    CHECK(summary.find("std_best_acc") != std::string::npos);

    // multi-run report uses mean/std columns
    const std::string report_dir = w.dir + "/report";
    CHECK(run("report --out " + report_dir + " " + run_dir + "/metrics_seed5.jsonl " +
              run_dir + "/metrics_seed6.jsonl") == 0);
    CHECK(slurp(report_dir + "/mask_prob.csv").rfind("epoch,mean,std", 0) == 0);
}

TEST_CASE("ablation flags are accepted and --ablate validates") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    REQUIRE(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 1 --d 4 --sep 6 "
                "--test-per-class 5 --seed 2 --out " + ds) == 0);
    const std::string cfg = w.dir + "/run.cfg";
    write_tiny_config(cfg);
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --seed 1 --ablate all --out " +
              w.dir + "/baseline") == 0);
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --seed 1 --no-ea --no-bank --out " +
              w.dir + "/ablated") == 0);
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --ablate some --out " + w.dir +
              "/bad") == 2);
}

TEST_CASE("report rejects missing and malformed inputs") {
    Workdir w;
    CHECK(run("report --out " + w.dir + "/rep " + w.dir + "/missing.jsonl") == 2);
    const std::string bad = w.dir + "/bad.jsonl";
    {
        std::ofstream out(bad);
        out << "{\"epoch\": 0}\n";  // missing required fields
    }
    const std::string log = w.dir + "/report.log";
    CHECK(run("report --out " + w.dir + "/rep " + bad, log) == 2);
    CHECK(slurp(log).find("record 1") != std::string::npos);
    CHECK(run("report --out " + w.dir + "/rep") == 2);  // no inputs at all
}

TEST_CASE("SEMIFORGE_SEED is the seed fallback") {
    Workdir w;
    const std::string a = w.dir + "/a.txt", b = w.dir + "/b.txt", c = w.dir + "/c.txt";
    const std::string base = "gen --K 3 --N1 10 --M1 10 --gamma-l 2 --gamma-u 1 --d 3 --sep 5 "
                             "--test-per-class 4 --out ";
    const std::string env = "SEMIFORGE_SEED=99 " + bin();
    auto run_env = [&](const std::string& args) {
        const int status = std::system((env + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    CHECK(run_env(base + a) == 0);
    CHECK(run_env(base + b) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(run(base + c + " --seed 99") == 0);  // explicit seed equals the env fallback
    CHECK(slurp(a) == slurp(c));
}

TEST_CASE("missing subcommand is a usage error") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
}

TEST_CASE("divergent training exits with code 3") {
    Workdir w;
    const std::string ds = w.dir + "/data.txt";
    REQUIRE(run("gen --K 3 --N1 20 --M1 40 --gamma-l 5 --gamma-u 1 --d 4 --sep 6 "
                "--test-per-class 5 --seed 4 --out " + ds) == 0);
    const std::string cfg = w.dir + "/diverge.cfg";
    {
        std::ofstream out(cfg);
        out << "epochs_total = 10\nsteps_per_epoch = 50\nbatch_labeled = 8\n"
               "batch_unlabeled = 16\nwarmup_epochs = 1\nhidden = 8\nembed_dim = 4\n"
               "lr = 1e8\n";
    }
    CHECK(run("train --dataset " + ds + " --config " + cfg + " --seed 1 --out " + w.dir + "/run") == 3);
}
