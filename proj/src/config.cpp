#include "semiforge/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "semiforge/datagen.hpp"

namespace semiforge {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream is(v);
    T out;
    is >> out;
    if (is.fail() || !is.eof())
        throw std::invalid_argument("config: bad value for '" + key + "': " + v);
    return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"epochs_total", [](TrainConfig& c, const std::string& v, const std::string& k) { c.epochs_total = parse_num<int>(v, k); }},
        {"steps_per_epoch", [](TrainConfig& c, const std::string& v, const std::string& k) { c.steps_per_epoch = parse_num<int>(v, k); }},
        {"batch_labeled", [](TrainConfig& c, const std::string& v, const std::string& k) { c.batch_labeled = parse_num<int>(v, k); }},
        {"batch_unlabeled", [](TrainConfig& c, const std::string& v, const std::string& k) { c.batch_unlabeled = parse_num<int>(v, k); }},
        {"warmup_epochs", [](TrainConfig& c, const std::string& v, const std::string& k) { c.warmup_epochs = parse_num<int>(v, k); }},
        {"warmup_tau", [](TrainConfig& c, const std::string& v, const std::string& k) { c.warmup_tau = parse_num<double>(v, k); }},
        {"lr", [](TrainConfig& c, const std::string& v, const std::string& k) { c.lr = parse_num<double>(v, k); }},
        {"momentum", [](TrainConfig& c, const std::string& v, const std::string& k) { c.momentum = parse_num<double>(v, k); }},
        {"weight_decay", [](TrainConfig& c, const std::string& v, const std::string& k) { c.weight_decay = parse_num<double>(v, k); }},
        {"hidden", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hidden = parse_num<int>(v, k); }},
        {"embed_dim", [](TrainConfig& c, const std::string& v, const std::string& k) { c.embed_dim = parse_num<int>(v, k); }},
        {"seed", [](TrainConfig& c, const std::string& v, const std::string& k) { c.seed = parse_num<std::uint64_t>(v, k); }},
        {"tau", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.tau = parse_num<double>(v, k); }},
        {"s", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.s = parse_num<double>(v, k); }},
        {"T_e", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.T_e = parse_num<double>(v, k); }},
        {"T_p", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.T_p = parse_num<double>(v, k); }},
        {"T_b", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.T_b = parse_num<double>(v, k); }},
        {"alpha", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.alpha = parse_num<double>(v, k); }},
        {"beta", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.beta = parse_num<double>(v, k); }},
        {"decay_interval", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.decay_interval = parse_num<int>(v, k); }},
        {"bank_capacity", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.bank_capacity = parse_num<int>(v, k); }},
        {"rho", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.rho = parse_num<double>(v, k); }},
        {"eps_pi", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.eps_pi = parse_num<double>(v, k); }},
        {"bal_logit_adjust", [](TrainConfig& c, const std::string& v, const std::string& k) { c.hyper.bal_logit_adjust = parse_bool(v, k); }},
        {"sigma_weak", [](TrainConfig& c, const std::string& v, const std::string& k) { c.aug.sigma_weak = parse_num<double>(v, k); }},
        {"sigma_strong", [](TrainConfig& c, const std::string& v, const std::string& k) { c.aug.sigma_strong = parse_num<double>(v, k); }},
        {"drop_prob", [](TrainConfig& c, const std::string& v, const std::string& k) { c.aug.drop_prob = parse_num<double>(v, k); }},
        {"use_bank", [](TrainConfig& c, const std::string& v, const std::string& k) { c.use_bank = parse_bool(v, k); }},
        {"use_oheml", [](TrainConfig& c, const std::string& v, const std::string& k) { c.use_oheml = parse_bool(v, k); }},
        {"use_ea", [](TrainConfig& c, const std::string& v, const std::string& k) { c.use_ea = parse_bool(v, k); }},
        {"use_plce", [](TrainConfig& c, const std::string& v, const std::string& k) { c.use_plce = parse_bool(v, k); }},
        {"use_balanced", [](TrainConfig& c, const std::string& v, const std::string& k) { c.use_balanced = parse_bool(v, k); }},
    };
    return table;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text, const TrainConfig& base) {
    TrainConfig cfg = base;
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        it->second(cfg, value, key);
    }
    return cfg;
}

TrainConfig load_config(const std::string& path, const TrainConfig& base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), base);
}

std::string dump_config(const TrainConfig& c) {
    std::ostringstream out;
    auto num = [&](const char* key, double v) { out << key << " = " << fmt_double(v) << "\n"; };
    auto integer = [&](const char* key, long long v) { out << key << " = " << v << "\n"; };
    auto boolean = [&](const char* key, bool v) { out << key << " = " << (v ? "true" : "false") << "\n"; };
    integer("epochs_total", c.epochs_total);
    integer("steps_per_epoch", c.steps_per_epoch);
    integer("batch_labeled", c.batch_labeled);
    integer("batch_unlabeled", c.batch_unlabeled);
    integer("warmup_epochs", c.warmup_epochs);
    num("warmup_tau", c.warmup_tau);
    num("lr", c.lr);
    num("momentum", c.momentum);
    num("weight_decay", c.weight_decay);
    integer("hidden", c.hidden);
    integer("embed_dim", c.embed_dim);
    integer("seed", static_cast<long long>(c.seed));
    num("tau", c.hyper.tau);
    num("s", c.hyper.s);
    num("T_e", c.hyper.T_e);
    num("T_p", c.hyper.T_p);
    num("T_b", c.hyper.T_b);
    num("alpha", c.hyper.alpha);
    num("beta", c.hyper.beta);
    integer("decay_interval", c.hyper.decay_interval);
    integer("bank_capacity", c.hyper.bank_capacity);
    num("rho", c.hyper.rho);
    num("eps_pi", c.hyper.eps_pi);
    boolean("bal_logit_adjust", c.hyper.bal_logit_adjust);
    num("sigma_weak", c.aug.sigma_weak);
    num("sigma_strong", c.aug.sigma_strong);
    num("drop_prob", c.aug.drop_prob);
    boolean("use_bank", c.use_bank);
    boolean("use_oheml", c.use_oheml);
    boolean("use_ea", c.use_ea);
    boolean("use_plce", c.use_plce);
    boolean("use_balanced", c.use_balanced);
    return out.str();
}

}  // namespace semiforge
