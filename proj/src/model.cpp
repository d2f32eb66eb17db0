#include "semiforge/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "semiforge/datagen.hpp"

namespace semiforge {

namespace {

Layer init_layer(std::size_t rows, std::size_t cols, std::mt19937& rng) {
    Layer layer;
    layer.W = Mat(rows, cols);
    layer.b.assign(rows, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    for (double& w : layer.W.data) w = gauss(rng);
    return layer;
}

Layer zero_layer(std::size_t rows, std::size_t cols) {
    Layer layer;
    layer.W = Mat(rows, cols);
    layer.b.assign(rows, 0.0);
    return layer;
}

void layer_accumulate(Layer& dst, const Layer& src, double scale) {
    for (std::size_t i = 0; i < dst.W.data.size(); ++i) dst.W.data[i] += scale * src.W.data[i];
    for (std::size_t i = 0; i < dst.b.size(); ++i) dst.b[i] += scale * src.b[i];
}

}  // namespace

ModelParams ModelParams::init(int d, int hidden, int h, int K, std::uint64_t seed) {
    if (d < 1 || hidden < 1 || h < 1 || K < 2)
        throw std::invalid_argument("ModelParams::init: bad dimensions");
    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
    ModelParams p;
    p.d = d;
    p.hidden = hidden;
    p.h = h;
    p.K = K;
    p.enc1 = init_layer(hidden, d, rng);
    p.enc2 = init_layer(h, hidden, rng);
    p.head_std = init_layer(K, h, rng);
    p.head_bal = init_layer(K, h, rng);
    return p;
}

std::size_t ModelParams::param_count() const {
    return enc1.W.data.size() + enc1.b.size() + enc2.W.data.size() + enc2.b.size() +
           head_std.W.data.size() + head_std.b.size() + head_bal.W.data.size() + head_bal.b.size();
}

bool ModelParams::all_finite() const {
    auto layer_ok = [](const Layer& l) {
        if (!l.W.all_finite()) return false;
        for (double b : l.b)
            if (!std::isfinite(b)) return false;
        return true;
    };
    return layer_ok(enc1) && layer_ok(enc2) && layer_ok(head_std) && layer_ok(head_bal);
}

ForwardTrace forward(const ModelParams& params, std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(params.d))
        throw std::invalid_argument("forward: input dimension mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");

    ForwardTrace t;
    t.input.assign(x.begin(), x.end());

    t.a1 = matvec(params.enc1.W, x);
    for (int i = 0; i < params.hidden; ++i) t.a1[i] = std::tanh(t.a1[i] + params.enc1.b[i]);

    t.embedding = matvec(params.enc2.W, t.a1);
    for (int i = 0; i < params.h; ++i) t.embedding[i] = std::tanh(t.embedding[i] + params.enc2.b[i]);

    t.logits_std = matvec(params.head_std.W, t.embedding);
    t.logits_bal = matvec(params.head_bal.W, t.embedding);
    for (int k = 0; k < params.K; ++k) {
        t.logits_std[k] += params.head_std.b[k];
        t.logits_bal[k] += params.head_bal.b[k];
    }
    return t;
}

Gradients Gradients::zeros_like(const ModelParams& p) {
    Gradients g;
    g.enc1 = zero_layer(p.enc1.W.rows, p.enc1.W.cols);
    g.enc2 = zero_layer(p.enc2.W.rows, p.enc2.W.cols);
    g.head_std = zero_layer(p.head_std.W.rows, p.head_std.W.cols);
    g.head_bal = zero_layer(p.head_bal.W.rows, p.head_bal.W.cols);
    return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
    layer_accumulate(enc1, other.enc1, scale);
    layer_accumulate(enc2, other.enc2, scale);
    layer_accumulate(head_std, other.head_std, scale);
    layer_accumulate(head_bal, other.head_bal, scale);
}

Gradients backward(const ModelParams& params,
                   std::span<const ForwardTrace> traces,
                   std::span<const LossGrad> loss_grads) {
    if (traces.size() != loss_grads.size())
        throw std::runtime_error("backward: trace/gradient count mismatch");

    Gradients g = Gradients::zeros_like(params);
    const std::size_t K = static_cast<std::size_t>(params.K);
    const std::size_t h = static_cast<std::size_t>(params.h);

    for (std::size_t n = 0; n < traces.size(); ++n) {
        const ForwardTrace& t = traces[n];
        const LossGrad& lg = loss_grads[n];
        if (t.embedding.size() != h || t.a1.size() != static_cast<std::size_t>(params.hidden) ||
            t.input.size() != static_cast<std::size_t>(params.d))
            throw std::runtime_error("backward: trace shape does not match params");
        if (!lg.d_logits_std.empty() && lg.d_logits_std.size() != K)
            throw std::runtime_error("backward: d_logits_std shape mismatch");
        if (!lg.d_logits_bal.empty() && lg.d_logits_bal.size() != K)
            throw std::runtime_error("backward: d_logits_bal shape mismatch");
        if (!lg.d_embedding.empty() && lg.d_embedding.size() != h)
            throw std::runtime_error("backward: d_embedding shape mismatch");

        std::vector<double> de(h, 0.0);
        if (!lg.d_embedding.empty()) de = lg.d_embedding;
        if (!lg.d_logits_std.empty()) {
            add_outer(g.head_std.W, lg.d_logits_std, t.embedding);
            for (std::size_t k = 0; k < K; ++k) g.head_std.b[k] += lg.d_logits_std[k];
            const auto back = matvec_t(params.head_std.W, lg.d_logits_std);
            for (std::size_t i = 0; i < h; ++i) de[i] += back[i];
        }
        if (!lg.d_logits_bal.empty()) {
            add_outer(g.head_bal.W, lg.d_logits_bal, t.embedding);
            for (std::size_t k = 0; k < K; ++k) g.head_bal.b[k] += lg.d_logits_bal[k];
            const auto back = matvec_t(params.head_bal.W, lg.d_logits_bal);
            for (std::size_t i = 0; i < h; ++i) de[i] += back[i];
        }

        // tanh'(z) = 1 - tanh(z)^2, tanh values cached in the trace
        std::vector<double> dz2(h);
        for (std::size_t i = 0; i < h; ++i) dz2[i] = de[i] * (1.0 - t.embedding[i] * t.embedding[i]);
        add_outer(g.enc2.W, dz2, t.a1);
        for (std::size_t i = 0; i < h; ++i) g.enc2.b[i] += dz2[i];

        const auto da1 = matvec_t(params.enc2.W, dz2);
        std::vector<double> dz1(params.hidden);
        for (int i = 0; i < params.hidden; ++i) dz1[i] = da1[i] * (1.0 - t.a1[i] * t.a1[i]);
        add_outer(g.enc1.W, dz1, t.input);
        for (int i = 0; i < params.hidden; ++i) g.enc1.b[i] += dz1[i];
    }
    return g;
}

namespace {

void sgd_layer(Layer& theta, const Layer& grad, Layer& vel, double lr, double momentum, double wd) {
    for (std::size_t i = 0; i < theta.W.data.size(); ++i) {
        vel.W.data[i] = momentum * vel.W.data[i] + grad.W.data[i] + wd * theta.W.data[i];
        theta.W.data[i] -= lr * vel.W.data[i];
    }
    for (std::size_t i = 0; i < theta.b.size(); ++i) {
        vel.b[i] = momentum * vel.b[i] + grad.b[i] + wd * theta.b[i];
        theta.b[i] -= lr * vel.b[i];
    }
}

}  // namespace

void sgd_step(ModelParams& params, const Gradients& grads, OptState& opt) {
    if (!opt.initialized) {
        opt.velocity = Gradients::zeros_like(params);
        opt.initialized = true;
    }
    sgd_layer(params.enc1, grads.enc1, opt.velocity.enc1, opt.lr, opt.momentum, opt.weight_decay);
    sgd_layer(params.enc2, grads.enc2, opt.velocity.enc2, opt.lr, opt.momentum, opt.weight_decay);
    sgd_layer(params.head_std, grads.head_std, opt.velocity.head_std, opt.lr, opt.momentum,
              opt.weight_decay);
    sgd_layer(params.head_bal, grads.head_bal, opt.velocity.head_bal, opt.lr, opt.momentum,
              opt.weight_decay);
}

namespace {

template <typename LayerLike, typename Fn>
void for_each_layer(LayerLike& p, Fn&& fn) {
    fn(p.enc1);
    fn(p.enc2);
    fn(p.head_std);
    fn(p.head_bal);
}

}  // namespace

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(params.param_count());
    for_each_layer(params, [&](const Layer& l) {
        out.insert(out.end(), l.W.data.begin(), l.W.data.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    });
    return out;
}

void unflatten(ModelParams& params, std::span<const double> values) {
    if (values.size() != params.param_count())
        throw std::invalid_argument("unflatten: length mismatch");
    std::size_t pos = 0;
    for_each_layer(params, [&](Layer& l) {
        for (double& w : l.W.data) w = values[pos++];
        for (double& b : l.b) b = values[pos++];
    });
}

std::vector<double> flatten(const Gradients& grads) {
    std::vector<double> out;
    for_each_layer(grads, [&](const Layer& l) {
        out.insert(out.end(), l.W.data.begin(), l.W.data.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    });
    return out;
}

namespace {

void write_layer(std::ofstream& out, const char* name, const Layer& l) {
    out << name << " " << l.W.rows << " " << l.W.cols << "\n";
    for (std::size_t r = 0; r < l.W.rows; ++r) {
        for (std::size_t c = 0; c < l.W.cols; ++c) {
            if (c) out << " ";
            out << fmt_double(l.W(r, c));
        }
        out << "\n";
    }
    for (std::size_t i = 0; i < l.b.size(); ++i) {
        if (i) out << " ";
        out << fmt_double(l.b[i]);
    }
    out << "\n";
}

Layer read_layer(std::ifstream& in, const std::string& expected_name) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || name != expected_name)
        throw std::runtime_error("load_checkpoint: expected block '" + expected_name + "'");
    Layer l;
    l.W = Mat(rows, cols);
    for (double& w : l.W.data)
        if (!(in >> w)) throw std::runtime_error("load_checkpoint: truncated weights in " + name);
    l.b.resize(rows);
    for (double& b : l.b)
        if (!(in >> b)) throw std::runtime_error("load_checkpoint: truncated biases in " + name);
    return l;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << "semiforge-ckpt v1\n";
    out << "dims " << params.d << " " << params.hidden << " " << params.h << " " << params.K << "\n";
    write_layer(out, "enc1", params.enc1);
    write_layer(out, "enc2", params.enc2);
    write_layer(out, "head_std", params.head_std);
    write_layer(out, "head_bal", params.head_bal);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic, version, dims;
    if (!(in >> magic >> version) || magic != "semiforge-ckpt" || version != "v1")
        throw std::runtime_error("load_checkpoint: bad header in " + path);
    ModelParams p;
    if (!(in >> dims >> p.d >> p.hidden >> p.h >> p.K) || dims != "dims")
        throw std::runtime_error("load_checkpoint: bad dims line in " + path);
    p.enc1 = read_layer(in, "enc1");
    p.enc2 = read_layer(in, "enc2");
    p.head_std = read_layer(in, "head_std");
    p.head_bal = read_layer(in, "head_bal");
    return p;
}

}  // namespace semiforge
