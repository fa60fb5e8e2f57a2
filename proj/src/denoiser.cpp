#include "sdlab/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace sdlab {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// y = W x + b, W row-major out_dim x in_dim
void linear(const Tensor& w, const Tensor& b, const double* x, double* y) {
    int out_dim = w.rows(), in_dim = w.cols();
    for (int i = 0; i < out_dim; ++i) {
        double acc = b.data[static_cast<size_t>(i)];
        const double* row = &w.data[static_cast<size_t>(i) * in_dim];
        for (int j = 0; j < in_dim; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

// accumulates dL/dW, dL/db from dy and x; writes dL/dx when dx != nullptr
void linear_backward(const Tensor& w, const double* x, const double* dy, Vec& dw, Vec& db,
                     double* dx) {
    int out_dim = w.rows(), in_dim = w.cols();
    for (int i = 0; i < out_dim; ++i) {
        db[static_cast<size_t>(i)] += dy[i];
        double* dwrow = &dw[static_cast<size_t>(i) * in_dim];
        for (int j = 0; j < in_dim; ++j) dwrow[j] += dy[i] * x[j];
    }
    if (dx) {
        for (int j = 0; j < in_dim; ++j) {
            double acc = 0.0;
            for (int i = 0; i < out_dim; ++i)
                acc += w.data[static_cast<size_t>(i) * in_dim + j] * dy[i];
            dx[j] = acc;
        }
    }
}

void time_features(int t, int total_steps, int freqs, double* out) {
    double s = static_cast<double>(t) / static_cast<double>(total_steps);
    for (int j = 0; j < freqs; ++j) {
        double w = std::ldexp(M_PI, j) * s;  // 2^j * pi * s
        out[2 * j] = std::sin(w);
        out[2 * j + 1] = std::cos(w);
    }
}

enum TensorIdx {
    kTextTable = 0,
    kAdapterW1,
    kAdapterB1,
    kAdapterW2,
    kAdapterB2,
    kTrunkW1,
    kTrunkB1,
    kTrunkW2,
    kTrunkB2,
    kTrunkW3,
    kTrunkB3,
    kTrunkW4,
    kTrunkB4,
    kNumTensors
};

struct ForwardCache {
    bool has_image = false;
    int text_row = 0;
    Vec adapter_in, adapter_h1pre, adapter_h1, adapter_out;
    Vec input;  // trunk input
    Vec h1pre, h1, h2pre, h2, h3pre, h3;
    Vec out;
};

void forward(const Denoiser& m, const Vec& z_t, int t, const Condition& cond, ForwardCache& c) {
    if (static_cast<int>(z_t.size()) != m.dim)
        throw std::invalid_argument("denoiser: z_t has wrong dimension");
    if (t < 1 || t > m.total_steps) throw std::invalid_argument("denoiser: timestep out of range");
    if (cond.kind == TextCond::NegLabel)
        throw std::invalid_argument("denoiser: negative labels are not supported by the learned prior");

    const auto& p = m.params;
    c.adapter_out.assign(static_cast<size_t>(m.adapter_out), 0.0);
    c.has_image = cond.image.has_value();
    if (c.has_image) {
        const Vec& img = *cond.image;
        if (static_cast<int>(img.size()) != m.dim)
            throw std::invalid_argument("denoiser: image has wrong dimension");
        c.adapter_in = img;
        c.adapter_h1pre.resize(static_cast<size_t>(m.adapter_hidden));
        linear(p[kAdapterW1], p[kAdapterB1], img.data(), c.adapter_h1pre.data());
        c.adapter_h1.resize(c.adapter_h1pre.size());
        for (size_t i = 0; i < c.adapter_h1.size(); ++i) c.adapter_h1[i] = silu(c.adapter_h1pre[i]);
        linear(p[kAdapterW2], p[kAdapterB2], c.adapter_h1.data(), c.adapter_out.data());
    }

    c.text_row = cond.kind == TextCond::Null ? static_cast<int>(m.labels.size())
                                             : m.label_index(cond.label);

    c.input.resize(static_cast<size_t>(m.input_dim()));
    double* in = c.input.data();
    std::copy(z_t.begin(), z_t.end(), in);
    time_features(t, m.total_steps, m.time_freqs, in + m.dim);
    const double* emb = &p[kTextTable].data[static_cast<size_t>(c.text_row) * m.text_dim];
    std::copy(emb, emb + m.text_dim, in + m.dim + 2 * m.time_freqs);
    std::copy(c.adapter_out.begin(), c.adapter_out.end(),
              in + m.dim + 2 * m.time_freqs + m.text_dim);

    auto act = [](const Vec& pre, Vec& post) {
        post.resize(pre.size());
        for (size_t i = 0; i < pre.size(); ++i) post[i] = silu(pre[i]);
    };
    c.h1pre.resize(static_cast<size_t>(m.width));
    linear(p[kTrunkW1], p[kTrunkB1], c.input.data(), c.h1pre.data());
    act(c.h1pre, c.h1);
    c.h2pre.resize(static_cast<size_t>(m.width));
    linear(p[kTrunkW2], p[kTrunkB2], c.h1.data(), c.h2pre.data());
    act(c.h2pre, c.h2);
    c.h3pre.resize(static_cast<size_t>(m.width));
    linear(p[kTrunkW3], p[kTrunkB3], c.h2.data(), c.h3pre.data());
    act(c.h3pre, c.h3);
    c.out.resize(static_cast<size_t>(m.dim));
    linear(p[kTrunkW4], p[kTrunkB4], c.h3.data(), c.out.data());
}

struct Grads {
    std::vector<Vec> g;  // aligned with Denoiser::params
    explicit Grads(const Denoiser& m) {
        g.resize(m.params.size());
        for (size_t i = 0; i < g.size(); ++i) g[i].assign(m.params[i].data.size(), 0.0);
    }
    void add(const Grads& other) {
        for (size_t i = 0; i < g.size(); ++i)
            for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j];
    }
};

// accumulates parameter gradients for one sample given dL/dout
void backward(const Denoiser& m, const ForwardCache& c, const Vec& dout, Grads& grads) {
    const auto& p = m.params;
    Vec dh(static_cast<size_t>(m.width));
    Vec dh_prev(static_cast<size_t>(m.width));

    linear_backward(p[kTrunkW4], c.h3.data(), dout.data(), grads.g[kTrunkW4], grads.g[kTrunkB4],
                    dh.data());
    for (int i = 0; i < m.width; ++i)
        dh[static_cast<size_t>(i)] *= silu_grad(c.h3pre[static_cast<size_t>(i)]);

    linear_backward(p[kTrunkW3], c.h2.data(), dh.data(), grads.g[kTrunkW3], grads.g[kTrunkB3],
                    dh_prev.data());
    for (int i = 0; i < m.width; ++i)
        dh_prev[static_cast<size_t>(i)] *= silu_grad(c.h2pre[static_cast<size_t>(i)]);
    dh.swap(dh_prev);

    linear_backward(p[kTrunkW2], c.h1.data(), dh.data(), grads.g[kTrunkW2], grads.g[kTrunkB2],
                    dh_prev.data());
    for (int i = 0; i < m.width; ++i)
        dh_prev[static_cast<size_t>(i)] *= silu_grad(c.h1pre[static_cast<size_t>(i)]);
    dh.swap(dh_prev);

    Vec din(static_cast<size_t>(m.input_dim()));
    linear_backward(p[kTrunkW1], c.input.data(), dh.data(), grads.g[kTrunkW1], grads.g[kTrunkB1],
                    din.data());

    // text embedding slice
    const double* dtext = din.data() + m.dim + 2 * m.time_freqs;
    double* emb_grad = &grads.g[kTextTable][static_cast<size_t>(c.text_row) * m.text_dim];
    for (int j = 0; j < m.text_dim; ++j) emb_grad[j] += dtext[j];

    // adapter slice
    if (c.has_image) {
        const double* dadapter = din.data() + m.dim + 2 * m.time_freqs + m.text_dim;
        Vec dah(static_cast<size_t>(m.adapter_hidden));
        linear_backward(p[kAdapterW2], c.adapter_h1.data(), dadapter, grads.g[kAdapterW2],
                        grads.g[kAdapterB2], dah.data());
        for (int i = 0; i < m.adapter_hidden; ++i)
            dah[static_cast<size_t>(i)] *= silu_grad(c.adapter_h1pre[static_cast<size_t>(i)]);
        linear_backward(p[kAdapterW1], c.adapter_in.data(), dah.data(), grads.g[kAdapterW1],
                        grads.g[kAdapterB1], nullptr);
    }
}

Tensor make_tensor(const std::string& name, std::vector<int> shape) {
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    size_t n = 1;
    for (int s : t.shape) n *= static_cast<size_t>(s);
    t.data.assign(n, 0.0);
    return t;
}

void init_linear(Tensor& w, Rng& rng) {
    double bound = std::sqrt(6.0 / (w.rows() + w.cols()));
    for (auto& x : w.data) x = bound * (2.0 * rng.uniform() - 1.0);
}

}  // namespace

int Denoiser::label_index(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
        throw std::invalid_argument("denoiser: unknown text label '" + label + "'");
    return static_cast<int>(it - labels.begin());
}

const Tensor& Denoiser::tensor(const std::string& name) const {
    for (const auto& t : params)
        if (t.name == name) return t;
    throw std::invalid_argument("denoiser: no tensor named '" + name + "'");
}

Tensor& Denoiser::tensor(const std::string& name) {
    for (auto& t : params)
        if (t.name == name) return t;
    throw std::invalid_argument("denoiser: no tensor named '" + name + "'");
}

Vec Denoiser::predict(const Vec& z_t, int t, const Condition& cond) const {
    ForwardCache c;
    forward(*this, z_t, t, cond, c);
    return c.out;
}

Denoiser make_denoiser(const GmmPrior& prior, const NoiseSchedule& sched, uint64_t seed, int width,
                       int adapter_hidden) {
    prior.validate();
    Denoiser m;
    m.dim = prior.dim;
    m.total_steps = sched.total_steps;
    m.width = width;
    m.adapter_hidden = adapter_hidden;
    for (const auto& [label, idx] : prior.text_map) m.labels.push_back(label);

    int L = static_cast<int>(m.labels.size());
    m.params.push_back(make_tensor("text_table", {L + 1, m.text_dim}));
    m.params.push_back(make_tensor("adapter.w1", {m.adapter_hidden, m.dim}));
    m.params.push_back(make_tensor("adapter.b1", {m.adapter_hidden}));
    m.params.push_back(make_tensor("adapter.w2", {m.adapter_out, m.adapter_hidden}));
    m.params.push_back(make_tensor("adapter.b2", {m.adapter_out}));
    m.params.push_back(make_tensor("trunk.w1", {m.width, m.input_dim()}));
    m.params.push_back(make_tensor("trunk.b1", {m.width}));
    m.params.push_back(make_tensor("trunk.w2", {m.width, m.width}));
    m.params.push_back(make_tensor("trunk.b2", {m.width}));
    m.params.push_back(make_tensor("trunk.w3", {m.width, m.width}));
    m.params.push_back(make_tensor("trunk.b3", {m.width}));
    m.params.push_back(make_tensor("trunk.w4", {m.dim, m.width}));
    m.params.push_back(make_tensor("trunk.b4", {m.dim}));

    Rng rng(mix_seed(seed, 0x64656e6f));
    for (auto& x : m.params[kTextTable].data) x = 0.1 * rng.normal();
    init_linear(m.params[kAdapterW1], rng);
    init_linear(m.params[kAdapterW2], rng);
    init_linear(m.params[kTrunkW1], rng);
    init_linear(m.params[kTrunkW2], rng);
    init_linear(m.params[kTrunkW3], rng);
    init_linear(m.params[kTrunkW4], rng);
    return m;
}

std::vector<double> pretrain(Denoiser& model, const GmmPrior& prior, const NoiseSchedule& sched,
                             const PretrainConfig& cfg) {
    if (cfg.steps < 0) throw std::invalid_argument("pretrain: steps must be >= 0");
    if (cfg.batch < 1) throw std::invalid_argument("pretrain: batch must be >= 1");
    std::vector<double> curve;
    if (cfg.steps == 0) return curve;
    curve.reserve(static_cast<size_t>(cfg.steps));

    std::vector<std::string> labels = model.labels;
    if (labels.empty()) throw std::invalid_argument("pretrain: prior has no text labels");

    // Adam state over the flat parameter list
    std::vector<Vec> adam_m(model.params.size()), adam_v(model.params.size());
    for (size_t i = 0; i < model.params.size(); ++i) {
        adam_m[i].assign(model.params[i].data.size(), 0.0);
        adam_v[i].assign(model.params[i].data.size(), 0.0);
    }

    Rng rng(mix_seed(cfg.seed, 0x70726574));
    struct Sample {
        Vec z_t;
        int t;
        Condition cond;
        Vec eps;
    };
    std::vector<Sample> batch(static_cast<size_t>(cfg.batch));

    const int chunk = 8;
    int n_chunks = (cfg.batch + chunk - 1) / chunk;
    std::vector<Grads> chunk_grads;
    chunk_grads.reserve(static_cast<size_t>(n_chunks));
    for (int i = 0; i < n_chunks; ++i) chunk_grads.emplace_back(model);
    std::vector<double> chunk_loss(static_cast<size_t>(n_chunks));

    double inv = 1.0 / (static_cast<double>(cfg.batch) * model.dim);

    for (int step = 1; step <= cfg.steps; ++step) {
        // draws are sequential so the stream never depends on thread count
        for (auto& s : batch) {
            const std::string& label = labels[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(labels.size()) - 1))];
            Vec z = sample(prior, Condition::text(label), rng);
            bool drop_text = rng.uniform() < 0.5;
            bool with_image = rng.uniform() < 0.5;
            s.cond = drop_text ? Condition::null() : Condition::text(label);
            if (with_image) s.cond.image = z;
            s.t = rng.uniform_int(1, sched.total_steps);
            s.eps = rng.normal_vec(prior.dim);
            s.z_t = add_noise(z, s.t, s.eps, sched);
        }

#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < n_chunks; ++ci) {
            auto& g = chunk_grads[static_cast<size_t>(ci)];
            for (auto& t : g.g) std::fill(t.begin(), t.end(), 0.0);
            double loss = 0.0;
            ForwardCache cache;
            int lo = ci * chunk, hi = std::min(cfg.batch, lo + chunk);
            for (int si = lo; si < hi; ++si) {
                const auto& s = batch[static_cast<size_t>(si)];
                forward(model, s.z_t, s.t, s.cond, cache);
                Vec dout(static_cast<size_t>(model.dim));
                for (int k = 0; k < model.dim; ++k) {
                    double r = cache.out[static_cast<size_t>(k)] - s.eps[static_cast<size_t>(k)];
                    loss += r * r;
                    dout[static_cast<size_t>(k)] = 2.0 * r * inv;
                }
                backward(model, cache, dout, g);
            }
            chunk_loss[static_cast<size_t>(ci)] = loss;
        }

        double loss = 0.0;
        for (int ci = 1; ci < n_chunks; ++ci) chunk_grads[0].add(chunk_grads[static_cast<size_t>(ci)]);
        for (double l : chunk_loss) loss += l;
        loss *= inv;
        if (!std::isfinite(loss))
            throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));
        curve.push_back(loss);

        double bc1 = 1.0 - std::pow(cfg.beta1, step);
        double bc2 = 1.0 - std::pow(cfg.beta2, step);
        for (size_t i = 0; i < model.params.size(); ++i) {
            auto& pdata = model.params[i].data;
            const auto& g = chunk_grads[0].g[i];
            for (size_t j = 0; j < pdata.size(); ++j) {
                adam_m[i][j] = cfg.beta1 * adam_m[i][j] + (1.0 - cfg.beta1) * g[j];
                adam_v[i][j] = cfg.beta2 * adam_v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
                pdata[j] -= cfg.lr * (adam_m[i][j] / bc1) / (std::sqrt(adam_v[i][j] / bc2) + cfg.adam_eps);
            }
        }
    }
    return curve;
}

double rec_loss_learned(const Denoiser& model, const Vec& z_t, int t, const Vec& image,
                        const NoiseSchedule& sched) {
    Vec eps_hat = model.predict(z_t, t, Condition::null().with_image(image));
    Vec zhat = pseudo_reconstruct(z_t, eps_hat, t, sched);
    return squared_distance(zhat, image) / static_cast<double>(image.size());
}

double finetune_adapter_step(Denoiser& model, const Vec& z_t, int t, const Vec& image,
                             const NoiseSchedule& sched, double lr) {
    if (static_cast<int>(image.size()) != model.dim)
        throw std::invalid_argument("finetune_adapter_step: image has wrong dimension");
    ForwardCache cache;
    Condition cond = Condition::null().with_image(image);
    forward(model, z_t, t, cond, cache);

    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab);
    double c1 = std::sqrt(1.0 - ab);
    double d = static_cast<double>(model.dim);

    // rec = || (z_t - c1 eps_hat)/c0 - image ||^2 / d
    double rec = 0.0;
    Vec dout(static_cast<size_t>(model.dim));
    for (int k = 0; k < model.dim; ++k) {
        double zhat = (z_t[static_cast<size_t>(k)] - c1 * cache.out[static_cast<size_t>(k)]) / c0;
        double r = zhat - image[static_cast<size_t>(k)];
        rec += r * r;
        dout[static_cast<size_t>(k)] = (2.0 / d) * r * (-c1 / c0);
    }
    rec /= d;

    Grads grads(model);
    backward(model, cache, dout, grads);
    for (size_t i : {static_cast<size_t>(kAdapterW2), static_cast<size_t>(kAdapterB2)}) {
        for (double g : grads.g[i])
            if (!std::isfinite(g)) throw std::runtime_error("finetune_adapter_step: non-finite gradient");
        auto& pdata = model.params[i].data;
        for (size_t j = 0; j < pdata.size(); ++j) pdata[j] -= lr * grads.g[i][j];
    }
    return rec;
}

void save_checkpoint(const Denoiser& model, const std::string& path) {
    nlohmann::json header;
    header["format"] = "sdlab-checkpoint";
    header["version"] = 1;
    header["dim"] = model.dim;
    header["total_steps"] = model.total_steps;
    header["time_freqs"] = model.time_freqs;
    header["text_dim"] = model.text_dim;
    header["adapter_hidden"] = model.adapter_hidden;
    header["adapter_out"] = model.adapter_out;
    header["width"] = model.width;
    header["labels"] = model.labels;
    auto tensors = nlohmann::json::array();
    for (const auto& t : model.params) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    header["tensors"] = tensors;
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
    const char magic[8] = {'S', 'D', 'L', 'A', 'B', 'C', 'K', 'P'};
    out.write(magic, 8);
    uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);  // little-endian container
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& t : model.params)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Denoiser load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SDLABCKP", 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in '" + path + "'");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in '" + path + "'");
    nlohmann::json header = nlohmann::json::parse(hs);

    Denoiser m;
    m.dim = header.at("dim").get<int>();
    m.total_steps = header.at("total_steps").get<int>();
    m.time_freqs = header.at("time_freqs").get<int>();
    m.text_dim = header.at("text_dim").get<int>();
    m.adapter_hidden = header.at("adapter_hidden").get<int>();
    m.adapter_out = header.at("adapter_out").get<int>();
    m.width = header.at("width").get<int>();
    m.labels = header.at("labels").get<std::vector<std::string>>();
    for (const auto& tj : header.at("tensors")) {
        Tensor t;
        t.name = tj.at("name").get<std::string>();
        t.shape = tj.at("shape").get<std::vector<int>>();
        size_t n = 1;
        for (int s : t.shape) n *= static_cast<size_t>(s);
        t.data.resize(n);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        m.params.push_back(std::move(t));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data in '" + path + "'");
    return m;
}

}  // namespace sdlab
