#pragma once

// Leaf learners: small feed-forward networks with dense ReLU layers and an
// embedded NALU layer, trained by SGD on mean squared error.
//
// The NALU blends an additive path a = Wx with a multiplicative path
// m = exp(W log(|x|+eps)) through a learned gate g = sigmoid(Gx), where
// W = tanh(W_hat) ⊙ sigmoid(M_hat). The log/exp path is what lets a leaf
// learn products and powers that extrapolate outside the sampled range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dnt/core.hpp"

namespace dnt {

enum class Activation { relu, identity };

// Upper clamp on the multiplicative pre-activation so exp stays finite for
// any finite input; the gradient is zero past the clamp.
inline constexpr double kNaluExpClamp = 50.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
    Activation act = Activation::relu;
};

struct NaluLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w_hat;  // out x in
    std::vector<double> m_hat;  // out x in
    std::vector<double> g;      // out x in
    double eps = 1e-7;
};

using Layer = std::variant<DenseLayer, NaluLayer>;

inline std::size_t layer_in(const Layer& l) {
    return std::visit([](const auto& v) { return v.in; }, l);
}
inline std::size_t layer_out(const Layer& l) {
    return std::visit([](const auto& v) { return v.out; }, l);
}

// ---------------------------------------------------------------------------
// Forward caches
// ---------------------------------------------------------------------------

struct DenseCache {
    std::vector<double> input;
    std::vector<double> z;  // pre-activation
};

struct NaluCache {
    std::vector<double> input;
    std::vector<double> lx;     // log(|x| + eps)
    std::vector<double> w_eff;  // tanh(w_hat) ⊙ sigmoid(m_hat)
    std::vector<double> add;    // additive path a
    std::vector<double> mul;    // multiplicative path m
    std::vector<double> gate;   // sigmoid(Gx)
    std::vector<double> s;      // W · lx before clamping
};

using LayerCache = std::variant<DenseCache, NaluCache>;

struct NetworkCache {
    std::vector<LayerCache> layers;
    double output = 0.0;
};

// ---------------------------------------------------------------------------
// Layer forward passes
// ---------------------------------------------------------------------------

/// Additive path only: a = Wx with W = tanh(W_hat) ⊙ sigmoid(M_hat).
inline std::vector<double> nac_forward(const NaluLayer& l, std::span<const double> x) {
    if (x.size() != l.in) throw std::invalid_argument("nac_forward: input dimension mismatch");
    std::vector<double> a(l.out, 0.0);
    for (std::size_t k = 0; k < l.out; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < l.in; ++j) {
            acc += std::tanh(l.w_hat[k * l.in + j]) * sigmoid(l.m_hat[k * l.in + j]) * x[j];
        }
        a[k] = acc;
    }
    return a;
}

inline std::vector<double> nalu_forward(const NaluLayer& l, std::span<const double> x,
                                        NaluCache* cache = nullptr) {
    if (x.size() != l.in) throw std::invalid_argument("nalu_forward: input dimension mismatch");
    std::vector<double> w_eff(l.out * l.in);
    for (std::size_t i = 0; i < w_eff.size(); ++i) {
        w_eff[i] = std::tanh(l.w_hat[i]) * sigmoid(l.m_hat[i]);
    }
    std::vector<double> lx(l.in);
    for (std::size_t j = 0; j < l.in; ++j) lx[j] = std::log(std::abs(x[j]) + l.eps);

    std::vector<double> add(l.out), mul(l.out), gate(l.out), s(l.out), y(l.out);
    for (std::size_t k = 0; k < l.out; ++k) {
        double a = 0.0, sk = 0.0, gk = 0.0;
        for (std::size_t j = 0; j < l.in; ++j) {
            a += w_eff[k * l.in + j] * x[j];
            sk += w_eff[k * l.in + j] * lx[j];
            gk += l.g[k * l.in + j] * x[j];
        }
        add[k] = a;
        s[k] = sk;
        mul[k] = std::exp(std::min(sk, kNaluExpClamp));
        gate[k] = sigmoid(gk);
        y[k] = gate[k] * add[k] + (1.0 - gate[k]) * mul[k];
    }
    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->lx = std::move(lx);
        cache->w_eff = std::move(w_eff);
        cache->add = std::move(add);
        cache->mul = std::move(mul);
        cache->gate = std::move(gate);
        cache->s = std::move(s);
    }
    return y;
}

inline std::vector<double> dense_forward(const DenseLayer& l, std::span<const double> x,
                                         DenseCache* cache = nullptr) {
    if (x.size() != l.in) throw std::invalid_argument("dense_forward: input dimension mismatch");
    std::vector<double> z(l.out), y(l.out);
    for (std::size_t k = 0; k < l.out; ++k) {
        double acc = l.b[k];
        for (std::size_t j = 0; j < l.in; ++j) acc += l.w[k * l.in + j] * x[j];
        z[k] = acc;
        y[k] = (l.act == Activation::relu) ? std::max(0.0, acc) : acc;
    }
    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->z = std::move(z);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Per-layer parameter gradients; blob order mirrors parameter_blobs().
struct GradientSet {
    std::vector<std::vector<std::vector<double>>> layers;
};

/// The trainable blobs of a layer: dense {w, b}, NALU {w_hat, m_hat, g}.
inline std::vector<std::vector<double>*> parameter_blobs(Layer& l) {
    if (auto* d = std::get_if<DenseLayer>(&l)) return {&d->w, &d->b};
    auto* n = std::get_if<NaluLayer>(&l);
    return {&n->w_hat, &n->m_hat, &n->g};
}

inline std::vector<const std::vector<double>*> parameter_blobs(const Layer& l) {
    if (const auto* d = std::get_if<DenseLayer>(&l)) return {&d->w, &d->b};
    const auto* n = std::get_if<NaluLayer>(&l);
    return {&n->w_hat, &n->m_hat, &n->g};
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

class Network {
  public:
    Network() = default;
    Network(std::size_t input_dim, std::vector<Layer> layers)
        : input_dim_(input_dim), layers_(std::move(layers)) {
        validate();
    }

    std::size_t input_dim() const { return input_dim_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) {
            for (const auto* blob : parameter_blobs(l)) n += blob->size();
        }
        return n;
    }

    /// Scalar output; fills the activation cache when given one.
    double forward(std::span<const double> x, NetworkCache* cache = nullptr) const {
        if (x.size() != input_dim_) {
            throw std::invalid_argument("network expects dimension " + std::to_string(input_dim_));
        }
        if (cache) cache->layers.clear();
        std::vector<double> cur(x.begin(), x.end());
        for (const auto& layer : layers_) {
            if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                DenseCache c;
                cur = dense_forward(*d, cur, cache ? &c : nullptr);
                if (cache) cache->layers.emplace_back(std::move(c));
            } else {
                const auto& n = std::get<NaluLayer>(layer);
                NaluCache c;
                cur = nalu_forward(n, cur, cache ? &c : nullptr);
                if (cache) cache->layers.emplace_back(std::move(c));
            }
        }
        if (cache) cache->output = cur[0];
        return cur[0];
    }

    /// Gradients of 0.5*(y - target)^2 w.r.t. every parameter.
    GradientSet backward(const NetworkCache& cache, double y_target) const {
        if (cache.layers.size() != layers_.size()) {
            throw std::invalid_argument("stale cache: layer count mismatch");
        }
        GradientSet grads = zero_gradients();
        std::vector<double> dy{cache.output - y_target};
        for (std::size_t li = layers_.size(); li-- > 0;) {
            dy = layer_backward(li, cache.layers[li], dy, grads.layers[li]);
        }
        return grads;
    }

    GradientSet zero_gradients() const {
        GradientSet g;
        g.layers.resize(layers_.size());
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            for (const auto* blob : parameter_blobs(layers_[li])) {
                g.layers[li].emplace_back(blob->size(), 0.0);
            }
        }
        return g;
    }

    // -- serialization ------------------------------------------------------

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["input_dim"] = input_dim_;
        auto& arr = j["layers"] = nlohmann::json::array();
        for (const auto& layer : layers_) {
            if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                check_finite(d->w, "dense weights");
                check_finite(d->b, "dense biases");
                arr.push_back({{"kind", "dense"},
                               {"in", d->in},
                               {"out", d->out},
                               {"activation", d->act == Activation::relu ? "relu" : "identity"},
                               {"w", d->w},
                               {"b", d->b}});
            } else {
                const auto& n = std::get<NaluLayer>(layer);
                check_finite(n.w_hat, "nalu w_hat");
                check_finite(n.m_hat, "nalu m_hat");
                check_finite(n.g, "nalu gate weights");
                arr.push_back({{"kind", "nalu"},
                               {"in", n.in},
                               {"out", n.out},
                               {"eps", n.eps},
                               {"w_hat", n.w_hat},
                               {"m_hat", n.m_hat},
                               {"g", n.g}});
            }
        }
        return j;
    }

    static Network from_json(const nlohmann::json& j) {
        std::vector<Layer> layers;
        for (const auto& lj : j.at("layers")) {
            const std::string kind = lj.at("kind").get<std::string>();
            if (kind == "dense") {
                DenseLayer d;
                d.in = lj.at("in").get<std::size_t>();
                d.out = lj.at("out").get<std::size_t>();
                d.act = lj.at("activation").get<std::string>() == "relu" ? Activation::relu
                                                                         : Activation::identity;
                d.w = lj.at("w").get<std::vector<double>>();
                d.b = lj.at("b").get<std::vector<double>>();
                layers.emplace_back(std::move(d));
            } else if (kind == "nalu") {
                NaluLayer n;
                n.in = lj.at("in").get<std::size_t>();
                n.out = lj.at("out").get<std::size_t>();
                n.eps = lj.at("eps").get<double>();
                n.w_hat = lj.at("w_hat").get<std::vector<double>>();
                n.m_hat = lj.at("m_hat").get<std::vector<double>>();
                n.g = lj.at("g").get<std::vector<double>>();
                layers.emplace_back(std::move(n));
            } else {
                throw std::runtime_error("unknown layer kind: " + kind);
            }
        }
        return Network(j.at("input_dim").get<std::size_t>(), std::move(layers));
    }

  private:
    void validate() const {
        std::size_t dim = input_dim_;
        for (const auto& l : layers_) {
            if (layer_in(l) != dim) throw std::invalid_argument("layer input dimension mismatch");
            dim = layer_out(l);
            for (const auto* blob : parameter_blobs(l)) {
                (void)blob;
            }
        }
        if (!layers_.empty() && dim != 1) {
            throw std::invalid_argument("network output must be scalar");
        }
    }

    static void check_finite(const std::vector<double>& v, const char* what) {
        for (double x : v) {
            if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite ") + what);
        }
    }

    std::vector<double> layer_backward(std::size_t li, const LayerCache& lc,
                                       std::span<const double> dy,
                                       std::vector<std::vector<double>>& blob_grads) const {
        if (const auto* d = std::get_if<DenseLayer>(&layers_[li])) {
            const auto& c = std::get<DenseCache>(lc);
            std::vector<double> dx(d->in, 0.0);
            auto& dw = blob_grads[0];
            auto& db = blob_grads[1];
            for (std::size_t k = 0; k < d->out; ++k) {
                // ReLU derivative at exactly 0 is taken as 0.
                const double dz = (d->act == Activation::relu && c.z[k] <= 0.0) ? 0.0 : dy[k];
                if (dz == 0.0) continue;
                db[k] += dz;
                for (std::size_t j = 0; j < d->in; ++j) {
                    dw[k * d->in + j] += dz * c.input[j];
                    dx[j] += dz * d->w[k * d->in + j];
                }
            }
            return dx;
        }

        const auto& n = std::get<NaluLayer>(layers_[li]);
        const auto& c = std::get<NaluCache>(lc);
        std::vector<double> dx(n.in, 0.0);
        auto& dw_hat = blob_grads[0];
        auto& dm_hat = blob_grads[1];
        auto& dg = blob_grads[2];
        for (std::size_t k = 0; k < n.out; ++k) {
            const double dgate = dy[k] * (c.add[k] - c.mul[k]);
            const double da = dy[k] * c.gate[k];
            const double dm = dy[k] * (1.0 - c.gate[k]);
            const double ds = (c.s[k] <= kNaluExpClamp) ? dm * c.mul[k] : 0.0;
            const double dgx = dgate * c.gate[k] * (1.0 - c.gate[k]);
            for (std::size_t j = 0; j < n.in; ++j) {
                const std::size_t kj = k * n.in + j;
                const double dw_eff = da * c.input[j] + ds * c.lx[j];
                const double th = std::tanh(n.w_hat[kj]);
                const double sg = sigmoid(n.m_hat[kj]);
                dw_hat[kj] += dw_eff * (1.0 - th * th) * sg;
                dm_hat[kj] += dw_eff * th * sg * (1.0 - sg);
                dg[kj] += dgx * c.input[j];
                const double sign = (c.input[j] > 0.0) ? 1.0 : (c.input[j] < 0.0 ? -1.0 : 0.0);
                dx[j] += da * c.w_eff[kj] + dgx * n.g[kj] +
                         ds * c.w_eff[kj] * sign / (std::abs(c.input[j]) + n.eps);
            }
        }
        return dx;
    }

    std::size_t input_dim_ = 0;
    std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Initialization and topology builders
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.0;
    std::size_t batch_size = 16;       // SGD minibatch
    std::size_t max_epochs_per_call = 1;
    double max_grad_norm = 10.0;       // global-norm clip; <= 0 disables
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must not be negative");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    }
};

inline DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    DenseLayer d;
    d.in = in;
    d.out = out;
    d.act = act;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    d.w.resize(in * out);
    for (auto& v : d.w) v = u(rng);
    d.b.assign(out, 0.0);
    return d;
}

inline NaluLayer make_nalu(std::size_t in, std::size_t out, Rng& rng, double eps = 1e-7) {
    NaluLayer n;
    n.in = in;
    n.out = out;
    n.eps = eps;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    n.w_hat.resize(in * out);
    n.m_hat.resize(in * out);
    n.g.resize(in * out);
    for (auto& v : n.w_hat) v = u(rng);
    for (auto& v : n.m_hat) v = u(rng);
    for (auto& v : n.g) v = u(rng);
    return n;
}

/// Default leaf learner: three dense ReLU layers, a NALU, then two dense
/// layers ending in a linear scalar output.
inline Network make_default_network(std::size_t input_dim, std::uint64_t seed,
                                    std::size_t dense_width = 32, std::size_t nalu_width = 16) {
    Rng rng(seed);
    std::vector<Layer> layers;
    layers.emplace_back(make_dense(input_dim, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, dense_width, Activation::relu, rng));
    layers.emplace_back(make_nalu(dense_width, nalu_width, rng));
    layers.emplace_back(make_dense(nalu_width, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, 1, Activation::identity, rng));
    return Network(input_dim, std::move(layers));
}

/// ReLU-only control with the same layer count and (as close as integer
/// widths allow) the same parameter count as the default topology; the NALU
/// slot becomes a dense layer.
inline Network make_relu_baseline(std::size_t input_dim, std::uint64_t seed,
                                  std::size_t dense_width = 32, std::size_t nalu_width = 16) {
    const std::size_t nalu_params = 3 * dense_width * nalu_width + nalu_width * dense_width +
                                    dense_width;  // NALU blobs + following dense layer
    // Replacement width w costs (dense_width*w + w) + (w*dense_width + dense_width).
    std::size_t best_w = 1;
    std::size_t best_diff = std::numeric_limits<std::size_t>::max();
    for (std::size_t w = 1; w <= 4 * dense_width; ++w) {
        const std::size_t cost = dense_width * w + w + w * dense_width + dense_width;
        const std::size_t diff = cost > nalu_params ? cost - nalu_params : nalu_params - cost;
        if (diff < best_diff) {
            best_diff = diff;
            best_w = w;
        }
    }
    Rng rng(seed);
    std::vector<Layer> layers;
    layers.emplace_back(make_dense(input_dim, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, best_w, Activation::relu, rng));
    layers.emplace_back(make_dense(best_w, dense_width, Activation::relu, rng));
    layers.emplace_back(make_dense(dense_width, 1, Activation::identity, rng));
    return Network(input_dim, std::move(layers));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// SGD with optional momentum and global-norm gradient clipping. Velocity
/// persists across calls, so each network keeps its own optimizer.
class SgdOptimizer {
  public:
    SgdOptimizer() = default;
    explicit SgdOptimizer(const Network& net) : velocity_(net.zero_gradients()) {}

    void step(Network& net, const GradientSet& grads, const TrainConfig& cfg) {
        if (velocity_.layers.empty()) velocity_ = net.zero_gradients();
        double norm_sq = 0.0;
        for (const auto& layer : grads.layers) {
            for (const auto& blob : layer) {
                for (double v : blob) norm_sq += v * v;
            }
        }
        double scale = 1.0;
        if (cfg.max_grad_norm > 0.0 && norm_sq > cfg.max_grad_norm * cfg.max_grad_norm) {
            scale = cfg.max_grad_norm / std::sqrt(norm_sq);
        }
        for (std::size_t li = 0; li < grads.layers.size(); ++li) {
            auto blobs = parameter_blobs(net.layers()[li]);
            for (std::size_t bi = 0; bi < blobs.size(); ++bi) {
                auto& vel = velocity_.layers[li][bi];
                auto& param = *blobs[bi];
                const auto& g = grads.layers[li][bi];
                for (std::size_t i = 0; i < param.size(); ++i) {
                    vel[i] = cfg.momentum * vel[i] + scale * g[i];
                    param[i] -= cfg.learning_rate * vel[i];
                }
            }
        }
    }

  private:
    GradientSet velocity_;
};

/// Mean squared error over a labelled set.
inline double loss(const Network& net, std::span<const std::vector<double>> xs,
                   std::span<const double> ts) {
    if (xs.empty()) throw std::invalid_argument("loss over empty dataset");
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = net.forward(xs[i]) - ts[i];
        acc += d * d;
    }
    return acc / static_cast<double>(xs.size());
}

struct TrainResult {
    double loss = 0.0;           // over the whole batch, after the updates
    std::int64_t updates = 0;    // minibatch SGD steps taken
};

/// Runs max_epochs_per_call shuffled passes over the batch in minibatches,
/// one SGD step per minibatch on the mean loss. learning_rate 0 is honored
/// as "evaluate only".
inline TrainResult train_batch(Network& net, SgdOptimizer& opt,
                               std::span<const std::vector<double>> xs, std::span<const double> ts,
                               const TrainConfig& cfg, Rng& rng) {
    if (xs.empty()) throw std::invalid_argument("train_batch on empty batch");
    const std::size_t n = xs.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    TrainResult result;
    NetworkCache cache;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs_per_call; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            GradientSet grads = net.zero_gradients();
            for (std::size_t i = start; i < stop; ++i) {
                net.forward(xs[idx[i]], &cache);
                GradientSet sample = net.backward(cache, ts[idx[i]]);
                for (std::size_t li = 0; li < grads.layers.size(); ++li) {
                    for (std::size_t bi = 0; bi < grads.layers[li].size(); ++bi) {
                        auto& acc = grads.layers[li][bi];
                        const auto& src = sample.layers[li][bi];
                        for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += src[p];
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (auto& layer : grads.layers) {
                for (auto& blob : layer) {
                    for (auto& v : blob) v *= inv;
                }
            }
            opt.step(net, grads, cfg);
            ++result.updates;
        }
    }
    result.loss = loss(net, xs, ts);
    return result;
}

}  // namespace dnt
