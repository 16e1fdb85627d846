#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsl/data.hpp"
#include "rsl/threading.hpp"
#include "rsl/train.hpp"

namespace rsl {

/// ReLU MLP mapping context features to a Cholesky shape: the final layer
/// emits d(d+1)/2 values that fill the lower triangle row-wise, diagonal
/// positions pass through exp() for positivity, and the matrix is trace
/// normalized, so every forward pass yields a valid shape.
struct MlpEncoder {
    int dim = 0;                  // d; output width is d(d+1)/2
    std::vector<int> widths;      // [input, hidden..., d(d+1)/2]
    std::vector<Matrix> weights;  // weights[l]: widths[l+1] x widths[l]
    std::vector<Vector> biases;
    double diag_floor = kDefaultDiagFloor;

    int num_layers() const { return static_cast<int>(weights.size()); }

    long num_params() const {
        long n = 0;
        for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    /// He-initialized hidden layers, small final layer. When `init_shape` is
    /// given, the final bias is set to its vectorization (log on the diagonal)
    /// so the encoder starts out reproducing that static shape.
    static MlpEncoder create(int input_dim, const std::vector<int>& hidden, int d,
                             std::uint64_t seed, const CholeskyShape* init_shape = nullptr) {
        MlpEncoder enc;
        enc.dim = d;
        enc.widths.push_back(input_dim);
        for (int h : hidden) enc.widths.push_back(h);
        enc.widths.push_back(d * (d + 1) / 2);

        StreamRng rng(seed, "encoder-init");
        for (size_t l = 0; l + 1 < enc.widths.size(); ++l) {
            const int fan_in = enc.widths[l];
            const int fan_out = enc.widths[l + 1];
            const bool last = l + 2 == enc.widths.size();
            const double scale = last ? 1e-3 : std::sqrt(2.0 / fan_in);
            Matrix w(fan_out, fan_in);
            for (int i = 0; i < fan_out; ++i)
                for (int j = 0; j < fan_in; ++j) w(i, j) = scale * rng.normal();
            enc.weights.push_back(std::move(w));
            enc.biases.push_back(Vector::Zero(fan_out));
        }
        if (init_shape) {
            if (init_shape->dim != d) throw Error("MlpEncoder: init shape dimension mismatch");
            Vector& b = enc.biases.back();
            int k = 0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j <= i; ++j, ++k)
                    b[k] = (i == j) ? std::log(init_shape->entries(i, i))
                                    : init_shape->entries(i, j);
        }
        return enc;
    }
};

/// Intermediate activations kept for the backward pass.
struct EncoderCache {
    std::vector<Vector> inputs;  // inputs[l]: activation entering layer l
    std::vector<Vector> pre;     // pre[l]: W_l inputs[l] + b_l
    Matrix l_raw;                // lower triangle before trace normalization
    double trace_gram = 0.0;
    double scale = 0.0;
};

inline CholeskyShape mlp_forward(const MlpEncoder& enc, const Context& ctx,
                                 EncoderCache* cache = nullptr) {
    Vector a = ctx.feature_vector();
    if (a.size() != enc.widths.front()) throw Error("mlp_forward: feature width mismatch");
    EncoderCache local;
    EncoderCache& cc = cache ? *cache : local;
    cc.inputs.clear();
    cc.pre.clear();
    for (int l = 0; l < enc.num_layers(); ++l) {
        cc.inputs.push_back(a);
        Vector z = enc.weights[l] * a + enc.biases[l];
        cc.pre.push_back(z);
        if (l + 1 < enc.num_layers())
            a = z.cwiseMax(0.0);
        else
            a = z;
    }

    const int d = enc.dim;
    Matrix lraw = Matrix::Zero(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j, ++k) lraw(i, j) = (i == j) ? std::exp(a[k]) : a[k];
    const double trace = lraw.squaredNorm();
    const double scale = std::sqrt(static_cast<double>(d) / trace);
    cc.l_raw = lraw;
    cc.trace_gram = trace;
    cc.scale = scale;
    return CholeskyShape(d, scale * lraw, enc.diag_floor);
}

/// Parameter-space gradient, same shapes as the encoder's weights/biases.
struct EncoderGradient {
    std::vector<Matrix> d_weights;
    std::vector<Vector> d_biases;

    static EncoderGradient zero(const MlpEncoder& enc) {
        EncoderGradient g;
        for (int l = 0; l < enc.num_layers(); ++l) {
            g.d_weights.push_back(Matrix::Zero(enc.weights[l].rows(), enc.weights[l].cols()));
            g.d_biases.push_back(Vector::Zero(enc.biases[l].size()));
        }
        return g;
    }

    void accumulate(const EncoderGradient& other, double factor = 1.0) {
        for (size_t l = 0; l < d_weights.size(); ++l) {
            d_weights[l] += factor * other.d_weights[l];
            d_biases[l] += factor * other.d_biases[l];
        }
    }

    void scale(double f) {
        for (size_t l = 0; l < d_weights.size(); ++l) {
            d_weights[l] *= f;
            d_biases[l] *= f;
        }
    }

    double norm() const {
        double sq = 0.0;
        for (size_t l = 0; l < d_weights.size(); ++l)
            sq += d_weights[l].squaredNorm() + d_biases[l].squaredNorm();
        return std::sqrt(sq);
    }
};

/// Gradient of <G, L_phi(ctx)> with respect to the encoder parameters, through
/// the trace normalization and the exp-diagonal.
inline EncoderGradient mlp_backward(const MlpEncoder& enc, const EncoderCache& cc,
                                    const ShapeGradient& upstream) {
    const int d = enc.dim;
    const Matrix& lraw = cc.l_raw;
    const double c = cc.scale;
    const double trace = cc.trace_gram;

    // d<G, c(Lraw) * Lraw> / dLraw = c G - (c <G, Lraw> / trace) Lraw.
    const double inner = (upstream.entries.array() * lraw.array()).sum();
    Matrix g_lraw = c * upstream.entries - (c * inner / trace) * lraw;

    Vector delta(d * (d + 1) / 2);
    int k = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j, ++k)
            delta[k] = (i == j) ? g_lraw(i, j) * lraw(i, j) : g_lraw(i, j);

    EncoderGradient grad = EncoderGradient::zero(enc);
    for (int l = enc.num_layers() - 1; l >= 0; --l) {
        if (l + 1 < enc.num_layers()) {
            // Back through the ReLU of layer l.
            for (long i = 0; i < delta.size(); ++i)
                if (cc.pre[l][i] <= 0.0) delta[i] = 0.0;
        }
        grad.d_weights[l] = delta * cc.inputs[l].transpose();
        grad.d_biases[l] = delta;
        if (l > 0) delta = enc.weights[l].transpose() * delta;
    }
    return grad;
}

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<Vector> m_b, v_b;
    long t = 0;

    static AdamState zero(const MlpEncoder& enc) {
        AdamState s;
        for (int l = 0; l < enc.num_layers(); ++l) {
            s.m_w.push_back(Matrix::Zero(enc.weights[l].rows(), enc.weights[l].cols()));
            s.v_w.push_back(Matrix::Zero(enc.weights[l].rows(), enc.weights[l].cols()));
            s.m_b.push_back(Vector::Zero(enc.biases[l].size()));
            s.v_b.push_back(Vector::Zero(enc.biases[l].size()));
        }
        return s;
    }
};

inline void adam_step(MlpEncoder& enc, AdamState& st, const EncoderGradient& g, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (int l = 0; l < enc.num_layers(); ++l) {
        st.m_w[l] = beta1 * st.m_w[l] + (1.0 - beta1) * g.d_weights[l];
        st.v_w[l] = beta2 * st.v_w[l] + (1.0 - beta2) * g.d_weights[l].cwiseAbs2();
        st.m_b[l] = beta1 * st.m_b[l] + (1.0 - beta1) * g.d_biases[l];
        st.v_b[l] = beta2 * st.v_b[l] + (1.0 - beta2) * g.d_biases[l].cwiseAbs2();
        enc.weights[l] -=
            (lr * (st.m_w[l] / bc1).array() / ((st.v_w[l] / bc2).array().sqrt() + eps)).matrix();
        enc.biases[l] -=
            (lr * (st.m_b[l] / bc1).array() / ((st.v_b[l] / bc2).array().sqrt() + eps)).matrix();
    }
}

/// Hyperparameters for contextual encoder training.
struct ContextualConfig {
    double tau = 0.95;
    double eps = 0.5;
    int batch_size = 8;
    double learning_rate = 3e-4;
    double clip_norm = 1.0;  // max norm on encoder parameter gradients
    int max_iterations = 2000;
    int patience = 400;
    int trailing_window = 100;
    std::vector<int> hidden = {128, 64};
    std::uint64_t seed = 0;
    Kernel kernel = Kernel::Gaussian;
    bool coupled = false;
    int log_every = 50;

    void validate() const {
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("contextual: tau outside (0,1)");
        if (!(eps > 0.0)) throw ConfigError("contextual: eps must be positive");
        if (batch_size < 1) throw ConfigError("contextual: batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("contextual: learning_rate must be positive");
        if (!(clip_norm > 0.0)) throw ConfigError("contextual: clip_norm must be positive");
        if (max_iterations < 1) throw ConfigError("contextual: max_iterations must be >= 1");
    }
};

/// One mini-batch iteration of contextual training: shared smoothed radius and
/// quantile sensitivity from the tuning split (each tuning sample scored under
/// its own encoder shape), per-sample robust solves and task gradients, Adam
/// step on the averaged <g_i, L_i> contraction. Infeasible samples are skipped;
/// a batch that is more than half infeasible aborts training.
inline std::pair<MlpEncoder, TrainTrace> train_contextual(MlpEncoder enc, const ZonalSystem& sys,
                                                          const UncertaintyDataset& ds,
                                                          const ContextualConfig& cfg,
                                                          const TransferLimits* tl = nullptr,
                                                          int threads = 1) {
    cfg.validate();
    ds.validate();
    auto [train_begin, train_end] = ds.range(Split::Train);
    auto [tune_begin, tune_end] = ds.range(Split::Tune);
    const long n_train = train_end - train_begin;
    const long n_tune = tune_end - tune_begin;

    AdamState adam = AdamState::zero(enc);
    TrainTrace trace;
    double best_window = kInf;
    int best_iteration = -1;
    std::vector<double> window;

    std::vector<CholeskyShape> tune_shapes(n_tune, CholeskyShape::identity(enc.dim));
    Vector tune_scores(n_tune);

    std::vector<char> tune_failed(n_tune, 0);
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // Phase A: mixture score distribution over the tuning split.
        std::fill(tune_failed.begin(), tune_failed.end(), 0);
        parallel_for(n_tune, threads, [&](long i) {
            try {
                tune_shapes[i] = mlp_forward(enc, ds.contexts[tune_begin + i]);
                tune_scores[i] = gauge(tune_shapes[i], ds.u.row(tune_begin + i).transpose());
            } catch (const Error&) {
                tune_failed[i] = 1;
            }
        });
        for (long i = 0; i < n_tune; ++i)
            if (tune_failed[i])
                throw InfeasibleAtShape("train_contextual: degenerate encoder shape on tune split");
        SmoothedQuantile sq = smoothed_quantile(tune_scores, cfg.tau, cfg.eps, cfg.kernel);
        const double rho = sq.rho_eps;
        if (!(rho > 0.0)) throw InfeasibleAtShape("train_contextual: smoothed radius not positive");

        Matrix sens_acc = Matrix::Zero(enc.dim, enc.dim);
        double sens_total = 0.0;
        for (long i = 0; i < n_tune; ++i) {
            Vector u = ds.u.row(tune_begin + i).transpose();
            if (u.norm() == 0.0 || sq.weights[i] == 0.0) continue;
            sens_acc += sq.weights[i] * grad_gauge_L(tune_shapes[i], u).entries;
            sens_total += sq.weights[i];
        }
        if (sens_total <= 1e-300)
            throw DegenerateWeights("train_contextual: quantile weights underflowed");
        const Matrix shared_sens = sens_acc / sens_total;

        // Phase B: per-sample robust solves on a seeded mini-batch.
        StreamRng batch_rng(cfg.seed, "batch", iter);
        std::vector<long> batch(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b)
            batch[b] = train_begin + static_cast<long>(batch_rng.uniform_index(n_train));

        std::vector<EncoderGradient> sample_grads(cfg.batch_size);
        std::vector<double> sample_obj(cfg.batch_size, 0.0);
        std::vector<char> ok(cfg.batch_size, 0);
        parallel_for(cfg.batch_size, threads, [&](long b) {
            EncoderCache cache;
            try {
                CholeskyShape lb = mlp_forward(enc, ds.contexts[batch[b]], &cache);
                lb.validate();
                ScedSolution sol = solve_sced(sys, lb, rho, tl);
                if (sol.status != LpStatus::Optimal) return;
                ShapeGradient task(envelope_grad_L(sys, sol, lb, rho).entries +
                                   envelope_grad_rho(sys, sol, lb) * shared_sens);
                sample_grads[b] = mlp_backward(enc, cache, task);
                sample_obj[b] = sol.objective;
                ok[b] = 1;
            } catch (const Error&) {
                // skipped sample, counted below
            }
        });

        int used = 0;
        EncoderGradient total = EncoderGradient::zero(enc);
        double mean_obj = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (!ok[b]) continue;
            total.accumulate(sample_grads[b]);
            mean_obj += sample_obj[b];
            ++used;
        }
        if (used * 2 < cfg.batch_size)
            throw InfeasibleAtShape("train_contextual: over half the batch infeasible at iteration " +
                                    std::to_string(iter));
        total.scale(1.0 / used);
        mean_obj /= used;

        // Phase C: clipped Adam step on the encoder parameters.
        const double pre = total.norm();
        if (pre > cfg.clip_norm) total.scale(cfg.clip_norm / pre);
        const double post = total.norm();
        adam_step(enc, adam, total, cfg.learning_rate);

        trace.push_back({iter, rho, mean_obj, pre, post, false});

        // Early stopping on the trailing mean of the batch objective.
        window.push_back(mean_obj);
        if (static_cast<int>(window.size()) > cfg.trailing_window)
            window.erase(window.begin());
        const double wmean =
            std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
        if (wmean < best_window - 1e-9) {
            best_window = wmean;
            best_iteration = iter;
        } else if (iter - best_iteration >= cfg.patience) {
            break;
        }
    }
    return {std::move(enc), std::move(trace)};
}

// ---- encoder persistence ----------------------------------------------------

inline void to_json(nlohmann::json& j, const MlpEncoder& enc) {
    std::vector<std::vector<double>> ws, bs;
    for (int l = 0; l < enc.num_layers(); ++l) {
        std::vector<double> w(enc.weights[l].size());
        for (long i = 0; i < enc.weights[l].rows(); ++i)
            for (long jj = 0; jj < enc.weights[l].cols(); ++jj)
                w[i * enc.weights[l].cols() + jj] = enc.weights[l](i, jj);  // row-major
        ws.push_back(std::move(w));
        bs.emplace_back(enc.biases[l].data(), enc.biases[l].data() + enc.biases[l].size());
    }
    j = nlohmann::json{{"dim", enc.dim}, {"widths", enc.widths}, {"weights", ws}, {"biases", bs}};
}

inline void from_json(const nlohmann::json& j, MlpEncoder& enc) {
    enc.dim = j.at("dim").get<int>();
    enc.widths = j.at("widths").get<std::vector<int>>();
    enc.weights.clear();
    enc.biases.clear();
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() + 1 != enc.widths.size() || bs.size() != ws.size())
        throw ConfigError("encoder JSON: layer count mismatch");
    for (size_t l = 0; l + 1 < enc.widths.size(); ++l) {
        const int rows = enc.widths[l + 1], cols = enc.widths[l];
        const auto wflat = ws.at(l).get<std::vector<double>>();
        if (static_cast<int>(wflat.size()) != rows * cols)
            throw ConfigError("encoder JSON: weight size mismatch");
        Matrix w(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int jj = 0; jj < cols; ++jj) w(i, jj) = wflat[i * cols + jj];
        enc.weights.push_back(std::move(w));
        const auto bflat = bs.at(l).get<std::vector<double>>();
        if (static_cast<int>(bflat.size()) != rows)
            throw ConfigError("encoder JSON: bias size mismatch");
        enc.biases.push_back(Eigen::Map<const Vector>(bflat.data(), rows));
    }
    enc.diag_floor = kDefaultDiagFloor;
}

inline void save_encoder(const MlpEncoder& enc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_encoder: cannot open " + path);
    nlohmann::json j = enc;
    out << j.dump(2) << "\n";
}

inline MlpEncoder load_encoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_encoder: cannot open " + path);
    return nlohmann::json::parse(in).get<MlpEncoder>();
}

}  // namespace rsl
