#include "spikerep/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace spikerep {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
}

void init_linear(std::map<std::string, Eigen::MatrixXd>& params,
                 const std::string& name, int in, int out, std::uint64_t seed,
                 bool with_bias = true) {
    Rng rng = Rng(seed).substream(name);
    const double stddev = std::sqrt(2.0 / (in + out));
    params[name + ".w"] = gaussian_matrix(in, out, stddev, rng);
    if (with_bias) params[name + ".b"] = Eigen::MatrixXd::Zero(1, out);
}

void init_layer_norm(std::map<std::string, Eigen::MatrixXd>& params,
                     const std::string& name, int width) {
    params[name + ".g"] = Eigen::MatrixXd::Ones(1, width);
    params[name + ".b"] = Eigen::MatrixXd::Zero(1, width);
}

// Lazily registers parameter tensors as tape inputs; `trainable` selects
// whether gradients flow into them.
struct Graph {
    Tape& tape;
    const std::map<std::string, Eigen::MatrixXd>& params;
    bool trainable;
    std::map<std::string, Tape::Ref> refs;

    Tape::Ref p(const std::string& name) {
        const auto it = refs.find(name);
        if (it != refs.end()) return it->second;
        return refs[name] = tape.input(params.at(name), trainable);
    }
};

Tape::Ref linear(Graph& g, Tape::Ref x, const std::string& name) {
    return g.tape.add_rowvec(g.tape.matmul(x, g.p(name + ".w")),
                             g.p(name + ".b"));
}

Tape::Ref layer_norm_affine(Graph& g, Tape::Ref x, const std::string& name) {
    Tape::Ref y = g.tape.layer_norm(x);
    y = g.tape.mul_rowvec(y, g.p(name + ".g"));
    return g.tape.add_rowvec(y, g.p(name + ".b"));
}

// Pre-norm transformer encoder + mean-pool + linear head over (B*T) x E
// tokens, under the parameter prefix ("enc." or "target.enc.").
Tape::Ref encoder_forward(Graph& g, Tape::Ref tokens, const std::string& pre,
                          const ModelConfig& cfg, int batch) {
    Tape& t = g.tape;
    Tape::Ref x = tokens;
    if (cfg.positional)
        x = t.add_timevec(x, g.p(pre + "pos"), batch, cfg.snippet_t);
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string lp = pre + "l" + std::to_string(i) + ".";
        const Tape::Ref normed = layer_norm_affine(g, x, lp + "ln1");
        const Tape::Ref q = t.matmul(normed, g.p(lp + "wq.w"));
        const Tape::Ref k = t.matmul(normed, g.p(lp + "wk.w"));
        const Tape::Ref v = t.matmul(normed, g.p(lp + "wv.w"));
        const Tape::Ref att =
            t.attention(q, k, v, batch, cfg.snippet_t, cfg.heads);
        x = t.add(x, t.matmul(att, g.p(lp + "wo.w")));

        const Tape::Ref normed2 = layer_norm_affine(g, x, lp + "ln2");
        const Tape::Ref hidden = t.silu(linear(g, normed2, lp + "ff1"));
        x = t.add(x, linear(g, hidden, lp + "ff2"));
    }
    x = layer_norm_affine(g, x, pre + "out_ln");
    const Tape::Ref pooled = t.mean_pool(x, batch, cfg.snippet_t);
    return linear(g, pooled, pre + "head");
}

Tape::Ref head_forward(Graph& g, Tape::Ref x, const std::string& pre) {
    return linear(g, g.tape.silu(linear(g, x, pre + "1")), pre + "2");
}

Tape::Ref dae_forward(Graph& g, Tape::Ref tokens) {
    Tape::Ref h = g.tape.silu(linear(g, tokens, "dae.enc1"));
    h = g.tape.silu(linear(g, h, "dae.enc2"));
    return linear(g, h, "dae.dec");
}

Eigen::MatrixXd batch_patches(const std::vector<Eigen::MatrixXd>& views,
                              int kernel) {
    const int T = static_cast<int>(views.front().rows());
    const int pc = static_cast<int>(views.front().cols()) * kernel;
    Eigen::MatrixXd patches(static_cast<Eigen::Index>(views.size()) * T, pc);
    for (std::size_t i = 0; i < views.size(); ++i)
        patches.middleRows(i * T, T) = unfold_snippet(views[i], kernel);
    return patches;
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void ModelConfig::validate() const {
    if (rep_dim < 1) throw std::invalid_argument("model: rep_dim must be >= 1");
    if (tau <= 0.0) throw std::invalid_argument("model: tau must be positive");
    if (momentum < 0.0 || momentum > 1.0)
        throw std::invalid_argument("model: momentum must be in [0, 1]");
    if (alpha < 0.0) throw std::invalid_argument("model: alpha must be >= 0");
    if (conv_dim < 1 || layers < 0 || heads < 1 || ff_dim < 1 || proj_dim < 1 ||
        pred_hidden < 1 || dae_hidden < 1)
        throw std::invalid_argument("model: dimensions must be positive");
    if (conv_dim % heads != 0)
        throw std::invalid_argument("model: heads must divide conv_dim");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
        throw std::invalid_argument("model: conv kernel must be odd");
    if (snippet_t < 1 || snippet_c < 1)
        throw std::invalid_argument("model: snippet dims must be positive");
}

ModelConfig ModelConfig::from(const PipelineConfig& pc) {
    ModelConfig cfg;
    cfg.conv_dim = pc.model_conv_dim;
    cfg.layers = pc.model_layers;
    cfg.heads = pc.model_heads;
    cfg.ff_dim = pc.model_ff_dim;
    cfg.rep_dim = pc.model_rep_dim;
    cfg.proj_dim = pc.model_proj_dim;
    cfg.pred_hidden = pc.model_pred_hidden;
    cfg.dae_hidden = pc.model_dae_hidden;
    cfg.tau = pc.model_tau;
    cfg.momentum = pc.model_momentum;
    cfg.alpha = pc.model_alpha;
    cfg.positional = pc.model_positional;
    cfg.snippet_t = pc.snippet_t;
    cfg.snippet_c = pc.snippet_c;
    cfg.validate();
    return cfg;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (warmup_epochs >= epochs)
        throw std::invalid_argument("train: warmup must end before epochs");
    if (batch_size < 2) throw std::invalid_argument("train: batch must be >= 2");
    if (peak_lr <= 0.0) throw std::invalid_argument("train: peak_lr <= 0");
    if (weight_decay < 0.0) throw std::invalid_argument("train: negative decay");
    if (steps_per_epoch < 1)
        throw std::invalid_argument("train: steps_per_epoch must be >= 1");
}

TrainConfig TrainConfig::from(const PipelineConfig& pc, int n_snippets) {
    TrainConfig tc;
    tc.epochs = pc.train_epochs;
    tc.batch_size = std::max(2, std::min(pc.train_batch, n_snippets));
    tc.peak_lr = pc.train_peak_lr;
    tc.warmup_epochs = pc.train_warmup_epochs;
    tc.weight_decay = pc.train_weight_decay;
    tc.steps_per_epoch = std::max(1, n_snippets / tc.batch_size);
    tc.seed = pc.seed;
    tc.validate();
    return tc;
}

bool ModelState::is_target(const std::string& name) const {
    return name.rfind("target.", 0) == 0;
}

void ModelState::check_finite() const {
    for (const auto& [name, tensor] : params)
        if (!tensor.allFinite())
            throw std::runtime_error("model: non-finite parameter " + name);
}

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState state;
    state.cfg = cfg;
    state.seed = seed;
    auto& p = state.params;

    init_linear(p, "conv", cfg.snippet_c * cfg.conv_kernel, cfg.conv_dim, seed,
                /*with_bias=*/false);

    Rng pos_rng = Rng(seed).substream("enc.pos");
    p["enc.pos"] = gaussian_matrix(cfg.snippet_t, cfg.conv_dim, 0.02, pos_rng);
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string lp = "enc.l" + std::to_string(i) + ".";
        init_layer_norm(p, lp + "ln1", cfg.conv_dim);
        init_layer_norm(p, lp + "ln2", cfg.conv_dim);
        for (const char* w : {"wq", "wk", "wv", "wo"})
            init_linear(p, lp + w, cfg.conv_dim, cfg.conv_dim, seed,
                        /*with_bias=*/false);
        init_linear(p, lp + "ff1", cfg.conv_dim, cfg.ff_dim, seed);
        init_linear(p, lp + "ff2", cfg.ff_dim, cfg.conv_dim, seed);
    }
    init_layer_norm(p, "enc.out_ln", cfg.conv_dim);
    init_linear(p, "enc.head", cfg.conv_dim, cfg.rep_dim, seed);

    init_linear(p, "proj.1", cfg.rep_dim, cfg.proj_dim, seed);
    init_linear(p, "proj.2", cfg.proj_dim, cfg.proj_dim, seed);
    init_linear(p, "pred.1", cfg.proj_dim, cfg.pred_hidden, seed);
    init_linear(p, "pred.2", cfg.pred_hidden, cfg.proj_dim, seed);

    init_linear(p, "dae.enc1", cfg.conv_dim, cfg.dae_hidden, seed);
    init_linear(p, "dae.enc2", cfg.dae_hidden, cfg.dae_hidden, seed);
    // zero-initialized decoder: early training is contrastive-dominated
    p["dae.dec.w"] = Eigen::MatrixXd::Zero(cfg.dae_hidden, cfg.conv_dim);
    p["dae.dec.b"] = Eigen::MatrixXd::Zero(1, cfg.conv_dim);

    // target trees start as exact copies of the online trees
    std::vector<std::pair<std::string, Eigen::MatrixXd>> targets;
    for (const auto& [name, tensor] : p)
        if (name.rfind("enc.", 0) == 0 || name.rfind("proj.", 0) == 0)
            targets.emplace_back("target." + name, tensor);
    for (auto& [name, tensor] : targets) p[name] = std::move(tensor);

    return state;
}

Eigen::MatrixXd unfold_snippet(const Eigen::MatrixXd& s, int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("unfold: kernel must be odd and positive");
    const int T = static_cast<int>(s.rows());
    const int C = static_cast<int>(s.cols());
    const int half = kernel / 2;
    Eigen::MatrixXd patches = Eigen::MatrixXd::Zero(T, C * kernel);
    for (int offset = -half; offset <= half; ++offset) {
        const int col0 = (offset + half) * C;
        const int t_lo = std::max(0, -offset);
        const int t_hi = std::min(T, T - offset);
        if (t_hi <= t_lo) continue;  // same-padding: out-of-range stays zero
        patches.block(t_lo, col0, t_hi - t_lo, C) =
            s.middleRows(t_lo + offset, t_hi - t_lo);
    }
    return patches;
}

Eigen::MatrixXd conv_frontend(const Eigen::MatrixXd& s,
                              const ModelState& state) {
    if (s.rows() != state.cfg.snippet_t || s.cols() != state.cfg.snippet_c)
        throw std::invalid_argument("conv_frontend: snippet shape mismatch");
    return unfold_snippet(s, state.cfg.conv_kernel) * state.params.at("conv.w");
}

Eigen::MatrixXd encode(const Eigen::MatrixXd& tokens, const ModelState& state,
                       int batch) {
    if (tokens.rows() != static_cast<Eigen::Index>(batch) * state.cfg.snippet_t ||
        tokens.cols() != state.cfg.conv_dim)
        throw std::invalid_argument("encode: token shape mismatch");
    Tape tape;
    Graph g{tape, state.params, /*trainable=*/false, {}};
    const Tape::Ref rep = encoder_forward(g, tape.input(tokens), "enc.",
                                          state.cfg, batch);
    Eigen::MatrixXd out = tape.value(rep);
    if (!out.allFinite())
        throw std::runtime_error("encode: non-finite activations");
    return out;
}

Eigen::MatrixXd dae_apply(const Eigen::MatrixXd& tokens,
                          const ModelState& state) {
    if (tokens.cols() != state.cfg.conv_dim)
        throw std::invalid_argument("dae_apply: token width mismatch");
    Tape tape;
    Graph g{tape, state.params, /*trainable=*/false, {}};
    return tape.value(dae_forward(g, tape.input(tokens)));
}

double info_nce_loss(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                     double tau) {
    for (int i = 0; i < q.rows(); ++i)
        if (std::abs(q.row(i).norm() - 1.0) > 1e-6 ||
            std::abs(k.row(i).norm() - 1.0) > 1e-6)
            throw std::invalid_argument("info_nce: rows must be unit norm");
    Tape tape;
    return tape.value(tape.info_nce(tape.input(q), k, tau))(0, 0);
}

double denoise_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& v_hat) {
    if (v.rows() != v_hat.rows() || v.cols() != v_hat.cols())
        throw std::invalid_argument("denoise_loss: shape mismatch");
    return (v - v_hat).squaredNorm() / static_cast<double>(v.size());
}

double lr_at(std::int64_t step, const TrainConfig& tc) {
    if (step < 0) throw std::invalid_argument("lr_at: negative step");
    const double warm = static_cast<double>(tc.warmup_epochs) * tc.steps_per_epoch;
    const double total = static_cast<double>(tc.epochs) * tc.steps_per_epoch;
    const double s = static_cast<double>(step);
    if (s < warm) return tc.peak_lr * (warm == 0.0 ? 1.0 : s / warm);
    const double progress = std::min(1.0, (s - warm) / (total - warm));
    return tc.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

KeyPair target_keys(const ModelState& state,
                    const std::vector<Eigen::MatrixXd>& view1,
                    const std::vector<Eigen::MatrixXd>& view2) {
    const int B = static_cast<int>(view1.size());
    const ModelConfig& cfg = state.cfg;
    Tape tape;
    Graph g{tape, state.params, /*trainable=*/false, {}};
    const auto keys_of = [&](const std::vector<Eigen::MatrixXd>& views) {
        const Tape::Ref tokens = tape.matmul(
            tape.input(batch_patches(views, cfg.conv_kernel)), g.p("conv.w"));
        const Tape::Ref rep = encoder_forward(g, tokens, "target.enc.", cfg, B);
        return tape.value(
            tape.l2_normalize_rows(head_forward(g, rep, "target.proj.")));
    };
    return {keys_of(view1), keys_of(view2)};
}

LossGrads loss_and_gradients(const ModelState& state,
                             const std::vector<Eigen::MatrixXd>& view1,
                             const std::vector<Eigen::MatrixXd>& view2,
                             const std::vector<Eigen::MatrixXd>& clean) {
    return loss_and_gradients(state, view1, view2, clean,
                              target_keys(state, view1, view2));
}

LossGrads loss_and_gradients(const ModelState& state,
                             const std::vector<Eigen::MatrixXd>& view1,
                             const std::vector<Eigen::MatrixXd>& view2,
                             const std::vector<Eigen::MatrixXd>& clean,
                             const KeyPair& keys) {
    const int B = static_cast<int>(view1.size());
    if (B < 2) throw std::invalid_argument("loss: batch size must be >= 2");
    if (view2.size() != view1.size() || clean.size() != view1.size())
        throw std::invalid_argument("loss: view list length mismatch");
    const ModelConfig& cfg = state.cfg;
    const int T = cfg.snippet_t;
    const Eigen::MatrixXd& key1 = keys.key1;
    const Eigen::MatrixXd& key2 = keys.key2;

    const Eigen::MatrixXd patches1 = batch_patches(view1, cfg.conv_kernel);
    const Eigen::MatrixXd patches2 = batch_patches(view2, cfg.conv_kernel);
    const Eigen::MatrixXd patches_clean = batch_patches(clean, cfg.conv_kernel);

    Tape tape;
    Graph g{tape, state.params, /*trainable=*/true, {}};
    const Tape::Ref conv_w = g.p("conv.w");
    const Tape::Ref tokens1 = tape.matmul(tape.input(patches1), conv_w);
    const Tape::Ref tokens2 = tape.matmul(tape.input(patches2), conv_w);
    const auto query_of = [&](Tape::Ref tokens) {
        const Tape::Ref rep = encoder_forward(g, tokens, "enc.", cfg, B);
        const Tape::Ref projected = head_forward(g, rep, "proj.");
        return tape.l2_normalize_rows(head_forward(g, projected, "pred."));
    };
    const Tape::Ref lc1 = tape.info_nce(query_of(tokens1), key2, cfg.tau);
    const Tape::Ref lc2 = tape.info_nce(query_of(tokens2), key1, cfg.tau);
    // symmetrized mean, so chance level is ln(batch) regardless of direction
    const Tape::Ref contrastive = tape.scale(tape.add(lc1, lc2), 0.5);

    const Tape::Ref v_clean = tape.matmul(tape.input(patches_clean), conv_w);
    const Tape::Ref v_hat = dae_forward(g, tokens1);
    const Tape::Ref residual = tape.add(v_hat, tape.scale(v_clean, -1.0));
    const Tape::Ref l_dae = tape.mse(
        residual, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B) * T,
                                        cfg.conv_dim));
    const Tape::Ref total = tape.add(contrastive, tape.scale(l_dae, cfg.alpha));

    LossGrads result;
    result.contrastive = tape.value(contrastive)(0, 0);
    result.denoise = tape.value(l_dae)(0, 0);
    result.total = tape.value(total)(0, 0);
    if (!std::isfinite(result.total))
        throw std::runtime_error("loss: non-finite total loss");

    tape.backward(total);
    for (const auto& [name, ref] : g.refs) {
        if (state.is_target(name) || tape.grad(ref).size() == 0) continue;
        result.grads[name] = tape.grad(ref);
    }
    return result;
}

TrainStepResult train_step(ModelState& state,
                           const std::vector<Eigen::MatrixXd>& snippets,
                           const std::vector<int>& batch,
                           const AugmentSpec& aug, const TrainConfig& tc) {
    const int B = static_cast<int>(batch.size());
    if (B < 2) throw std::invalid_argument("train_step: batch size must be >= 2");
    const ModelConfig& cfg = state.cfg;

    Rng rng = Rng(state.seed).substream("train-step",
                                        static_cast<std::uint64_t>(state.step));
    std::vector<Eigen::MatrixXd> view1(B), view2(B), clean(B);
    for (int i = 0; i < B; ++i) {
        const ViewPair pair =
            make_view_pair(snippets[batch[i]], snippets, aug, rng);
        view1[i] = pair.view1;
        view2[i] = pair.view2;
        clean[i] = pair.clean;
    }

    LossGrads losses;
    try {
        losses = loss_and_gradients(state, view1, view2, clean);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " at step " +
                                 std::to_string(state.step));
    }

    // AdamW with decoupled weight decay on weight matrices
    const double lr = lr_at(state.step, tc);
    const double t_adam = static_cast<double>(state.step) + 1.0;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t_adam);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t_adam);
    for (const auto& [name, grad] : losses.grads) {
        Eigen::MatrixXd& param = state.params.at(name);
        auto [m_it, m_new] = state.adam_m.try_emplace(
            name, Eigen::MatrixXd::Zero(param.rows(), param.cols()));
        auto [v_it, v_new] = state.adam_v.try_emplace(
            name, Eigen::MatrixXd::Zero(param.rows(), param.cols()));
        Eigen::MatrixXd& m = m_it->second;
        Eigen::MatrixXd& v = v_it->second;
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
        v = (kAdamBeta2 * v.array() +
             (1.0 - kAdamBeta2) * grad.array().square())
                .matrix();
        if (param.rows() > 1)  // decay weights, not biases or norm gains
            param *= 1.0 - lr * tc.weight_decay;
        param.array() -=
            lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
    }

    // momentum update: f_k = m * f_k + (1 - m) * f_q
    for (auto& [name, tensor] : state.params) {
        if (!state.is_target(name)) continue;
        const Eigen::MatrixXd& online = state.params.at(name.substr(7));
        tensor = cfg.momentum * tensor + (1.0 - cfg.momentum) * online;
    }

    ++state.step;
    state.check_finite();
    return {losses.contrastive, losses.denoise, losses.total};
}

Eigen::MatrixXd embed(const std::vector<WaveformSnippet>& snippets,
                      const ModelState& state, bool use_dae) {
    const ModelConfig& cfg = state.cfg;
    const int T = cfg.snippet_t;
    const int n = static_cast<int>(snippets.size());
    Eigen::MatrixXd out(n, cfg.rep_dim);
    const int chunk = 256;
    for (int start = 0; start < n; start += chunk) {
        const int b = std::min(chunk, n - start);
        Eigen::MatrixXd tokens(static_cast<Eigen::Index>(b) * T, cfg.conv_dim);
        for (int i = 0; i < b; ++i)
            tokens.middleRows(static_cast<Eigen::Index>(i) * T, T) =
                conv_frontend(snippets[start + i].values.cast<double>(), state);
        if (use_dae) tokens = dae_apply(tokens, state);
        out.middleRows(start, b) = encode(tokens, state, b);
    }
    return out;
}

void save_model(const ModelState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);

    nlohmann::json manifest;
    manifest["format"] = "spikerep-model-v1";
    manifest["step"] = state.step;
    manifest["seed"] = state.seed;
    nlohmann::json jc;
    jc["conv_dim"] = state.cfg.conv_dim;
    jc["conv_kernel"] = state.cfg.conv_kernel;
    jc["layers"] = state.cfg.layers;
    jc["heads"] = state.cfg.heads;
    jc["ff_dim"] = state.cfg.ff_dim;
    jc["rep_dim"] = state.cfg.rep_dim;
    jc["proj_dim"] = state.cfg.proj_dim;
    jc["pred_hidden"] = state.cfg.pred_hidden;
    jc["dae_hidden"] = state.cfg.dae_hidden;
    jc["tau"] = state.cfg.tau;
    jc["momentum"] = state.cfg.momentum;
    jc["alpha"] = state.cfg.alpha;
    jc["positional"] = state.cfg.positional;
    jc["snippet_t"] = state.cfg.snippet_t;
    jc["snippet_c"] = state.cfg.snippet_c;
    manifest["config"] = jc;

    const auto dump_section =
        [&](const char* label,
            const std::map<std::string, Eigen::MatrixXd>& tensors) {
            nlohmann::json list = nlohmann::json::array();
            for (const auto& [name, tensor] : tensors) {
                nlohmann::json entry;
                entry["name"] = name;
                entry["rows"] = tensor.rows();
                entry["cols"] = tensor.cols();
                list.push_back(entry);
                write_u64(out, static_cast<std::uint64_t>(tensor.size()));
                out.write(reinterpret_cast<const char*>(tensor.data()),
                          static_cast<std::streamsize>(tensor.size() *
                                                       sizeof(double)));
            }
            manifest[label] = list;
        };
    dump_section("params", state.params);
    dump_section("adam_m", state.adam_m);
    dump_section("adam_v", state.adam_v);
    if (!out) throw std::runtime_error("save_model: write failed");
    out.close();

    std::ofstream mout(path + ".json");
    mout << manifest.dump(2) << "\n";
    if (!mout) throw std::runtime_error("save_model: manifest write failed");
}

ModelState load_model(const std::string& path) {
    std::ifstream min(path + ".json");
    if (!min) throw std::runtime_error("load_model: missing manifest for " + path);
    const nlohmann::json manifest = nlohmann::json::parse(min);
    if (manifest.at("format") != "spikerep-model-v1")
        throw std::runtime_error("load_model: unknown format");

    ModelState state;
    state.step = manifest.at("step").get<std::int64_t>();
    state.seed = manifest.at("seed").get<std::uint64_t>();
    const nlohmann::json& jc = manifest.at("config");
    state.cfg.conv_dim = jc.at("conv_dim").get<int>();
    state.cfg.conv_kernel = jc.at("conv_kernel").get<int>();
    state.cfg.layers = jc.at("layers").get<int>();
    state.cfg.heads = jc.at("heads").get<int>();
    state.cfg.ff_dim = jc.at("ff_dim").get<int>();
    state.cfg.rep_dim = jc.at("rep_dim").get<int>();
    state.cfg.proj_dim = jc.at("proj_dim").get<int>();
    state.cfg.pred_hidden = jc.at("pred_hidden").get<int>();
    state.cfg.dae_hidden = jc.at("dae_hidden").get<int>();
    state.cfg.tau = jc.at("tau").get<double>();
    state.cfg.momentum = jc.at("momentum").get<double>();
    state.cfg.alpha = jc.at("alpha").get<double>();
    state.cfg.positional = jc.at("positional").get<bool>();
    state.cfg.snippet_t = jc.at("snippet_t").get<int>();
    state.cfg.snippet_c = jc.at("snippet_c").get<int>();
    state.cfg.validate();

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    const auto read_section =
        [&](const char* label, std::map<std::string, Eigen::MatrixXd>& tensors) {
            for (const nlohmann::json& entry : manifest.at(label)) {
                const std::string name = entry.at("name").get<std::string>();
                const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
                const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
                const std::uint64_t count = read_u64(in);
                if (count != static_cast<std::uint64_t>(rows * cols))
                    throw std::runtime_error("load_model: size mismatch for " +
                                             name);
                Eigen::MatrixXd tensor(rows, cols);
                in.read(reinterpret_cast<char*>(tensor.data()),
                        static_cast<std::streamsize>(count * sizeof(double)));
                tensors[name] = std::move(tensor);
            }
        };
    read_section("params", state.params);
    read_section("adam_m", state.adam_m);
    read_section("adam_v", state.adam_v);
    if (!in) throw std::runtime_error("load_model: truncated tensor blob");
    return state;
}

}  // namespace spikerep
