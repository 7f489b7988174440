#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "spikerep/model.hpp"

using namespace spikerep;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.conv_dim = 8;
    cfg.conv_kernel = 3;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 12;
    cfg.rep_dim = 6;
    cfg.proj_dim = 8;
    cfg.pred_hidden = 8;
    cfg.dae_hidden = 10;
    cfg.snippet_t = 9;
    cfg.snippet_c = 5;
    return cfg;
}

AugmentSpec tiny_augment() {
    AugmentSpec aug;
    aug.crop_channels = 3;
    aug.temporal_jitter_max = 2;
    aug.collision_offset_max = 3;
    return aug;
}

Eigen::MatrixXd random_snippet(int T, int C, Rng& rng) {
    Eigen::MatrixXd s(T, C);
    for (int i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
    return s;
}

std::vector<Eigen::MatrixXd> random_views(int n, const ModelConfig& cfg,
                                          std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::MatrixXd> out;
    for (int i = 0; i < n; ++i)
        out.push_back(random_snippet(cfg.snippet_t, cfg.snippet_c, rng));
    return out;
}

}  // namespace

TEST_CASE("zero snippet maps to the zero embedding") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 1);
    const Eigen::MatrixXd e = conv_frontend(
        Eigen::MatrixXd::Zero(cfg.snippet_t, cfg.snippet_c), state);
    CHECK(e.rows() == cfg.snippet_t);
    CHECK(e.cols() == cfg.conv_dim);
    CHECK(e.cwiseAbs().maxCoeff() == 0.0);  // bias-free frontend
}

TEST_CASE("width-1 identity kernel reproduces the input") {
    ModelConfig cfg = tiny_config();
    cfg.conv_kernel = 1;
    cfg.conv_dim = cfg.snippet_c;
    cfg.heads = 1;
    ModelState state = init_model(cfg, 2);
    state.params["conv.w"] =
        Eigen::MatrixXd::Identity(cfg.snippet_c, cfg.snippet_c);
    Rng rng(3);
    const Eigen::MatrixXd s = random_snippet(cfg.snippet_t, cfg.snippet_c, rng);
    CHECK((conv_frontend(s, state) - s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masking a channel equals zeroing its input") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 4);
    Rng rng(5);
    Eigen::MatrixXd s = random_snippet(cfg.snippet_t, cfg.snippet_c, rng);
    s.col(2).setZero();  // the mask convention: dropped channels are zero
    const Eigen::MatrixXd direct = conv_frontend(s, state);
    Eigen::MatrixXd again = s;
    CHECK((conv_frontend(again, state) - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("token permutation leaves the representation unchanged without "
          "positional encodings") {
    ModelConfig cfg = tiny_config();
    cfg.positional = false;
    const ModelState state = init_model(cfg, 6);
    Rng rng(7);
    const Eigen::MatrixXd s = random_snippet(cfg.snippet_t, cfg.snippet_c, rng);
    const Eigen::MatrixXd tokens = conv_frontend(s, state);

    Eigen::MatrixXd permuted = tokens;
    for (int t = 0; t < cfg.snippet_t; ++t)
        permuted.row(t) = tokens.row((t * 5 + 3) % cfg.snippet_t);

    const Eigen::MatrixXd a = encode(tokens, state, 1);
    const Eigen::MatrixXd b = encode(permuted, state, 1);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("positional encodings break permutation invariance") {
    ModelConfig cfg = tiny_config();
    cfg.positional = true;
    const ModelState state = init_model(cfg, 6);
    Rng rng(8);
    const Eigen::MatrixXd s = random_snippet(cfg.snippet_t, cfg.snippet_c, rng);
    const Eigen::MatrixXd tokens = conv_frontend(s, state);
    Eigen::MatrixXd reversed = tokens.colwise().reverse();
    const Eigen::MatrixXd a = encode(tokens, state, 1);
    const Eigen::MatrixXd b = encode(reversed, state, 1);
    CHECK((a - b).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("representations have rep_dim 32 columns under defaults") {
    const ModelConfig cfg;  // library defaults
    CHECK(cfg.rep_dim == 32);
    const ModelState state = init_model(cfg, 9);
    Rng rng(10);
    std::vector<WaveformSnippet> snippets(3);
    for (auto& s : snippets)
        s.values = random_snippet(cfg.snippet_t, cfg.snippet_c, rng).cast<float>();
    const Eigen::MatrixXd reps = embed(snippets, state, false);
    CHECK(reps.rows() == 3);
    CHECK(reps.cols() == 32);
}

TEST_CASE("identical snippets produce identical representations") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 11);
    Rng rng(12);
    std::vector<WaveformSnippet> snippets(2);
    snippets[0].values =
        random_snippet(cfg.snippet_t, cfg.snippet_c, rng).cast<float>();
    snippets[1].values = snippets[0].values;
    const Eigen::MatrixXd reps = embed(snippets, state, false);
    CHECK((reps.row(0) - reps.row(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batched embedding equals one-by-one embedding") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 13);
    Rng rng(14);
    std::vector<WaveformSnippet> snippets(7);
    for (auto& s : snippets)
        s.values = random_snippet(cfg.snippet_t, cfg.snippet_c, rng).cast<float>();
    const Eigen::MatrixXd batched = embed(snippets, state, false);
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        const Eigen::MatrixXd single = embed({snippets[i]}, state, false);
        CHECK((batched.row(i) - single.row(0)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("the DAE branch preserves shape and starts at zero") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 15);
    Rng rng(16);
    const Eigen::MatrixXd tokens = conv_frontend(
        random_snippet(cfg.snippet_t, cfg.snippet_c, rng), state);
    const Eigen::MatrixXd out = dae_apply(tokens, state);
    CHECK(out.rows() == tokens.rows());
    CHECK(out.cols() == tokens.cols());
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);  // zero-initialized decoder
}

TEST_CASE("use_dae with an untrained decoder collapses all representations") {
    const ModelConfig cfg = tiny_config();
    const ModelState state = init_model(cfg, 17);
    Rng rng(18);
    std::vector<WaveformSnippet> snippets(4);
    for (auto& s : snippets)
        s.values = random_snippet(cfg.snippet_t, cfg.snippet_c, rng).cast<float>();
    const Eigen::MatrixXd reps = embed(snippets, state, true);
    const Eigen::MatrixXd zero_rep = encode(
        Eigen::MatrixXd::Zero(cfg.snippet_t, cfg.conv_dim), state, 1);
    for (int i = 0; i < reps.rows(); ++i)
        CHECK((reps.row(i) - zero_rep.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("info_nce closed forms and normalization guard") {
    Eigen::MatrixXd q(2, 2), k(2, 2);
    q << 1, 0, 0, 1;
    k = q;
    CHECK(info_nce_loss(q, k, 1.0) ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

    Eigen::MatrixXd q2 = Eigen::MatrixXd::Zero(4, 8);
    Eigen::MatrixXd k2 = Eigen::MatrixXd::Zero(4, 8);
    for (int i = 0; i < 4; ++i) {
        q2(i, i) = 1.0;
        k2(i, i + 4) = 1.0;
    }
    CHECK(info_nce_loss(q2, k2, 0.2) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Eigen::MatrixXd bad = q;
    bad(0, 0) = 2.0;
    CHECK_THROWS(info_nce_loss(bad, k, 1.0));
}

TEST_CASE("denoise_loss definition") {
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 4);
    CHECK(denoise_loss(v, v) == 0.0);
    CHECK(denoise_loss(v, ones) == 1.0);
    CHECK(denoise_loss(v, 2.0 * ones) == 4.0);  // quadratic
    CHECK_THROWS(denoise_loss(v, Eigen::MatrixXd::Zero(4, 3)));
}

TEST_CASE("analytic gradients match central finite differences everywhere") {
    ModelConfig cfg = tiny_config();
    cfg.alpha = 0.3;
    ModelState state = init_model(cfg, 19);
    // give the zero decoder a value so its encoder path carries gradient
    Rng wrng(20);
    for (int i = 0; i < state.params["dae.dec.w"].size(); ++i)
        state.params["dae.dec.w"].data()[i] = 0.1 * wrng.normal();

    const auto v1 = random_views(4, cfg, 21);
    const auto v2 = random_views(4, cfg, 22);
    const auto vc = random_views(4, cfg, 23);
    // keys are stop-gradient: pin them so the differentiated function is the
    // one the tape reports gradients for
    const KeyPair keys = target_keys(state, v1, v2);
    const LossGrads analytic = loss_and_gradients(state, v1, v2, vc, keys);

    // every trainable tensor must appear, no target tensor may
    for (const auto& [name, tensor] : state.params) {
        if (state.is_target(name)) {
            CHECK(analytic.grads.find(name) == analytic.grads.end());
        } else {
            REQUIRE(analytic.grads.count(name) == 1);
        }
    }

    const double h = 1e-5;
    double worst = 0.0;
    for (const auto& [name, grad] : analytic.grads) {
        for (int i = 0; i < grad.size(); ++i) {
            const double saved = state.params[name].data()[i];
            state.params[name].data()[i] = saved + h;
            const double lp = loss_and_gradients(state, v1, v2, vc, keys).total;
            state.params[name].data()[i] = saved - h;
            const double lm = loss_and_gradients(state, v1, v2, vc, keys).total;
            state.params[name].data()[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double denom =
                std::max({std::abs(numeric), std::abs(grad.data()[i]), 1e-6});
            worst = std::max(worst,
                             std::abs(numeric - grad.data()[i]) / denom);
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("momentum interpolation at m in {0, 0.5, 1}") {
    const AugmentSpec aug = tiny_augment();
    TrainConfig tc;
    tc.epochs = 10;
    tc.warmup_epochs = 1;
    tc.steps_per_epoch = 4;
    tc.batch_size = 4;
    const std::vector<int> batch{0, 1, 2, 3};

    for (const double m : {0.0, 0.5, 1.0}) {
        ModelConfig cfg = tiny_config();
        cfg.momentum = m;
        ModelState state = init_model(cfg, 24);
        const auto snippets = random_views(8, cfg, 25);
        const std::map<std::string, Eigen::MatrixXd> before = state.params;
        train_step(state, snippets, batch, aug, tc);
        for (const auto& [name, tensor] : state.params) {
            if (!state.is_target(name)) continue;
            const Eigen::MatrixXd& online_after =
                state.params.at(name.substr(7));
            const Eigen::MatrixXd expected =
                m * before.at(name) + (1.0 - m) * online_after;
            CHECK((tensor - expected).cwiseAbs().maxCoeff() < 1e-15);
        }
    }
}

TEST_CASE("alpha 0 reports the pure symmetrized contrastive loss") {
    ModelConfig cfg = tiny_config();
    cfg.alpha = 0.0;
    ModelState state = init_model(cfg, 26);
    const auto snippets = random_views(8, cfg, 27);
    TrainConfig tc;
    tc.epochs = 10;
    tc.warmup_epochs = 1;
    tc.steps_per_epoch = 4;
    const TrainStepResult r =
        train_step(state, snippets, {0, 1, 2, 3}, tiny_augment(), tc);
    CHECK(r.total == r.contrastive);
}

TEST_CASE("learning rate schedule endpoints") {
    TrainConfig tc;
    tc.epochs = 300;
    tc.warmup_epochs = 10;
    tc.peak_lr = 1e-4;
    tc.steps_per_epoch = 7;
    CHECK(lr_at(0, tc) == 0.0);
    CHECK(lr_at(10 * 7, tc) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at(300 * 7, tc) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    // monotone ramp during warmup
    CHECK(lr_at(35, tc) == doctest::Approx(0.5e-4).epsilon(1e-12));
    // cosine midpoint
    CHECK(lr_at((10 + 145) * 7, tc) == doctest::Approx(0.5e-4).epsilon(1e-9));
}

TEST_CASE("a short training run lowers the contrastive loss") {
    ModelConfig cfg = tiny_config();
    ModelState state = init_model(cfg, 28);
    const auto snippets = random_views(16, cfg, 29);
    TrainConfig tc;
    tc.epochs = 12;
    tc.warmup_epochs = 2;
    tc.steps_per_epoch = 5;
    tc.batch_size = 8;
    tc.peak_lr = 1e-3;
    const AugmentSpec aug = tiny_augment();

    Rng shuffle(30);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 60; ++step) {
        std::vector<int> batch(8);
        for (auto& b : batch)
            b = static_cast<int>(shuffle.uniform_int(0, 15));
        const TrainStepResult r = train_step(state, snippets, batch, aug, tc);
        if (step == 0) first = r.contrastive;
        last = r.contrastive;
    }
    CHECK(last < first);
    state.check_finite();
}

TEST_CASE("a trained DAE beats the identity baseline on held-out views") {
    ModelConfig cfg = tiny_config();
    cfg.alpha = 5.0;  // reconstruction-dominated for this test
    ModelState state = init_model(cfg, 31);

    // structured snippets: smooth bumps the DAE can learn to restore
    Rng rng(32);
    std::vector<Eigen::MatrixXd> snippets;
    for (int i = 0; i < 24; ++i) {
        Eigen::MatrixXd s(cfg.snippet_t, cfg.snippet_c);
        const double amp = rng.uniform(2.0, 4.0);
        const double center = rng.uniform(2.0, cfg.snippet_t - 3.0);
        for (int t = 0; t < cfg.snippet_t; ++t)
            for (int c = 0; c < cfg.snippet_c; ++c)
                s(t, c) = amp / (1.0 + c) *
                          std::exp(-0.5 * std::pow((t - center) / 1.5, 2.0));
        snippets.push_back(s);
    }

    AugmentSpec aug = tiny_augment();
    aug.collision_prob = 0.0;
    aug.noise_scale_lo = 1.5;
    aug.noise_scale_hi = 2.5;

    TrainConfig tc;
    tc.epochs = 40;
    tc.warmup_epochs = 2;
    tc.steps_per_epoch = 3;
    tc.batch_size = 12;
    tc.peak_lr = 3e-3;
    Rng shuffle(33);
    for (int step = 0; step < 120; ++step) {
        std::vector<int> batch(12);
        for (auto& b : batch)
            b = static_cast<int>(shuffle.uniform_int(0, 23));
        train_step(state, snippets, batch, aug, tc);
    }

    // held-out evaluation: fresh view pairs from the same distribution
    Rng eval_rng(34);
    double dae_mse = 0.0, identity_mse = 0.0;
    for (int i = 0; i < 16; ++i) {
        const ViewPair pair =
            make_view_pair(snippets[i % snippets.size()], snippets, aug,
                           eval_rng);
        const Eigen::MatrixXd v = conv_frontend(pair.clean, state);
        const Eigen::MatrixXd v1 = conv_frontend(pair.view1, state);
        const Eigen::MatrixXd v_hat = dae_apply(v1, state);
        dae_mse += denoise_loss(v, v_hat);
        identity_mse += denoise_loss(v, v1);
    }
    CHECK(dae_mse < identity_mse);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig cfg = tiny_config();
    ModelState state = init_model(cfg, 35);
    const auto snippets = random_views(8, cfg, 36);
    TrainConfig tc;
    tc.epochs = 10;
    tc.warmup_epochs = 1;
    tc.steps_per_epoch = 2;
    train_step(state, snippets, {0, 1, 2, 3}, tiny_augment(), tc);
    train_step(state, snippets, {4, 5, 6, 7}, tiny_augment(), tc);

    const std::string path =
        (std::filesystem::temp_directory_path() / "spikerep_model_rt.bin")
            .string();
    save_model(state, path);
    const ModelState loaded = load_model(path);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());

    CHECK(loaded.step == state.step);
    CHECK(loaded.seed == state.seed);
    CHECK(loaded.cfg.rep_dim == state.cfg.rep_dim);
    REQUIRE(loaded.params.size() == state.params.size());
    for (const auto& [name, tensor] : state.params)
        CHECK(loaded.params.at(name) == tensor);
    REQUIRE(loaded.adam_m.size() == state.adam_m.size());
    for (const auto& [name, tensor] : state.adam_m)
        CHECK(loaded.adam_m.at(name) == tensor);
    for (const auto& [name, tensor] : state.adam_v)
        CHECK(loaded.adam_v.at(name) == tensor);

    // the loaded model embeds identically
    std::vector<WaveformSnippet> probe(2);
    Rng rng(37);
    for (auto& s : probe)
        s.values = random_snippet(cfg.snippet_t, cfg.snippet_c, rng).cast<float>();
    CHECK(embed(probe, state, false) == embed(probe, loaded, false));
}

TEST_CASE("invalid configurations are rejected") {
    ModelConfig cfg = tiny_config();
    cfg.tau = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.momentum = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.alpha = -0.1;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.heads = 3;  // does not divide conv_dim = 8
    CHECK_THROWS(cfg.validate());

    TrainConfig tc;
    tc.epochs = 5;
    tc.warmup_epochs = 5;
    CHECK_THROWS(tc.validate());
}
