#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spikerep/ad.hpp"
#include "spikerep/augment.hpp"
#include "spikerep/config.hpp"
#include "spikerep/rng.hpp"
#include "spikerep/types.hpp"

namespace spikerep {

struct ModelConfig {
    int conv_dim = 32;  // embedding width E
    int conv_kernel = 5;
    int layers = 2;
    int heads = 4;
    int ff_dim = 64;
    int rep_dim = 32;
    int proj_dim = 64;
    int pred_hidden = 64;
    int dae_hidden = 64;
    double tau = 0.2;
    double momentum = 0.99;
    double alpha = 0.2;
    bool positional = true;
    int snippet_t = 121;
    int snippet_c = 21;

    void validate() const;
    static ModelConfig from(const PipelineConfig& pc);
};

struct TrainConfig {
    int epochs = 300;
    int batch_size = 256;
    double peak_lr = 1e-4;
    int warmup_epochs = 10;
    double weight_decay = 1e-2;
    int steps_per_epoch = 1;
    std::uint64_t seed = 0;

    void validate() const;
    static TrainConfig from(const PipelineConfig& pc, int n_snippets);
};

// All parameters live in one flat name -> matrix map. Online-side tensors are
// trainable; "target." tensors mirror the online encoder and projection head
// and are advanced only by the momentum rule.
struct ModelState {
    ModelConfig cfg;
    std::map<std::string, Eigen::MatrixXd> params;
    std::map<std::string, Eigen::MatrixXd> adam_m, adam_v;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    bool is_target(const std::string& name) const;
    void check_finite() const;
};

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed);

// T x C snippet (+ channel mask semantics: dropped channels are zero) to the
// (T) x (C * kernel) patch matrix of the time-convolution frontend.
Eigen::MatrixXd unfold_snippet(const Eigen::MatrixXd& s, int kernel);

// Cross-channel convolution: patches * conv.w, bias-free. Returns T x E.
Eigen::MatrixXd conv_frontend(const Eigen::MatrixXd& s, const ModelState& state);

// Transformer encoder over precomputed tokens, mean-pool, linear head.
// tokens is (batch * T) x E; returns batch x rep_dim.
Eigen::MatrixXd encode(const Eigen::MatrixXd& tokens, const ModelState& state,
                       int batch);

// The DAE branch: token-wise 2-layer encoder + zero-initialized decoder.
Eigen::MatrixXd dae_apply(const Eigen::MatrixXd& tokens,
                          const ModelState& state);

double info_nce_loss(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                     double tau);
double denoise_loss(const Eigen::MatrixXd& v, const Eigen::MatrixXd& v_hat);

struct TrainStepResult {
    double contrastive = 0.0;  // symmetrized InfoNCE
    double denoise = 0.0;
    double total = 0.0;
};

struct LossGrads {
    double contrastive = 0.0;
    double denoise = 0.0;
    double total = 0.0;
    // gradient of `total` per trainable tensor; target tensors never appear
    std::map<std::string, Eigen::MatrixXd> grads;
};

struct KeyPair {
    Eigen::MatrixXd key1, key2;  // B x proj_dim, unit rows
};

// Momentum-target keys for both views; no gradients flow through these.
KeyPair target_keys(const ModelState& state,
                    const std::vector<Eigen::MatrixXd>& view1,
                    const std::vector<Eigen::MatrixXd>& view2);

// The full training objective on fixed views: symmetrized InfoNCE against the
// momentum target's keys plus alpha * reconstruction MSE. Pure in the state.
LossGrads loss_and_gradients(const ModelState& state,
                             const std::vector<Eigen::MatrixXd>& view1,
                             const std::vector<Eigen::MatrixXd>& view2,
                             const std::vector<Eigen::MatrixXd>& clean);

// Same objective with the (stop-gradient) keys pinned externally; this is the
// exact function whose parameter gradient the tape reports, and the form the
// finite-difference check differentiates.
LossGrads loss_and_gradients(const ModelState& state,
                             const std::vector<Eigen::MatrixXd>& view1,
                             const std::vector<Eigen::MatrixXd>& view2,
                             const std::vector<Eigen::MatrixXd>& clean,
                             const KeyPair& keys);

// One optimizer step: builds view pairs, runs both online branches and the
// no-gradient target branch, backpropagates the symmetrized contrastive loss
// plus alpha-weighted reconstruction loss, applies AdamW, then the momentum
// update. `batch` holds indices into `snippets`.
TrainStepResult train_step(ModelState& state,
                           const std::vector<Eigen::MatrixXd>& snippets,
                           const std::vector<int>& batch,
                           const AugmentSpec& aug, const TrainConfig& tc);

double lr_at(std::int64_t step, const TrainConfig& tc);

// N snippets -> N x rep_dim, deterministic, batched internally.
Eigen::MatrixXd embed(const std::vector<WaveformSnippet>& snippets,
                      const ModelState& state, bool use_dae);

// Binary tensor blob + JSON manifest (path + ".json"); bit-exact round trip.
void save_model(const ModelState& state, const std::string& path);
ModelState load_model(const std::string& path);

}  // namespace spikerep
