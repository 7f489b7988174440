#pragma once

#include <string>

#include <json.hpp>

namespace spikerep {

// Every tunable of the pipeline, flat, with its default. config.json is a
// flat key/value document; unknown keys are an error, missing keys take the
// defaults below.
struct PipelineConfig {
    // synthetic generator
    int synth_n_units = 8;
    int synth_probe_rows = 16;
    int synth_probe_cols = 4;
    double synth_pitch_um = 20.0;
    double synth_duration_s = 120.0;
    double synth_sample_rate_hz = 30000.0;
    double synth_firing_rate_hz = 4.0;
    double synth_amp_min_uv = 60.0;
    double synth_amp_max_uv = 200.0;
    double synth_noise_std_uv = 10.0;
    double synth_noise_ar = 0.9;
    double synth_lambda_um = 25.0;
    int synth_template_samples = 121;
    double drift_amplitude_um = 0.0;
    double drift_n_cycles = 2.0;

    // preprocessing / detection / extraction
    double filter_low_hz = 300.0;
    double filter_high_hz = 6000.0;
    int filter_order = 3;
    double detect_threshold_mads = 5.0;
    std::string detect_polarity = "negative";  // negative | positive | both
    double detect_refractory_ms = 0.5;
    double detect_peak_window_ms = 0.7;
    double detect_merge_radius_um = 100.0;
    double detect_min_amplitude_uv = 0.0;
    int snippet_t = 121;
    int snippet_c = 21;

    // view augmentation
    double aug_voltage_jitter_lo = 0.9;
    double aug_voltage_jitter_hi = 1.1;
    int aug_temporal_jitter_max = 4;
    int aug_crop_channels = 11;
    double aug_collision_prob = 0.5;
    double aug_collision_scale_lo = 0.2;
    double aug_collision_scale_hi = 1.0;
    int aug_collision_offset_max = 30;
    double aug_noise_scale_lo = 0.5;
    double aug_noise_scale_hi = 2.0;
    double aug_noise_ar = 0.9;

    // representation model
    int model_conv_dim = 32;
    int model_layers = 2;
    int model_heads = 4;
    int model_ff_dim = 64;
    int model_rep_dim = 32;
    int model_proj_dim = 64;
    int model_pred_hidden = 64;
    int model_dae_hidden = 64;
    double model_tau = 0.2;
    double model_momentum = 0.99;
    double model_alpha = 0.2;
    bool model_positional = true;

    // training
    int train_epochs = 300;
    int train_batch = 256;
    double train_peak_lr = 1e-4;
    int train_warmup_epochs = 10;
    double train_weight_decay = 1e-2;

    // clustering
    int gmm_k = 8;
    int gmm_max_iter = 100;
    double gmm_tol = 1e-3;
    double gmm_reg = 1e-6;
    int gmm_n_init = 1;
    bool gmm_bic_sweep = false;

    // evaluation
    double eval_match_delta_ms = 1.0;
    double eval_snr_floor = 3.0;
    int eval_n_units = 10;
    int eval_seeds = 100;
    int eval_gmm_runs = 50;

    std::uint64_t seed = 0;

    // Visits every (key, field ref) pair; backbone for parse/serialize and
    // the golden-defaults test.
    template <typename F>
    void for_each_field(F&& f) {
        f("synth_n_units", synth_n_units);
        f("synth_probe_rows", synth_probe_rows);
        f("synth_probe_cols", synth_probe_cols);
        f("synth_pitch_um", synth_pitch_um);
        f("synth_duration_s", synth_duration_s);
        f("synth_sample_rate_hz", synth_sample_rate_hz);
        f("synth_firing_rate_hz", synth_firing_rate_hz);
        f("synth_amp_min_uv", synth_amp_min_uv);
        f("synth_amp_max_uv", synth_amp_max_uv);
        f("synth_noise_std_uv", synth_noise_std_uv);
        f("synth_noise_ar", synth_noise_ar);
        f("synth_lambda_um", synth_lambda_um);
        f("synth_template_samples", synth_template_samples);
        f("drift_amplitude_um", drift_amplitude_um);
        f("drift_n_cycles", drift_n_cycles);
        f("filter_low_hz", filter_low_hz);
        f("filter_high_hz", filter_high_hz);
        f("filter_order", filter_order);
        f("detect_threshold_mads", detect_threshold_mads);
        f("detect_polarity", detect_polarity);
        f("detect_refractory_ms", detect_refractory_ms);
        f("detect_peak_window_ms", detect_peak_window_ms);
        f("detect_merge_radius_um", detect_merge_radius_um);
        f("detect_min_amplitude_uv", detect_min_amplitude_uv);
        f("snippet_t", snippet_t);
        f("snippet_c", snippet_c);
        f("aug_voltage_jitter_lo", aug_voltage_jitter_lo);
        f("aug_voltage_jitter_hi", aug_voltage_jitter_hi);
        f("aug_temporal_jitter_max", aug_temporal_jitter_max);
        f("aug_crop_channels", aug_crop_channels);
        f("aug_collision_prob", aug_collision_prob);
        f("aug_collision_scale_lo", aug_collision_scale_lo);
        f("aug_collision_scale_hi", aug_collision_scale_hi);
        f("aug_collision_offset_max", aug_collision_offset_max);
        f("aug_noise_scale_lo", aug_noise_scale_lo);
        f("aug_noise_scale_hi", aug_noise_scale_hi);
        f("aug_noise_ar", aug_noise_ar);
        f("model_conv_dim", model_conv_dim);
        f("model_layers", model_layers);
        f("model_heads", model_heads);
        f("model_ff_dim", model_ff_dim);
        f("model_rep_dim", model_rep_dim);
        f("model_proj_dim", model_proj_dim);
        f("model_pred_hidden", model_pred_hidden);
        f("model_dae_hidden", model_dae_hidden);
        f("model_tau", model_tau);
        f("model_momentum", model_momentum);
        f("model_alpha", model_alpha);
        f("model_positional", model_positional);
        f("train_epochs", train_epochs);
        f("train_batch", train_batch);
        f("train_peak_lr", train_peak_lr);
        f("train_warmup_epochs", train_warmup_epochs);
        f("train_weight_decay", train_weight_decay);
        f("gmm_k", gmm_k);
        f("gmm_max_iter", gmm_max_iter);
        f("gmm_tol", gmm_tol);
        f("gmm_reg", gmm_reg);
        f("gmm_n_init", gmm_n_init);
        f("gmm_bic_sweep", gmm_bic_sweep);
        f("eval_match_delta_ms", eval_match_delta_ms);
        f("eval_snr_floor", eval_snr_floor);
        f("eval_n_units", eval_n_units);
        f("eval_seeds", eval_seeds);
        f("eval_gmm_runs", eval_gmm_runs);
        f("seed", seed);
    }

    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::string& path);
    nlohmann::json to_json() const;
};

}  // namespace spikerep
