#include "spikerep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spikerep {
namespace {

double median_inplace(std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

double mad_sigma(std::vector<double>& v) {
    const double med = median_inplace(v);
    for (auto& x : v) x = std::abs(x - med);
    return 1.4826 * median_inplace(v);
}

// Biphasic canonical spike: negative trough at the center sample plus a
// delayed positive rebound, both Gaussian in time. Peak-to-peak normalized
// to 1.
Eigen::VectorXd temporal_shape(int n_samples, double sample_rate_hz) {
    const double center = 0.5 * (n_samples - 1);
    const double ms = sample_rate_hz / 1000.0;
    const double sigma1 = 0.2 * ms;
    const double sigma2 = 0.4 * ms;
    const double rebound_delay = 0.4 * ms;
    Eigen::VectorXd shape(n_samples);
    for (int t = 0; t < n_samples; ++t) {
        const double d1 = (t - center) / sigma1;
        const double d2 = (t - center - rebound_delay) / sigma2;
        shape(t) = -std::exp(-0.5 * d1 * d1) + 0.45 * std::exp(-0.5 * d2 * d2);
    }
    return shape / (shape.maxCoeff() - shape.minCoeff());
}

Eigen::VectorXd channel_weights(const ProbeGeometry& geom, double x, double y,
                                double lambda_um) {
    Eigen::VectorXd w(geom.n_channels());
    for (int c = 0; c < geom.n_channels(); ++c) {
        const auto& [cx, cy] = geom.channel_positions[c];
        const double d = std::hypot(cx - x, cy - y);
        w(c) = 1.0 / (1.0 + (d / lambda_um) * (d / lambda_um));
    }
    return w;
}

constexpr double kRefractorySeconds = 0.002;
constexpr double kSnrCap = 1e9;

}  // namespace

double DriftModel::displacement(double t_s) const {
    validate();
    if (t_s < 0.0 || t_s > duration_s)
        throw std::out_of_range("drift: t outside [0, duration]");
    return amplitude_um *
           std::sin(2.0 * std::numbers::pi * n_cycles * t_s / duration_s);
}

void DriftModel::validate() const {
    if (amplitude_um < 0.0 || n_cycles < 0.0 || duration_s <= 0.0)
        throw std::invalid_argument("drift: invalid parameters");
}

ProbeGeometry SynthSpec::make_geometry() const {
    ProbeGeometry geom;
    for (int r = 0; r < probe_rows; ++r)
        for (int c = 0; c < probe_cols; ++c)
            geom.channel_positions.emplace_back(c * pitch_um, r * pitch_um);
    return geom;
}

void SynthSpec::validate() const {
    if (n_units < 0 || probe_rows < 1 || probe_cols < 1 || pitch_um <= 0.0)
        throw std::invalid_argument("synth: invalid probe spec");
    if (duration_s <= 0.0 || sample_rate_hz <= 0.0 || firing_rate_hz <= 0.0)
        throw std::invalid_argument("synth: rates and durations must be positive");
    if (amp_min_uv <= 0.0 || amp_max_uv < amp_min_uv)
        throw std::invalid_argument("synth: invalid amplitude range");
    if (noise_std_uv < 0.0 || noise_ar < 0.0 || noise_ar >= 1.0)
        throw std::invalid_argument("synth: invalid noise model");
    if (lambda_um <= 0.0 || template_samples < 3)
        throw std::invalid_argument("synth: invalid template parameters");
    drift.validate();
    if (duration_s * sample_rate_hz < 2.0 * template_samples)
        throw std::invalid_argument("synth: duration too short to contain one snippet");
}

std::vector<UnitTemplate> make_templates(const SynthSpec& spec, Rng& rng) {
    spec.validate();
    const ProbeGeometry geom = spec.make_geometry();
    const Eigen::VectorXd shape =
        temporal_shape(spec.template_samples, spec.sample_rate_hz);

    std::vector<UnitTemplate> templates;
    templates.reserve(spec.n_units);
    for (int u = 0; u < spec.n_units; ++u) {
        UnitTemplate t;
        t.source_position = {rng.uniform(0.0, (spec.probe_cols - 1) * spec.pitch_um),
                             rng.uniform(0.0, (spec.probe_rows - 1) * spec.pitch_um)};
        t.amplitude_pp_uv = rng.uniform(spec.amp_min_uv, spec.amp_max_uv);
        const Eigen::VectorXd w = channel_weights(
            geom, t.source_position.first, t.source_position.second, spec.lambda_um);
        t.waveform = shape * (w * (t.amplitude_pp_uv / w.maxCoeff())).transpose();
        templates.push_back(std::move(t));
    }
    return templates;
}

std::pair<Recording, GroundTruth> generate_recording(const SynthSpec& spec) {
    spec.validate();
    const Rng root(spec.rng_seed);
    Rng template_rng = root.substream("templates");
    const std::vector<UnitTemplate> templates = make_templates(spec, template_rng);

    Recording rec;
    rec.sample_rate_hz = spec.sample_rate_hz;
    rec.geometry = spec.make_geometry();
    const std::int64_t n_frames =
        static_cast<std::int64_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
    const int n_channels = rec.geometry.n_channels();
    rec.samples = Eigen::MatrixXf::Zero(n_frames, n_channels);

    const Eigen::VectorXd shape =
        temporal_shape(spec.template_samples, spec.sample_rate_hz);
    const int half = (spec.template_samples - 1) / 2;

    GroundTruth gt;
    for (int u = 0; u < spec.n_units; ++u) {
        Rng spike_rng = root.substream("spikes", static_cast<std::uint64_t>(u));
        const auto& [sx, sy] = templates[u].source_position;
        const double base_wmax =
            channel_weights(rec.geometry, sx, sy, spec.lambda_um).maxCoeff();
        const double scale = templates[u].amplitude_pp_uv / base_wmax;

        std::vector<std::int64_t>& frames = gt.units[u];
        double t = static_cast<double>(spec.template_samples) / spec.sample_rate_hz;
        for (;;) {
            t += kRefractorySeconds + spike_rng.exponential(spec.firing_rate_hz);
            const std::int64_t frame =
                static_cast<std::int64_t>(std::llround(t * spec.sample_rate_hz));
            if (frame + half >= n_frames - 1 || t > spec.duration_s) break;
            frames.push_back(frame);

            const double disp = spec.drift.displacement(std::min(t, spec.drift.duration_s));
            const Eigen::VectorXd w =
                channel_weights(rec.geometry, sx, sy + disp, spec.lambda_um);
            const Eigen::MatrixXd spike = shape * (scale * w).transpose();
            rec.samples.middleRows(frame - half, spec.template_samples) +=
                spike.cast<float>();
        }
        if (frames.empty()) gt.units.erase(u);
    }

    if (spec.noise_std_uv > 0.0) {
        // Per-channel AR(1) with unit stationary variance, then mixed across
        // channels by the spatial kernel, renormalized so every channel keeps
        // std = noise_std.
        Eigen::MatrixXd mix(n_channels, n_channels);
        for (int c = 0; c < n_channels; ++c) {
            const auto& [cx, cy] = rec.geometry.channel_positions[c];
            mix.col(c) = channel_weights(rec.geometry, cx, cy, spec.lambda_um);
            mix.col(c) /= mix.col(c).norm();
        }

        std::vector<Rng> channel_rng;
        Eigen::VectorXd ar_state(n_channels);
        for (int c = 0; c < n_channels; ++c) {
            channel_rng.push_back(root.substream("noise", static_cast<std::uint64_t>(c)));
            ar_state(c) = channel_rng[c].normal();
        }

        const double phi = spec.noise_ar;
        const double innovation = std::sqrt(1.0 - phi * phi);
        const std::int64_t chunk = 1 << 16;
        Eigen::MatrixXd buf;
        for (std::int64_t f0 = 0; f0 < n_frames; f0 += chunk) {
            const std::int64_t rows = std::min(chunk, n_frames - f0);
            buf.resize(rows, n_channels);
            for (int c = 0; c < n_channels; ++c) {
                double prev = ar_state(c);
                for (std::int64_t i = 0; i < rows; ++i) {
                    prev = phi * prev + innovation * channel_rng[c].normal();
                    buf(i, c) = prev;
                }
                ar_state(c) = prev;
            }
            rec.samples.middleRows(f0, rows) +=
                (spec.noise_std_uv * (buf * mix)).cast<float>();
        }
    }

    return {std::move(rec), std::move(gt)};
}

double snr_of_unit(const Recording& rec, const GroundTruth& gt, int unit_id,
                   int window_samples) {
    const auto it = gt.units.find(unit_id);
    if (it == gt.units.end() || it->second.size() < 10)
        throw std::invalid_argument("snr: unit needs at least 10 spikes");
    const int half = (window_samples - 1) / 2;

    Eigen::MatrixXd mean_wf =
        Eigen::MatrixXd::Zero(window_samples, rec.n_channels());
    std::int64_t used = 0;
    for (const auto frame : it->second) {
        if (frame - half < 0 || frame + half >= rec.n_frames()) continue;
        mean_wf += rec.samples.middleRows(frame - half, window_samples).cast<double>();
        ++used;
    }
    if (used < 10) throw std::invalid_argument("snr: too few in-bounds spikes");
    mean_wf /= static_cast<double>(used);

    int peak_channel = 0;
    double pp = 0.0;
    for (int c = 0; c < rec.n_channels(); ++c) {
        const double v = mean_wf.col(c).maxCoeff() - mean_wf.col(c).minCoeff();
        if (v > pp) {
            pp = v;
            peak_channel = c;
        }
    }

    // Robust noise floor on the peak channel with every known spike window
    // (all units) cut out.
    std::vector<bool> excised(rec.n_frames(), false);
    for (const auto& [unit, frames] : gt.units)
        for (const auto frame : frames)
            for (std::int64_t f = std::max<std::int64_t>(0, frame - half);
                 f <= std::min<std::int64_t>(rec.n_frames() - 1, frame + half); ++f)
                excised[f] = true;

    std::vector<double> residual;
    residual.reserve(rec.n_frames());
    for (std::int64_t f = 0; f < rec.n_frames(); ++f)
        if (!excised[f]) residual.push_back(rec.samples(f, peak_channel));
    if (residual.empty())
        throw std::invalid_argument("snr: no spike-free samples remain");

    const double sigma = mad_sigma(residual);
    if (sigma <= 0.0 || pp / sigma > kSnrCap) return kSnrCap;
    return pp / sigma;
}

}  // namespace spikerep
