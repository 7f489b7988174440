#pragma once

#include <vector>

#include "spikerep/rng.hpp"
#include "spikerep/types.hpp"

namespace spikerep {

// Sinusoidal vertical probe drift: displacement(t) =
// amplitude_um * sin(2*pi * n_cycles * t / duration_s).
struct DriftModel {
    double amplitude_um = 0.0;
    double n_cycles = 0.0;
    double duration_s = 1.0;

    double displacement(double t_s) const;
    void validate() const;
};

struct SynthSpec {
    int n_units = 8;
    int probe_rows = 16;
    int probe_cols = 4;
    double pitch_um = 20.0;
    double duration_s = 120.0;
    double sample_rate_hz = 30000.0;
    double firing_rate_hz = 4.0;
    double amp_min_uv = 60.0;
    double amp_max_uv = 200.0;
    double noise_std_uv = 10.0;
    double noise_ar = 0.9;
    double lambda_um = 25.0;   // spatial decay length of 1/(1+(d/lambda)^2)
    int template_samples = 121;
    DriftModel drift;
    std::uint64_t rng_seed = 0;

    ProbeGeometry make_geometry() const;
    void validate() const;
};

struct UnitTemplate {
    Eigen::MatrixXd waveform;   // template_samples x n_channels, microvolts
    std::pair<double, double> source_position;  // um
    double amplitude_pp_uv = 0.0;  // peak-to-peak on the peak channel
};

std::vector<UnitTemplate> make_templates(const SynthSpec& spec, Rng& rng);

// Poisson trains with a 2 ms absolute refractory period, per-spike drift
// displacement, and AR(1)-in-time / kernel-mixed-in-space noise.
std::pair<Recording, GroundTruth> generate_recording(const SynthSpec& spec);

// Peak-to-peak of the mean extracted waveform on its peak channel over
// 1.4826 * MAD of that channel with all spike windows excised. A zero noise
// floor reports the 1e9 cap.
double snr_of_unit(const Recording& rec, const GroundTruth& gt, int unit_id,
                   int window_samples = 121);

}  // namespace spikerep
