#pragma once

#include <complex>
#include <string>
#include <vector>

#include "spikerep/types.hpp"

namespace spikerep {

struct FilterSpec {
    double low_hz = 300.0;
    double high_hz = 6000.0;
    int order = 3;

    void validate(double sample_rate_hz) const;
};

enum class Polarity { kNegative, kPositive, kBoth };

Polarity polarity_from_string(const std::string& s);

struct DetectionSpec {
    double threshold_mads = 5.0;
    Polarity polarity = Polarity::kNegative;
    int refractory_samples = 15;    // 0.5 ms at 30 kHz
    int peak_window_samples = 21;   // 0.7 ms at 30 kHz
    double merge_radius_um = 100.0;
    double min_amplitude_uv = 0.0;  // absolute threshold floor, 0 = disabled

    void validate() const;
};

// Digital IIR transfer function b(z)/a(z), a[0] == 1.
struct FilterCoefficients {
    std::vector<double> b;
    std::vector<double> a;

    // |H(e^{j*2*pi*f/fs})| — the frequency-response oracle for tests.
    double magnitude_at(double freq_hz, double sample_rate_hz) const;
};

// Butterworth band-pass via analog prototype + bilinear transform.
FilterCoefficients design_butterworth_bandpass(const FilterSpec& f,
                                               double sample_rate_hz);

// Drops channels whose std is zero or off the median channel std by more
// than 5x either way. Returns the cleaned recording and the removed indices
// (in the original numbering).
std::pair<Recording, std::vector<int>> remove_bad_channels(const Recording& rec);

// Zero-phase (forward-backward) Butterworth band-pass per channel.
Recording bandpass(const Recording& rec, const FilterSpec& f);

std::vector<SpikeEvent> detect(const Recording& rec, const DetectionSpec& d);

struct ExtractResult {
    std::vector<WaveformSnippet> snippets;
    std::int64_t n_dropped_edge = 0;
};

// T x C windows around each event; C channels nearest the peak channel by
// probe distance, ascending, ties broken by channel index. Edge events are
// dropped and counted.
ExtractResult extract_snippets(const Recording& rec,
                               const std::vector<SpikeEvent>& events, int T,
                               int C);

}  // namespace spikerep
