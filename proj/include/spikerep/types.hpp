#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace spikerep {

struct ProbeGeometry {
    // (x, y) positions in micrometers, one per channel.
    std::vector<std::pair<double, double>> channel_positions;

    int n_channels() const { return static_cast<int>(channel_positions.size()); }

    double distance(int a, int b) const {
        const auto& [ax, ay] = channel_positions[a];
        const auto& [bx, by] = channel_positions[b];
        return std::hypot(ax - bx, ay - by);
    }

    void validate() const;
};

// Multichannel voltage trace, microvolts. samples(frame, channel).
struct Recording {
    double sample_rate_hz = 0.0;
    Eigen::MatrixXf samples;  // n_frames x n_channels
    ProbeGeometry geometry;

    std::int64_t n_frames() const { return samples.rows(); }
    int n_channels() const { return static_cast<int>(samples.cols()); }

    void validate() const;
};

struct SpikeEvent {
    std::int64_t frame = 0;
    int channel = 0;
    double amplitude = 0.0;  // signed microvolts at the peak
};

struct GroundTruth {
    // unit_id -> strictly increasing spike frames
    std::map<int, std::vector<std::int64_t>> units;

    void validate(std::int64_t n_frames) const;
};

// T x C voltage window centered on a detected spike's peak channel.
// Channels are ordered by ascending distance from the peak channel.
struct WaveformSnippet {
    Eigen::MatrixXf values;  // T x C
    int peak_channel_global = 0;
    std::int64_t event_frame = 0;
};

struct SortingResult {
    std::vector<std::pair<std::int64_t, int>> events;  // (frame, unit_label)

    void validate() const;
};

inline void ProbeGeometry::validate() const {
    if (channel_positions.empty())
        throw std::invalid_argument("probe geometry: no channels");
    for (std::size_t i = 0; i < channel_positions.size(); ++i) {
        const auto& [x, y] = channel_positions[i];
        if (!std::isfinite(x) || !std::isfinite(y))
            throw std::invalid_argument("probe geometry: non-finite position");
        for (std::size_t j = 0; j < i; ++j)
            if (channel_positions[j] == channel_positions[i])
                throw std::invalid_argument("probe geometry: duplicate channel position");
    }
}

inline void Recording::validate() const {
    if (sample_rate_hz <= 0.0)
        throw std::invalid_argument("recording: sample rate must be positive");
    if (samples.rows() < 1 || samples.cols() < 1)
        throw std::invalid_argument("recording: empty sample matrix");
    if (!samples.allFinite())
        throw std::invalid_argument("recording: non-finite samples");
    geometry.validate();
    if (geometry.n_channels() != n_channels())
        throw std::invalid_argument("recording: geometry channel count mismatch");
}

inline void GroundTruth::validate(std::int64_t n_frames) const {
    for (const auto& [unit, frames] : units) {
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (frames[i] < 0 || frames[i] >= n_frames)
                throw std::invalid_argument("ground truth: frame out of bounds");
            if (i > 0 && frames[i] <= frames[i - 1])
                throw std::invalid_argument("ground truth: frames not strictly increasing");
        }
    }
}

inline void SortingResult::validate() const {
    int max_label = -1;
    std::vector<bool> seen;
    for (const auto& [frame, label] : events) {
        if (label < 0) throw std::invalid_argument("sorting: negative unit label");
        if (label >= static_cast<int>(seen.size())) seen.resize(label + 1, false);
        seen[label] = true;
        max_label = std::max(max_label, label);
    }
    for (int l = 0; l <= max_label; ++l)
        if (!seen[l])
            throw std::invalid_argument("sorting: unit labels not contiguous");
}

}  // namespace spikerep
