#pragma once

#include <string>
#include <vector>

#include "spikerep/types.hpp"

namespace spikerep {

// Raw little-endian f32, time-major, with a JSON sidecar (<base>.json next to
// <base>.bin) carrying sample_rate_hz, n_channels, n_frames, channel
// positions and dtype "f32le". `path` is the .bin path.
Recording read_recording(const std::string& path);
void write_recording(const Recording& rec, const std::string& path);

// CSV `unit_id,frame`; rows are sorted per unit on read.
GroundTruth read_ground_truth(const std::string& path);
void write_ground_truth(const GroundTruth& gt, const std::string& path);

// CSV `frame,unit_label`.
SortingResult read_sorting(const std::string& path);
void write_sorting(const SortingResult& sr, const std::string& path);

// Raw f32 tensor of shape n_snippets x T x C plus a JSON sidecar with the
// shape and per-snippet peak channels / event frames.
std::vector<WaveformSnippet> read_snippets(const std::string& path);
void write_snippets(const std::vector<WaveformSnippet>& snippets,
                    const std::string& path);

}  // namespace spikerep
