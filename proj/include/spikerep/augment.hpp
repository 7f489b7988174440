#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spikerep/rng.hpp"

namespace spikerep {

// View-generation parameters for contrastive training. Snippets here are
// T x C double matrices (the model-facing precision).
struct AugmentSpec {
    double voltage_jitter_lo = 0.9;
    double voltage_jitter_hi = 1.1;
    int temporal_jitter_max = 4;
    int crop_channels = 11;  // odd, <= C
    double collision_prob = 0.5;
    double collision_scale_lo = 0.2;
    double collision_scale_hi = 1.0;
    int collision_offset_max = 30;
    double noise_scale_lo = 0.5;  // units of snippet MAD-sigma
    double noise_scale_hi = 2.0;
    double noise_ar_coeff = 0.9;

    void validate(int n_channels) const;
};

struct ViewPair {
    // Views are zero-padded back to the full channel count; mask1/mask2 mark
    // the surviving channels (1 kept, 0 dropped). `clean` is the original
    // snippet under view1's channel selection, the DAE target.
    Eigen::MatrixXd view1, view2, clean;
    Eigen::VectorXd mask1, mask2;
};

// Multiplies by a gain drawn from the voltage range, shifts in time by up to
// temporal_jitter_max samples, edge-padding with the nearest retained sample.
Eigen::MatrixXd jitter(const Eigen::MatrixXd& s, const AugmentSpec& spec,
                       Rng& rng);

struct CropResult {
    Eigen::MatrixXd values;  // zero-padded to full C
    Eigen::VectorXd mask;
};

// Keeps the peak channel (index 0 in the snippet's distance ordering) plus a
// random contiguous block of k-1 of the remaining channels.
CropResult channel_crop(const Eigen::MatrixXd& s, int k, Rng& rng);

// With probability collision_prob, overlays a random donor snippet, scaled
// and time-shifted.
Eigen::MatrixXd collide(const Eigen::MatrixXd& s,
                        const std::vector<Eigen::MatrixXd>& donors,
                        const AugmentSpec& spec, Rng& rng);

// Adds per-channel AR(1) noise scaled to a random multiple of the snippet's
// robust sigma (1.4826 * MAD).
Eigen::MatrixXd correlated_noise(const Eigen::MatrixXd& s,
                                 const AugmentSpec& spec, Rng& rng);

// view2 = collide(crop(jitter(s))); view1 = noise(collide(crop(jitter(s))));
// independent draws per view, view1's pipeline drawn first.
ViewPair make_view_pair(const Eigen::MatrixXd& s,
                        const std::vector<Eigen::MatrixXd>& donors,
                        const AugmentSpec& spec, Rng& rng);

}  // namespace spikerep
