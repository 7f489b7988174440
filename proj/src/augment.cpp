#include "spikerep/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spikerep {
namespace {

double snippet_mad_sigma(const Eigen::MatrixXd& s) {
    std::vector<double> v(s.data(), s.data() + s.size());
    const auto median = [](std::vector<double>& x) {
        const std::size_t mid = x.size() / 2;
        std::nth_element(x.begin(), x.begin() + mid, x.end());
        double m = x[mid];
        if (x.size() % 2 == 0) {
            std::nth_element(x.begin(), x.begin() + mid - 1, x.begin() + mid);
            m = 0.5 * (m + x[mid - 1]);
        }
        return m;
    };
    const double med = median(v);
    for (auto& x : v) x = std::abs(x - med);
    return 1.4826 * median(v);
}

}  // namespace

void AugmentSpec::validate(int n_channels) const {
    if (voltage_jitter_lo > voltage_jitter_hi ||
        collision_scale_lo > collision_scale_hi ||
        noise_scale_lo > noise_scale_hi)
        throw std::invalid_argument("augment: range endpoints out of order");
    if (temporal_jitter_max < 0 || collision_offset_max < 0)
        throw std::invalid_argument("augment: negative shift bound");
    if (crop_channels < 1 || crop_channels % 2 == 0 ||
        crop_channels > n_channels)
        throw std::invalid_argument("augment: crop_channels must be odd and within C");
    if (collision_prob < 0.0 || collision_prob > 1.0)
        throw std::invalid_argument("augment: collision_prob outside [0,1]");
    if (noise_ar_coeff < 0.0 || noise_ar_coeff >= 1.0)
        throw std::invalid_argument("augment: AR coefficient outside [0,1)");
}

Eigen::MatrixXd jitter(const Eigen::MatrixXd& s, const AugmentSpec& spec,
                       Rng& rng) {
    const int T = static_cast<int>(s.rows());
    if (spec.temporal_jitter_max >= (T - 1) / 2)
        throw std::invalid_argument("augment: temporal jitter too large for T");
    const double gain = rng.uniform(spec.voltage_jitter_lo, spec.voltage_jitter_hi);
    const int shift = static_cast<int>(
        rng.uniform_int(-spec.temporal_jitter_max, spec.temporal_jitter_max));

    Eigen::MatrixXd out(s.rows(), s.cols());
    for (int t = 0; t < T; ++t) {
        const int src = std::clamp(t - shift, 0, T - 1);
        out.row(t) = gain * s.row(src);
    }
    return out;
}

CropResult channel_crop(const Eigen::MatrixXd& s, int k, Rng& rng) {
    const int C = static_cast<int>(s.cols());
    if (k < 1 || k > C)
        throw std::invalid_argument("augment: crop count outside [1, C]");

    CropResult out;
    out.values = Eigen::MatrixXd::Zero(s.rows(), C);
    out.mask = Eigen::VectorXd::Zero(C);
    out.mask(0) = 1.0;  // peak channel always survives
    out.values.col(0) = s.col(0);
    if (k > 1) {
        const int start = static_cast<int>(rng.uniform_int(1, C - (k - 1)));
        for (int c = start; c < start + k - 1; ++c) {
            out.mask(c) = 1.0;
            out.values.col(c) = s.col(c);
        }
    }
    return out;
}

Eigen::MatrixXd collide(const Eigen::MatrixXd& s,
                        const std::vector<Eigen::MatrixXd>& donors,
                        const AugmentSpec& spec, Rng& rng) {
    if (donors.empty()) throw std::invalid_argument("augment: empty donor pool");
    if (rng.uniform() >= spec.collision_prob) return s;

    const auto& donor =
        donors[rng.uniform_int(0, static_cast<std::int64_t>(donors.size()) - 1)];
    if (donor.rows() != s.rows() || donor.cols() != s.cols())
        throw std::invalid_argument("augment: donor shape mismatch");
    const double scale =
        rng.uniform(spec.collision_scale_lo, spec.collision_scale_hi);
    const int shift = static_cast<int>(
        rng.uniform_int(-spec.collision_offset_max, spec.collision_offset_max));

    Eigen::MatrixXd out = s;
    const int T = static_cast<int>(s.rows());
    for (int t = 0; t < T; ++t) {
        const int src = t - shift;
        if (src < 0 || src >= T) continue;  // zero-padded shift
        out.row(t) += scale * donor.row(src);
    }
    return out;
}

Eigen::MatrixXd correlated_noise(const Eigen::MatrixXd& s,
                                 const AugmentSpec& spec, Rng& rng) {
    const double sigma = rng.uniform(spec.noise_scale_lo, spec.noise_scale_hi) *
                         snippet_mad_sigma(s);
    if (sigma == 0.0) return s;

    const double phi = spec.noise_ar_coeff;
    const double innovation = std::sqrt(1.0 - phi * phi);
    Eigen::MatrixXd out = s;
    for (int c = 0; c < s.cols(); ++c) {
        double prev = rng.normal();
        for (int t = 0; t < s.rows(); ++t) {
            prev = phi * prev + innovation * rng.normal();
            out(t, c) += sigma * prev;
        }
    }
    return out;
}

ViewPair make_view_pair(const Eigen::MatrixXd& s,
                        const std::vector<Eigen::MatrixXd>& donors,
                        const AugmentSpec& spec, Rng& rng) {
    spec.validate(static_cast<int>(s.cols()));

    const auto masked = [](const Eigen::MatrixXd& m, const Eigen::VectorXd& mask) {
        return m * mask.asDiagonal();
    };

    ViewPair out;
    {
        CropResult crop = channel_crop(jitter(s, spec, rng), spec.crop_channels, rng);
        const Eigen::MatrixXd collided = collide(crop.values, donors, spec, rng);
        out.view1 = masked(correlated_noise(collided, spec, rng), crop.mask);
        out.mask1 = crop.mask;
        out.clean = masked(s, crop.mask);
    }
    {
        CropResult crop = channel_crop(jitter(s, spec, rng), spec.crop_channels, rng);
        out.view2 = masked(collide(crop.values, donors, spec, rng), crop.mask);
        out.mask2 = crop.mask;
    }
    return out;
}

}  // namespace spikerep
