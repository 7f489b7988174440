#include "spikerep/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spikerep {
namespace {

using cplx = std::complex<double>;

std::vector<cplx> poly_from_roots(const std::vector<cplx>& roots) {
    std::vector<cplx> coeffs{1.0};
    for (const auto& r : roots) {
        std::vector<cplx> next(coeffs.size() + 1, 0.0);
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            next[i] += coeffs[i];
            next[i + 1] -= coeffs[i] * r;
        }
        coeffs = std::move(next);
    }
    return coeffs;
}

double mad_sigma(std::vector<double> v) {
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

// Direct form II transposed, zero initial state.
void lfilter_inplace(const FilterCoefficients& f, std::vector<double>& x) {
    const std::size_t n = f.a.size() - 1;
    std::vector<double> state(n, 0.0);
    for (auto& sample : x) {
        const double in = sample;
        const double out = f.b[0] * in + state[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double next = (i + 1 < n) ? state[i + 1] : 0.0;
            state[i] = f.b[i + 1] * in - f.a[i + 1] * out + next;
        }
        sample = out;
    }
}

}  // namespace

void FilterSpec::validate(double sample_rate_hz) const {
    if (!(0.0 < low_hz && low_hz < high_hz && high_hz < sample_rate_hz / 2.0))
        throw std::invalid_argument("filter: need 0 < low < high < nyquist");
    if (order < 1 || order > 8)
        throw std::invalid_argument("filter: unsupported order");
}

Polarity polarity_from_string(const std::string& s) {
    if (s == "negative") return Polarity::kNegative;
    if (s == "positive") return Polarity::kPositive;
    if (s == "both") return Polarity::kBoth;
    throw std::invalid_argument("detect: unknown polarity '" + s + "'");
}

void DetectionSpec::validate() const {
    if (threshold_mads <= 0.0 || refractory_samples < 1 ||
        peak_window_samples < 1 || merge_radius_um < 0.0 ||
        min_amplitude_uv < 0.0)
        throw std::invalid_argument("detect: invalid spec");
}

double FilterCoefficients::magnitude_at(double freq_hz,
                                        double sample_rate_hz) const {
    const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
    const cplx z_inv = std::exp(cplx(0.0, -w));
    cplx num = 0.0, den = 0.0, zp = 1.0;
    for (std::size_t i = 0; i < std::max(b.size(), a.size()); ++i) {
        if (i < b.size()) num += b[i] * zp;
        if (i < a.size()) den += a[i] * zp;
        zp *= z_inv;
    }
    return std::abs(num / den);
}

FilterCoefficients design_butterworth_bandpass(const FilterSpec& f,
                                               double sample_rate_hz) {
    f.validate(sample_rate_hz);
    const int n = f.order;
    const double fs2 = 2.0 * sample_rate_hz;
    const double w1 = fs2 * std::tan(std::numbers::pi * f.low_hz / sample_rate_hz);
    const double w2 = fs2 * std::tan(std::numbers::pi * f.high_hz / sample_rate_hz);
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);

    // Low-pass prototype poles on the unit circle, left half plane.
    std::vector<cplx> analog_poles;
    for (int k = 0; k < n; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
        const cplx proto = std::exp(cplx(0.0, theta));
        // Low-pass -> band-pass: s -> (s^2 + w0^2) / (bw * s).
        const cplx term = 0.5 * bw * proto;
        const cplx disc = std::sqrt(term * term - w0 * w0);
        analog_poles.push_back(term + disc);
        analog_poles.push_back(term - disc);
    }
    // n analog zeros at s = 0, n at infinity; gain bw^n.
    const double k_analog = std::pow(bw, n);

    // Bilinear transform.
    std::vector<cplx> digital_poles, digital_zeros;
    cplx den_prod = 1.0;
    for (const auto& p : analog_poles) {
        digital_poles.push_back((fs2 + p) / (fs2 - p));
        den_prod *= fs2 - p;
    }
    for (int k = 0; k < n; ++k) digital_zeros.push_back(1.0);   // s = 0
    for (int k = 0; k < n; ++k) digital_zeros.push_back(-1.0);  // s = inf
    const double k_digital =
        k_analog * (std::pow(fs2, n) / den_prod).real();

    const std::vector<cplx> num = poly_from_roots(digital_zeros);
    const std::vector<cplx> den = poly_from_roots(digital_poles);
    FilterCoefficients out;
    for (const auto& c : num) out.b.push_back(k_digital * c.real());
    for (const auto& c : den) out.a.push_back(c.real());
    return out;
}

std::pair<Recording, std::vector<int>> remove_bad_channels(const Recording& rec) {
    rec.validate();
    std::vector<double> stds(rec.n_channels());
    for (int c = 0; c < rec.n_channels(); ++c) {
        const Eigen::VectorXd col = rec.samples.col(c).cast<double>();
        stds[c] = std::sqrt((col.array() - col.mean()).square().sum() /
                            static_cast<double>(col.size()));
    }
    std::vector<double> sorted = stds;
    const std::size_t mid = sorted.size() / 2;
    std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
    double median = sorted[mid];
    if (sorted.size() % 2 == 0) {
        std::nth_element(sorted.begin(), sorted.begin() + mid - 1,
                         sorted.begin() + mid);
        median = 0.5 * (median + sorted[mid - 1]);
    }

    std::vector<int> removed, kept;
    for (int c = 0; c < rec.n_channels(); ++c) {
        const bool bad = stds[c] == 0.0 ||
                         (median > 0.0 &&
                          (stds[c] > 5.0 * median || stds[c] < median / 5.0));
        (bad ? removed : kept).push_back(c);
    }
    if (kept.empty())
        throw std::runtime_error("remove_bad_channels: all channels removed");

    Recording out;
    out.sample_rate_hz = rec.sample_rate_hz;
    out.samples.resize(rec.n_frames(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        out.samples.col(i) = rec.samples.col(kept[i]);
        out.geometry.channel_positions.push_back(
            rec.geometry.channel_positions[kept[i]]);
    }
    return {std::move(out), std::move(removed)};
}

Recording bandpass(const Recording& rec, const FilterSpec& f) {
    rec.validate();
    const FilterCoefficients coeffs =
        design_butterworth_bandpass(f, rec.sample_rate_hz);

    // Odd-extension padding long enough to let the low-corner transient die
    // out before the retained segment.
    const std::int64_t n = rec.n_frames();
    const std::int64_t pad = std::min<std::int64_t>(
        n - 1, std::max<std::int64_t>(
                   3 * (static_cast<std::int64_t>(coeffs.a.size()) - 1),
                   static_cast<std::int64_t>(3.0 * rec.sample_rate_hz / f.low_hz)));

    Recording out = rec;
    std::vector<double> x(n + 2 * pad);
    for (int c = 0; c < rec.n_channels(); ++c) {
        for (std::int64_t i = 0; i < pad; ++i)
            x[i] = 2.0 * rec.samples(0, c) - rec.samples(pad - i, c);
        for (std::int64_t i = 0; i < n; ++i) x[pad + i] = rec.samples(i, c);
        for (std::int64_t i = 0; i < pad; ++i)
            x[pad + n + i] =
                2.0 * rec.samples(n - 1, c) - rec.samples(n - 2 - i, c);

        lfilter_inplace(coeffs, x);
        std::reverse(x.begin(), x.end());
        lfilter_inplace(coeffs, x);
        std::reverse(x.begin(), x.end());

        for (std::int64_t i = 0; i < n; ++i)
            out.samples(i, c) = static_cast<float>(x[pad + i]);
    }
    return out;
}

std::vector<SpikeEvent> detect(const Recording& rec, const DetectionSpec& d) {
    rec.validate();
    d.validate();

    std::vector<SpikeEvent> candidates;
    for (int c = 0; c < rec.n_channels(); ++c) {
        std::vector<double> col(rec.n_frames());
        for (std::int64_t i = 0; i < rec.n_frames(); ++i)
            col[i] = rec.samples(i, c);
        const double sigma = mad_sigma(col);
        // the absolute floor guards degenerate near-noiseless traces where
        // the MAD estimate collapses to ~0 and everything would cross
        const double thr = std::max(d.threshold_mads * sigma, d.min_amplitude_uv);

        const auto scan = [&](bool negative) {
            std::int64_t last_event = -1;
            for (std::int64_t t = 1; t < rec.n_frames(); ++t) {
                const bool crossing = negative
                                          ? (col[t] < -thr && col[t - 1] >= -thr)
                                          : (col[t] > thr && col[t - 1] <= thr);
                if (!crossing) continue;
                if (last_event >= 0 && t - last_event < d.refractory_samples)
                    continue;
                const std::int64_t hi =
                    std::min<std::int64_t>(rec.n_frames() - 1,
                                           t + d.peak_window_samples);
                std::int64_t peak = t;
                for (std::int64_t u = t; u <= hi; ++u)
                    if (negative ? (col[u] < col[peak]) : (col[u] > col[peak]))
                        peak = u;
                candidates.push_back({peak, c, col[peak]});
                last_event = peak;
                t = std::max(t, peak);
            }
        };
        if (d.polarity != Polarity::kPositive) scan(true);
        if (d.polarity != Polarity::kNegative) scan(false);
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const SpikeEvent& a, const SpikeEvent& b) {
                         if (a.frame != b.frame) return a.frame < b.frame;
                         return a.channel < b.channel;
                     });

    // Merge near-coincident events on spatially neighboring channels,
    // keeping the largest |amplitude|.
    std::vector<SpikeEvent> merged;
    for (const auto& ev : candidates) {
        bool absorbed = false;
        for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
            if (ev.frame - it->frame >= d.refractory_samples) break;
            if (rec.geometry.distance(ev.channel, it->channel) >
                d.merge_radius_um)
                continue;
            if (std::abs(ev.amplitude) > std::abs(it->amplitude)) *it = ev;
            absorbed = true;
            break;
        }
        if (!absorbed) merged.push_back(ev);
    }

    std::stable_sort(merged.begin(), merged.end(),
                     [](const SpikeEvent& a, const SpikeEvent& b) {
                         return a.frame < b.frame;
                     });
    return merged;
}

ExtractResult extract_snippets(const Recording& rec,
                               const std::vector<SpikeEvent>& events, int T,
                               int C) {
    rec.validate();
    if (T < 1 || T % 2 == 0 || C < 1 || C % 2 == 0)
        throw std::invalid_argument("extract: T and C must be odd and positive");
    if (C > rec.n_channels() ||
        static_cast<std::int64_t>(T) > rec.n_frames())
        throw std::invalid_argument("extract: window exceeds recording bounds");
    const int half = (T - 1) / 2;

    // Per peak channel: the C nearest channels, ascending distance, ties by
    // channel index.
    std::vector<std::vector<int>> neighbor_cache(rec.n_channels());
    const auto neighbors = [&](int peak) -> const std::vector<int>& {
        auto& cached = neighbor_cache[peak];
        if (!cached.empty()) return cached;
        std::vector<int> order(rec.n_channels());
        for (int c = 0; c < rec.n_channels(); ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double da = rec.geometry.distance(peak, a);
            const double db = rec.geometry.distance(peak, b);
            if (da != db) return da < db;
            return a < b;
        });
        order.resize(C);
        cached = std::move(order);
        return cached;
    };

    ExtractResult out;
    for (const auto& ev : events) {
        if (ev.frame - half < 0 || ev.frame + half >= rec.n_frames()) {
            ++out.n_dropped_edge;
            continue;
        }
        WaveformSnippet s;
        s.peak_channel_global = ev.channel;
        s.event_frame = ev.frame;
        s.values.resize(T, C);
        const auto& chans = neighbors(ev.channel);
        for (int j = 0; j < C; ++j)
            s.values.col(j) =
                rec.samples.col(chans[j]).segment(ev.frame - half, T);
        out.snippets.push_back(std::move(s));
    }
    return out;
}

}  // namespace spikerep
