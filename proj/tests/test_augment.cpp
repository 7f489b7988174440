#include <doctest.h>

#include <cmath>

#include "spikerep/augment.hpp"

using namespace spikerep;

namespace {

Eigen::MatrixXd random_snippet(int T, int C, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd s(T, C);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) s(t, c) = 10.0 * rng.normal();
    return s;
}

AugmentSpec identity_spec(int C) {
    AugmentSpec spec;
    spec.voltage_jitter_lo = spec.voltage_jitter_hi = 1.0;
    spec.temporal_jitter_max = 0;
    spec.crop_channels = C;
    spec.collision_prob = 0.0;
    spec.noise_scale_lo = spec.noise_scale_hi = 0.0;
    return spec;
}

}  // namespace

TEST_CASE("identity jitter is the identity") {
    const auto s = random_snippet(31, 5, 1);
    Rng rng(0);
    CHECK(jitter(s, identity_spec(5), rng) == s);
}

TEST_CASE("degenerate gain range doubles every value") {
    const auto s = random_snippet(31, 5, 2);
    AugmentSpec spec = identity_spec(5);
    spec.voltage_jitter_lo = spec.voltage_jitter_hi = 2.0;
    Rng rng(0);
    CHECK((jitter(s, spec, rng) - 2.0 * s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("temporal shift moves a unique trough by the drawn amount") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(41, 3);
    s(20, 1) = -100.0;
    AugmentSpec spec = identity_spec(3);
    spec.temporal_jitter_max = 3;
    // find an rng state whose shift draw is +3
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng probe(seed);
        probe.uniform();  // gain draw
        if (probe.uniform_int(-3, 3) != 3) continue;
        Rng rng(seed);
        const Eigen::MatrixXd out = jitter(s, spec, rng);
        int trough = -1;
        out.col(1).minCoeff(&trough);
        CHECK(trough == 23);
        return;
    }
    FAIL("no seed with shift +3 found");
}

TEST_CASE("jitter rejects shifts too large for the window") {
    AugmentSpec spec = identity_spec(3);
    spec.temporal_jitter_max = 20;
    Rng rng(0);
    CHECK_THROWS(jitter(random_snippet(41, 3, 3), spec, rng));
}

TEST_CASE("full crop is the identity with an all-ones mask") {
    const auto s = random_snippet(31, 7, 4);
    Rng rng(0);
    const CropResult crop = channel_crop(s, 7, rng);
    CHECK(crop.values == s);
    CHECK(crop.mask.sum() == 7.0);
}

TEST_CASE("crop to one keeps only the peak channel") {
    const auto s = random_snippet(31, 7, 5);
    Rng rng(0);
    const CropResult crop = channel_crop(s, 1, rng);
    CHECK(crop.mask(0) == 1.0);
    CHECK(crop.mask.sum() == 1.0);
    CHECK(crop.values.col(0) == s.col(0));
    CHECK(crop.values.rightCols(6).isZero(0.0));
}

TEST_CASE("crop keeps exactly k channels including the peak") {
    const auto s = random_snippet(31, 21, 6);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const CropResult crop = channel_crop(s, 11, rng);
        CHECK(crop.mask.sum() == 11.0);
        CHECK(crop.mask(0) == 1.0);
        for (int c = 0; c < 21; ++c) {
            if (crop.mask(c) == 1.0)
                CHECK(crop.values.col(c) == s.col(c));
            else
                CHECK(crop.values.col(c).isZero(0.0));
        }
    }
}

TEST_CASE("crop is deterministic in the rng state") {
    const auto s = random_snippet(31, 9, 7);
    Rng a(55), b(55);
    const CropResult ca = channel_crop(s, 5, a);
    const CropResult cb = channel_crop(s, 5, b);
    CHECK(ca.values == cb.values);
    CHECK(ca.mask == cb.mask);
}

TEST_CASE("collision probability zero is the identity") {
    const auto s = random_snippet(31, 5, 8);
    AugmentSpec spec = identity_spec(5);
    Rng rng(0);
    CHECK(collide(s, {random_snippet(31, 5, 9)}, spec, rng) == s);
}

TEST_CASE("self collision with unit scale doubles the snippet") {
    const auto s = random_snippet(31, 5, 10);
    AugmentSpec spec = identity_spec(5);
    spec.collision_prob = 1.0;
    spec.collision_scale_lo = spec.collision_scale_hi = 1.0;
    spec.collision_offset_max = 0;
    Rng rng(0);
    CHECK((collide(s, {s}, spec, rng) - 2.0 * s).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero collision scale is the identity") {
    const auto s = random_snippet(31, 5, 11);
    AugmentSpec spec = identity_spec(5);
    spec.collision_prob = 1.0;
    spec.collision_scale_lo = spec.collision_scale_hi = 0.0;
    Rng rng(0);
    CHECK(collide(s, {random_snippet(31, 5, 12)}, spec, rng) == s);
}

TEST_CASE("empty donor pool is an error") {
    AugmentSpec spec = identity_spec(5);
    Rng rng(0);
    CHECK_THROWS(collide(random_snippet(31, 5, 13), {}, spec, rng));
}

TEST_CASE("zero noise scale is the identity") {
    const auto s = random_snippet(31, 5, 14);
    Rng rng(0);
    CHECK(correlated_noise(s, identity_spec(5), rng) == s);
}

TEST_CASE("added noise has the configured lag-1 autocorrelation") {
    // sample-autocorrelation oracle over ~1e4 samples
    const auto run = [](double phi) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2500, 4);
        s(0, 0) = 1.0;  // nonzero MAD floor comes from the scale range below
        AugmentSpec spec;
        spec.noise_ar_coeff = phi;
        spec.noise_scale_lo = spec.noise_scale_hi = 1.0;
        Rng rng(99);
        Eigen::MatrixXd noise = correlated_noise(s, spec, rng) - s;
        double num = 0.0, den = 0.0;
        for (int c = 0; c < noise.cols(); ++c) {
            const Eigen::VectorXd col =
                noise.col(c).array() - noise.col(c).mean();
            num += col.head(col.size() - 1).dot(col.tail(col.size() - 1));
            den += col.squaredNorm();
        }
        return num / den;
    };
    // MAD of the near-zero snippet is 0, so scale by hand: inject unit sigma
    // via a snippet whose MAD-sigma is nonzero.
    const auto run_with_base = [&](double phi) {
        Eigen::MatrixXd s = random_snippet(2500, 4, 15);
        AugmentSpec spec;
        spec.noise_ar_coeff = phi;
        spec.noise_scale_lo = spec.noise_scale_hi = 1.0;
        Rng rng(99);
        const Eigen::MatrixXd noise = correlated_noise(s, spec, rng) - s;
        double num = 0.0, den = 0.0;
        for (int c = 0; c < noise.cols(); ++c) {
            const Eigen::VectorXd col =
                noise.col(c).array() - noise.col(c).mean();
            num += col.head(col.size() - 1).dot(col.tail(col.size() - 1));
            den += col.squaredNorm();
        }
        return num / den;
    };
    (void)run;
    CHECK(std::abs(run_with_base(0.0)) < 0.05);
    const double rho = run_with_base(0.9);
    CHECK(rho >= 0.85);
    CHECK(rho <= 0.95);
}

TEST_CASE("all-identity spec reproduces the snippet in every view") {
    const auto s = random_snippet(31, 5, 16);
    Rng rng(7);
    const ViewPair vp = make_view_pair(s, {s}, identity_spec(5), rng);
    CHECK(vp.view1 == s);
    CHECK(vp.view2 == s);
    CHECK(vp.clean == s);
    CHECK(vp.mask1.sum() == 5.0);
    CHECK(vp.mask2.sum() == 5.0);
}

TEST_CASE("noise-only spec perturbs view1 but not view2") {
    const auto s = random_snippet(31, 5, 17);
    AugmentSpec spec = identity_spec(5);
    spec.noise_scale_lo = spec.noise_scale_hi = 1.0;
    Rng rng(7);
    const ViewPair vp = make_view_pair(s, {s}, spec, rng);
    CHECK(vp.view2 == s);
    CHECK(vp.clean == s);
    CHECK(vp.view1 != s);
    CHECK(vp.view1.allFinite());
}

TEST_CASE("view pairs are deterministic in the rng seed") {
    const auto s = random_snippet(121, 21, 18);
    const std::vector<Eigen::MatrixXd> donors{random_snippet(121, 21, 19),
                                              random_snippet(121, 21, 20)};
    AugmentSpec spec;  // defaults
    Rng a(123), b(123);
    const ViewPair va = make_view_pair(s, donors, spec, a);
    const ViewPair vb = make_view_pair(s, donors, spec, b);
    CHECK(va.view1 == vb.view1);
    CHECK(va.view2 == vb.view2);
    CHECK(va.clean == vb.clean);
    CHECK(va.mask1 == vb.mask1);
}

TEST_CASE("augmented views stay finite and keep the snippet shape") {
    const auto s = random_snippet(121, 21, 21);
    const std::vector<Eigen::MatrixXd> donors{random_snippet(121, 21, 22)};
    AugmentSpec spec;  // defaults
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const ViewPair vp = make_view_pair(s, donors, spec, rng);
        CHECK(vp.view1.rows() == 121);
        CHECK(vp.view1.cols() == 21);
        CHECK(vp.view2.rows() == 121);
        CHECK(vp.view2.cols() == 21);
        CHECK(vp.view1.allFinite());
        CHECK(vp.view2.allFinite());
        CHECK(vp.clean.allFinite());
        // masked channels are exactly zero
        for (int c = 0; c < 21; ++c)
            if (vp.mask1(c) == 0.0) CHECK(vp.view1.col(c).isZero(0.0));
    }
}

TEST_CASE("mean jitter gain estimates the configured midpoint") {
    AugmentSpec spec;  // defaults: gain in (0.9, 1.1)
    Rng rng(77);
    const Eigen::MatrixXd s = Eigen::MatrixXd::Constant(11, 1, 1.0);
    double total = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        AugmentSpec no_shift = spec;
        no_shift.temporal_jitter_max = 0;
        total += jitter(s, no_shift, rng)(5, 0);
    }
    CHECK(total / n == doctest::Approx(1.0).epsilon(0.02));
}
