#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "milagro/dsp.hpp"
#include "milagro/errors.hpp"
#include "milagro/rng.hpp"

using namespace milagro;

namespace {

channel::CsiCapture make_capture(std::size_t beacons, std::size_t subcarriers) {
    channel::CsiCapture cap;
    cap.n_beacons = beacons;
    cap.n_subcarriers = subcarriers;
    cap.beacons.assign(beacons * subcarriers, {0.0, 0.0});
    for (std::size_t b = 0; b < beacons; ++b) cap.timestamps_s.push_back(0.1 * b);
    cap.snr_db.assign(beacons, 20.0);
    return cap;
}

channel::FpbtCapture make_sweep(std::size_t awvs, std::size_t samples) {
    channel::FpbtCapture cap;
    cap.n_awv = awvs;
    cap.n_time_samples = samples;
    cap.n_taps = 4;
    cap.pdp.assign(awvs * samples, 0.0f);
    cap.iq.assign(awvs * 4, {0.0, 0.0});
    cap.tap_snr_db.assign(awvs * 4, -300.0f);
    return cap;
}

}  // namespace

TEST_CASE("csi_to_features: real/imag split and window selection") {
    auto cap = make_capture(5, 3);
    cap.beacons[1 * 3 + 2] = {3.0, 4.0};
    const auto t = dsp::csi_to_features(cap, 5);
    REQUIRE(t.shape == std::vector<std::size_t>({2, 5, 3}));
    CHECK(t.data[1 * 3 + 2] == 3.0f);             // channel 0 = real
    CHECK(t.data[5 * 3 + 1 * 3 + 2] == 4.0f);     // channel 1 = imaginary

    // most recent `window` beacons are used
    auto cap2 = make_capture(6, 2);
    for (std::size_t b = 0; b < 6; ++b)
        for (std::size_t k = 0; k < 2; ++k) cap2.beacons[b * 2 + k] = {double(b), 0.0};
    const auto t2 = dsp::csi_to_features(cap2, 4);
    CHECK(t2.data[0] == 2.0f);  // first kept beacon is index 2

    CHECK_THROWS_AS(dsp::csi_to_features(make_capture(3, 2), 4), InsufficientBeacons);
}

TEST_CASE("csi_to_features: all-zero capture and time-invariance") {
    const auto t = dsp::csi_to_features(make_capture(4, 3), 4);
    for (float v : t.data) CHECK(v == 0.0f);

    auto cap = make_capture(4, 3);
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t k = 0; k < 3; ++k) cap.beacons[b * 3 + k] = {1.5, -0.5};
    const auto tt = dsp::csi_to_features(cap, 4);
    for (std::size_t b = 1; b < 4; ++b)
        for (std::size_t k = 0; k < 3; ++k) CHECK(tt.data[b * 3 + k] == tt.data[k]);
}

TEST_CASE("conjugating the CSI negates channel 1 and preserves channel 0") {
    Rng rng(5);
    auto cap = make_capture(6, 4);
    for (auto& v : cap.beacons) v = {rng.gaussian(), rng.gaussian()};
    auto conj = cap;
    for (auto& v : conj.beacons) v = std::conj(v);

    const auto a = dsp::csi_to_features(cap, 6);
    const auto b = dsp::csi_to_features(conj, 6);
    const std::size_t half = 6 * 4;
    for (std::size_t i = 0; i < half; ++i) {
        CHECK(b.data[i] == a.data[i]);
        CHECK(b.data[half + i] == -a.data[half + i]);
    }
}

TEST_CASE("pdp_features: floor, dB of one, monotonicity") {
    auto cap = make_sweep(8, 16);
    const auto zero = dsp::pdp_features(cap);
    for (float v : zero.data) CHECK(v == -120.0f);

    cap.pdp[5 * 16 + 10] = 1.0f;
    const auto t = dsp::pdp_features(cap);
    CHECK(t.data[5 * 16 + 10] == 0.0f);
    CHECK(t.data[0] == -120.0f);

    auto cap2 = make_sweep(1, 4);
    cap2.pdp = {1e-3f, 2e-3f, 1.0f, 2.0f};
    const auto t2 = dsp::pdp_features(cap2);
    CHECK(t2.data[1] - t2.data[0] == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-4));
    CHECK(t2.data[3] - t2.data[2] == doctest::Approx(3.0103).epsilon(1e-3));

    // pointwise monotone
    Rng rng(17);
    auto lo = make_sweep(3, 10);
    for (auto& v : lo.pdp) v = static_cast<float>(std::abs(rng.gaussian()));
    auto hi = lo;
    for (auto& v : hi.pdp) v *= 1.7f;
    const auto flo = dsp::pdp_features(lo);
    const auto fhi = dsp::pdp_features(hi);
    for (std::size_t i = 0; i < flo.data.size(); ++i) CHECK(fhi.data[i] >= flo.data[i]);

    auto failed = make_sweep(2, 4);
    failed.failed = true;
    CHECK_THROWS_AS(dsp::pdp_features(failed), FailedCapture);
}

TEST_CASE("downsample_time averages non-overlapping windows") {
    dsp::FeatureTensor t;
    t.layout = dsp::FeatureLayout::MmWave;
    t.shape = {2, 6};
    t.data = {1, 1, 2, 2, 3, 3, 10, 20, 30, 40, 50, 60};
    const auto d = dsp::downsample_time(t, 2);
    REQUIRE(d.shape == std::vector<std::size_t>({2, 3}));
    CHECK(d.data[0] == 1.0f);
    CHECK(d.data[1] == 2.0f);
    CHECK(d.data[2] == 3.0f);
    CHECK(d.data[3] == 15.0f);

    // trailing remainder dropped
    dsp::FeatureTensor odd;
    odd.layout = dsp::FeatureLayout::MmWave;
    odd.shape = {1, 5};
    odd.data = {2, 4, 6, 8, 100};
    const auto d2 = dsp::downsample_time(odd, 2);
    REQUIRE(d2.shape == std::vector<std::size_t>({1, 2}));
    CHECK(d2.data[0] == 3.0f);
    CHECK(d2.data[1] == 7.0f);

    // sub7 pools along the beacon axis only
    dsp::FeatureTensor s7;
    s7.layout = dsp::FeatureLayout::Sub7;
    s7.shape = {1, 4, 2};
    s7.data = {1, 10, 3, 30, 5, 50, 7, 70};
    const auto d3 = dsp::downsample_time(s7, 2);
    REQUIRE(d3.shape == std::vector<std::size_t>({1, 2, 2}));
    CHECK(d3.data[0] == 2.0f);
    CHECK(d3.data[1] == 20.0f);
    CHECK(d3.data[2] == 6.0f);
    CHECK(d3.data[3] == 60.0f);
}

TEST_CASE("quality_filter: empty, failed rule, SNR recheck oracle") {
    const auto empty = dsp::quality_filter_fpbt({}, 5.0);
    CHECK(empty.kept_indices.empty());
    CHECK(empty.dropped == 0);

    auto failed = make_sweep(2, 4);
    failed.failed = true;
    const auto r1 = dsp::quality_filter_fpbt({failed}, -100.0);
    CHECK(r1.kept_indices.empty());
    CHECK(r1.dropped == 1);

    // mixed CSI list: recompute each capture's mean SNR independently
    Rng rng(3);
    std::vector<channel::CsiCapture> caps;
    for (int i = 0; i < 8; ++i) {
        auto cap = make_capture(4, 3);
        for (auto& s : cap.snr_db) s = rng.uniform(-5.0, 15.0);
        caps.push_back(cap);
    }
    const double thr = 5.0;
    const auto rep = dsp::quality_filter_csi(caps, thr);
    std::vector<std::size_t> expect_kept;
    for (std::size_t i = 0; i < caps.size(); ++i) {
        double mean = 0.0;
        for (double s : caps[i].snr_db) mean += s;
        mean /= static_cast<double>(caps[i].snr_db.size());
        if (mean >= thr) expect_kept.push_back(i);
    }
    CHECK(rep.kept_indices == expect_kept);  // order preserved
    CHECK(rep.kept_indices.size() + rep.dropped == caps.size());
}

TEST_CASE("normalization: degenerate variance, recomputed moments, determinism") {
    dsp::FeatureTensor constant;
    constant.shape = {4};
    constant.data = {2.0f, 2.0f, 2.0f, 2.0f};
    const auto stats = dsp::fit_normalization({&constant});
    for (float s : stats.std) CHECK(s == dsp::kNormEpsilon);
    const auto normed = dsp::apply_normalization(constant, stats);
    for (float v : normed.data) CHECK(v == 0.0f);

    Rng rng(11);
    std::vector<dsp::FeatureTensor> tensors(64);
    for (auto& t : tensors) {
        t.shape = {6};
        for (int i = 0; i < 6; ++i)
            t.data.push_back(static_cast<float>(3.0 + 2.0 * rng.gaussian()));
    }
    std::vector<const dsp::FeatureTensor*> refs;
    for (const auto& t : tensors) refs.push_back(&t);
    const auto st = dsp::fit_normalization(refs);

    // after normalizing the training set: mean ~0, std ~1 per feature
    for (std::size_t f = 0; f < 6; ++f) {
        double mean = 0.0, sq = 0.0;
        for (const auto& t : tensors) {
            const double v = (t.data[f] - st.mean[f]) / st.std[f];
            mean += v;
            sq += v * v;
        }
        mean /= static_cast<double>(tensors.size());
        const double stddev =
            std::sqrt(std::max(0.0, sq / static_cast<double>(tensors.size()) - mean * mean));
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(stddev - 1.0) < 1e-4);
    }

    // fitting on A twice (A union A) changes nothing
    std::vector<const dsp::FeatureTensor*> doubled = refs;
    doubled.insert(doubled.end(), refs.begin(), refs.end());
    const auto st2 = dsp::fit_normalization(doubled);
    const auto a = dsp::apply_normalization(tensors[0], st);
    const auto b = dsp::apply_normalization(tensors[0], st2);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-6));

    CHECK_THROWS_AS(dsp::fit_normalization({}), EmptyTrainingSet);
}
