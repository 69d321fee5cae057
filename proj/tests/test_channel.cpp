#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "milagro/channel.hpp"
#include "milagro/errors.hpp"
#include "milagro/harness.hpp"

using namespace milagro;
using channel::kSpeedOfLight;
using scene::Band;
using scene::Pose;
using scene::Scene;

namespace {

Scene bare_room(double x = 6.0, double y = 4.0, double z = 3.0) {
    Scene scn;
    scn.room_dims = {x, y, z};
    scn.psta.id = "psta";
    scn.psta.position = {4.0, 3.0, 1.5};
    scn.psta.band = Band::Sub7;
    scn.psta.carrier_freq_hz = 5.24e9;
    scene::RadioNode ap;
    ap.id = "ap";
    ap.position = {1.0, 1.0, 1.5};
    ap.band = Band::Sub7;
    ap.carrier_freq_hz = 5.24e9;
    scn.aps = {ap};
    return scn;
}

channel::PropagationPath straight_path(double length, double amplitude) {
    channel::PropagationPath p;
    p.vertices = {{0, 0, 0}, {length, 0, 0}};
    p.length_m = length;
    p.amplitude = amplitude;
    p.reflection_count = 0;
    return p;
}

}  // namespace

TEST_CASE("image method: wall count drives path count") {
    Scene scn = bare_room();  // no walls listed
    auto paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    CHECK(paths.size() == 1);  // LOS only

    scn.walls = scene::default_walls();
    paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    CHECK(paths.size() == 7);  // LOS + 4 walls + floor + ceiling

    int reflections = 0;
    for (const auto& p : paths) reflections += p.reflection_count;
    CHECK(reflections == 6);

    for (const auto& p : paths) {
        CHECK(p.amplitude > 0.0);
        CHECK(p.length_m >= distance(scn.aps[0].position, scn.psta.position) - 1e-12);
    }
}

TEST_CASE("reflection path lengths equal brute-force mirror construction") {
    Scene scn = bare_room(3.0, 4.0, 3.0);
    scn.aps[0].position = {0.5, 0.5, 1.5};
    scn.psta.position = {2.5, 3.5, 1.5};
    scn.walls = scene::default_walls();
    const auto paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);

    // independent oracle: mirror tx across each boundary plane by hand
    const Vec3 tx = scn.aps[0].position, rx = scn.psta.position;
    const Vec3 room = scn.room_dims;
    std::vector<double> expected = {distance(tx, rx)};
    const Vec3 mirrors[6] = {{-tx.x, tx.y, tx.z},
                             {2 * room.x - tx.x, tx.y, tx.z},
                             {tx.x, -tx.y, tx.z},
                             {tx.x, 2 * room.y - tx.y, tx.z},
                             {tx.x, tx.y, -tx.z},
                             {tx.x, tx.y, 2 * room.z - tx.z}};
    for (const auto& img : mirrors) expected.push_back(distance(img, rx));
    std::sort(expected.begin(), expected.end());

    std::vector<double> got;
    for (const auto& p : paths) got.push_back(p.length_m);
    std::sort(got.begin(), got.end());
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("reciprocity: swapping tx and rx preserves the length multiset") {
    Scene scn = bare_room();
    scn.walls = scene::default_walls();
    scene::Target t;
    t.id = "t";
    t.position = {2.5, 2.0, 0.02};
    t.pose = Pose::Stand;
    scn.targets = {t};

    const auto fwd = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    scene::RadioNode rx_as_tx = scn.psta;
    rx_as_tx.band = scn.aps[0].band;
    rx_as_tx.carrier_freq_hz = scn.aps[0].carrier_freq_hz;
    const auto rev = channel::enumerate_paths(scn, rx_as_tx, scn.aps[0]);

    REQUIRE(fwd.size() == rev.size());
    std::vector<double> a, b;
    for (const auto& p : fwd) a.push_back(p.length_m);
    for (const auto& p : rev) b.push_back(p.length_m);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("30 dB of blockage scales the LOS amplitude by exactly 10^-1.5") {
    Scene scn = bare_room();
    const auto clean = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    REQUIRE(clean.size() == 1);

    scene::Target t;
    t.id = "blocker";
    t.position = {2.5, 2.0, 0.02};  // on the LOS segment
    t.pose = Pose::Stand;
    t.penetration_db = {30.0, 60.0};
    scn.targets = {t};
    const auto blocked = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    REQUIRE(blocked.size() == 1);
    CHECK(blocked[0].excess_blockage_db == doctest::Approx(30.0));
    CHECK(blocked[0].amplitude ==
          doctest::Approx(clean[0].amplitude * std::pow(10.0, -1.5)).epsilon(1e-12));
}

TEST_CASE("channel response phase identities") {
    const double f = 5.24e9;
    const double lambda = kSpeedOfLight / f;

    auto h1 = channel::response_at({straight_path(lambda, 1.0)}, {f});
    CHECK(h1[0].real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(h1[0].imag()) < 1e-9);

    auto h2 = channel::response_at({straight_path(lambda / 2.0, 1.0)}, {f});
    CHECK(h2[0].real() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(h2[0].imag()) < 1e-9);

    // two equal-amplitude paths half a wavelength apart cancel
    auto h3 = channel::response_at(
        {straight_path(10.0 * lambda, 0.7), straight_path(10.5 * lambda, 0.7)}, {f});
    CHECK(std::abs(h3[0]) < 1e-9);
}

TEST_CASE("channel response is linear in path amplitudes") {
    const double f = 5.24e9;
    std::vector<channel::PropagationPath> paths = {straight_path(3.0, 0.01),
                                                   straight_path(4.7, 0.004)};
    const auto base = channel::response_at(paths, {f, f + 1e6});
    for (auto& p : paths) p.amplitude *= 3.5;
    const auto scaled = channel::response_at(paths, {f, f + 1e6});
    for (std::size_t k = 0; k < base.size(); ++k)
        CHECK(std::abs(scaled[k] - 3.5 * base[k]) < 1e-15);
}

TEST_CASE("free-space decay: |H| halves when distance doubles") {
    Scene scn = bare_room(20.0, 6.0, 3.0);  // LOS only, no walls
    scn.aps[0].position = {1.0, 3.0, 1.5};
    scn.psta.position = {3.0, 3.0, 1.5};  // d = 2
    const auto near_paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    scn.psta.position = {5.0, 3.0, 1.5};  // d = 4
    const auto far_paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);

    const auto h_near = channel::response_at(near_paths, {5.24e9});
    const auto h_far = channel::response_at(far_paths, {5.24e9});
    const double ratio = std::abs(h_near[0]) / std::abs(h_far[0]);
    CHECK(std::abs(ratio - 2.0) < 1e-9);
}

TEST_CASE("beacon subcarriers: 52 carriers spanning 20 MHz around the carrier") {
    const auto freqs = channel::beacon_subcarrier_freqs(5.24e9);
    REQUIRE(freqs.size() == 52);
    CHECK(freqs[1] - freqs[0] == doctest::Approx(312.5e3));
    CHECK(freqs.back() - freqs.front() == doctest::Approx(51 * 312.5e3));
    CHECK((freqs.front() + freqs.back()) / 2.0 == doctest::Approx(5.24e9));
}

TEST_CASE("noiseless static capture has identical beacon rows") {
    Scene scn = bare_room();
    scn.walls = scene::default_walls();
    channel::NoiseModel noise;
    noise.enabled = false;
    const auto cap = channel::simulate_beacon_csi(scn, scn.aps[0], noise, {}, 10, 1);
    REQUIRE(cap.n_beacons == 10);
    REQUIRE(cap.n_subcarriers == 52);
    for (std::size_t b = 1; b < 10; ++b)
        for (std::size_t k = 0; k < 52; ++k) CHECK(cap.at(b, k) == cap.at(0, k));
    for (std::size_t b = 1; b < 10; ++b) CHECK(cap.timestamps_s[b] > cap.timestamps_s[b - 1]);
}

TEST_CASE("beacon capture determinism and empirical SNR") {
    Scene scn = bare_room();
    scn.walls = scene::default_walls();
    channel::NoiseModel noise;
    noise.snr_target_db = 20.0;

    const auto a = channel::simulate_beacon_csi(scn, scn.aps[0], noise, {}, 50, 99);
    const auto b = channel::simulate_beacon_csi(scn, scn.aps[0], noise, {}, 50, 99);
    REQUIRE(a.beacons.size() == b.beacons.size());
    for (std::size_t i = 0; i < a.beacons.size(); ++i) CHECK(a.beacons[i] == b.beacons[i]);

    // recompute SNR from the generated signal vs the injected noise
    const auto paths = channel::enumerate_paths(scn, scn.aps[0], scn.psta);
    const auto h = channel::response_at(
        paths, channel::beacon_subcarrier_freqs(scn.aps[0].carrier_freq_hz));
    const auto cap = channel::simulate_beacon_csi(scn, scn.aps[0], noise, {}, 1000, 7);
    double sig = 0.0;
    for (const auto& v : h) sig += std::norm(v);
    double mean_snr_db = 0.0;
    for (std::size_t bcn = 0; bcn < cap.n_beacons; ++bcn) {
        double noise_pow = 0.0;
        for (std::size_t k = 0; k < 52; ++k) noise_pow += std::norm(cap.at(bcn, k) - h[k]);
        mean_snr_db += 10.0 * std::log10(sig / noise_pow);
    }
    mean_snr_db /= static_cast<double>(cap.n_beacons);
    CHECK(std::abs(mean_snr_db - 20.0) < 0.5);
    CHECK(std::abs(cap.mean_snr_db() - 20.0) < 0.5);
}

TEST_CASE("beacon drops and jitter honor the traffic load") {
    Scene scn = bare_room();
    channel::TrafficLoad load = channel::TrafficLoad::preset(channel::TrafficLoad::Level::High);
    channel::NoiseModel noise;
    const auto cap = channel::simulate_beacon_csi(scn, scn.aps[0], noise, load, 100, 3);
    CHECK(cap.n_beacons == 100);
    // with drops the last collected slot index exceeds the beacon count
    CHECK(cap.timestamps_s.back() > 99 * scn.aps[0].beacon_interval_s * 1.01);
}

TEST_CASE("awv codebook angles and phases") {
    scene::AntennaArray array;
    array.rows = array.cols = 6;
    array.boresight = {1.0, 0.0, 0.0};
    const double f = 60.48e9;
    const auto book = channel::awv_codebook(array, 64, 60.0, f);
    REQUIRE(book.size() == 64);
    CHECK(book.front().steering_angle_deg == doctest::Approx(-30.0));
    CHECK(book.back().steering_angle_deg == doctest::Approx(30.0));
    const double step = book[1].steering_angle_deg - book[0].steering_angle_deg;
    for (std::size_t i = 1; i < 64; ++i)
        CHECK(book[i].steering_angle_deg - book[i - 1].steering_angle_deg ==
              doctest::Approx(step).epsilon(1e-9));

    // broadside AWV of a planar array: all phases equal
    const auto mid = book[31].steering_angle_deg < 1e-9 && book[31].steering_angle_deg > -1e-9
                         ? book[31]
                         : channel::awv_codebook(array, 3, 60.0, f)[1];  // exact 0 degrees
    for (const auto& [amp, phase] : mid.weights) {
        CHECK(amp == 1.0);
        CHECK(std::abs(phase - mid.weights[0].second) < 1e-9);
    }

    // matched steering reaches the full coherent sum
    for (const auto& awv : {book[0], book[20], book[63]}) {
        const Vec3 dir = rotate_z(array.boresight, awv.steering_angle_deg * M_PI / 180.0);
        CHECK(std::abs(channel::beam_gain(awv, array, dir, f)) ==
              doctest::Approx(36.0).epsilon(1e-9));
    }
}

TEST_CASE("beam gain: single element is direction-independent") {
    scene::AntennaArray single;
    single.rows = single.cols = 1;
    channel::AwvConfig awv;
    awv.weights = {{0.8, 0.3}};
    const auto g1 = channel::beam_gain(awv, single, {1, 0, 0}, 60.48e9);
    const auto g2 = channel::beam_gain(awv, single, {0, 1, 0}, 60.48e9);
    CHECK(std::abs(g1 - g2) < 1e-12);
    CHECK(std::abs(g1) == doctest::Approx(0.8));
}

TEST_CASE("uniform line array nulls sit at the analytic positions") {
    scene::AntennaArray line;
    line.rows = 1;
    line.cols = 6;
    line.boresight = {1.0, 0.0, 0.0};
    const double f = 60.48e9;
    const auto book = channel::awv_codebook(line, 3, 60.0, f);
    const auto& broadside = book[1];  // steered to 0 degrees

    // elements along y with lambda/2 spacing: nulls where sin(theta) = k/3
    for (double s : {1.0 / 3.0, 2.0 / 3.0}) {
        const double theta = std::asin(s);
        const Vec3 dir{std::cos(theta), std::sin(theta), 0.0};
        CHECK(std::abs(channel::beam_gain(broadside, line, dir, f)) < 1e-9);
    }
    // numeric scan confirms those are minima, not accidental zeros
    double prev = std::abs(channel::beam_gain(broadside, line,
                                              {std::cos(0.33), std::sin(0.33), 0.0}, f));
    CHECK(prev < 1.0);
    CHECK(std::abs(channel::beam_gain(broadside, line, {1, 0, 0}, f)) ==
          doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("fpbt sweep: matched beam dominates and blockage dents it") {
    auto sc = harness::make_losnlos(3.0, "los", 4);
    Scene scn = sc.base_scene;
    const auto* mm = scn.ap_for_band(Band::MmWave);
    channel::NoiseModel clean;
    clean.enabled = false;
    channel::FpbtConfig cfg;
    cfg.fail_prob = 0.0;

    const auto sweep = channel::simulate_fpbt_sweep(scn, *mm, clean, 5, cfg);
    REQUIRE(sweep.n_awv == 64);
    REQUIRE(sweep.n_time_samples == 3000);
    REQUIRE(!sweep.failed);

    // strongest AWV should steer close to the LOS direction (0 degrees here)
    std::size_t best_awv = 0;
    double best_pow = -1.0;
    for (std::size_t a = 0; a < sweep.n_awv; ++a) {
        double peak = 0.0;
        for (std::size_t s = 0; s < sweep.n_time_samples; ++s)
            peak = std::max(peak, sweep.pdp_at(a, s));
        if (peak > best_pow) {
            best_pow = peak;
            best_awv = a;
        }
    }
    CHECK(std::abs(sweep.awvs[best_awv].steering_angle_deg) < 3.0);

    // a 30 dB body on the LOS drops that AWV's LOS tap by ~30 dB
    scene::Target t;
    t.id = "b";
    t.position = {1.0 + 1.5, 2.0, 0.02};
    t.pose = Pose::Stand;
    t.penetration_db = {10.0, 30.0};
    Scene blocked_scene = scn;
    blocked_scene.targets = {t};
    const auto blocked = channel::simulate_fpbt_sweep(blocked_scene, *mm, clean, 5, cfg);

    std::size_t los_tap_sample = 0;
    double peak = 0.0;
    for (std::size_t s = 0; s < sweep.n_time_samples; ++s)
        if (sweep.pdp_at(best_awv, s) > peak) {
            peak = sweep.pdp_at(best_awv, s);
            los_tap_sample = s;
        }
    const double drop_db = 10.0 * std::log10(sweep.pdp_at(best_awv, los_tap_sample) /
                                             blocked.pdp_at(best_awv, los_tap_sample));
    CHECK(drop_db == doctest::Approx(30.0).epsilon(0.02));
}

TEST_CASE("fpbt failure flag rate matches its probability") {
    auto sc = harness::make_losnlos(2.0, "los", 4);
    Scene scn = sc.base_scene;
    const auto* mm = scn.ap_for_band(Band::MmWave);
    channel::NoiseModel noise;
    channel::FpbtConfig cfg;
    cfg.n_awv = 2;
    cfg.n_time_samples = 8;
    cfg.n_taps = 8;
    cfg.fail_prob = 0.02;
    int failed = 0;
    for (std::uint64_t s = 0; s < 10000; ++s)
        if (channel::simulate_fpbt_sweep(scn, *mm, noise, s, cfg).failed) ++failed;
    const double rate = failed / 10000.0;
    CHECK(std::abs(rate - 0.02) < 0.005);
}

TEST_CASE("fpbt determinism and absent-target invariance") {
    auto sc = harness::make_losnlos(2.0, "los", 4);
    Scene scn = sc.base_scene;
    const auto* mm = scn.ap_for_band(Band::MmWave);
    channel::NoiseModel noise;
    channel::FpbtConfig cfg;
    cfg.n_awv = 8;
    cfg.n_time_samples = 64;
    cfg.fail_prob = 0.0;

    const auto a = channel::simulate_fpbt_sweep(scn, *mm, noise, 11, cfg);
    const auto b = channel::simulate_fpbt_sweep(scn, *mm, noise, 11, cfg);
    REQUIRE(a.pdp.size() == b.pdp.size());
    for (std::size_t i = 0; i < a.pdp.size(); ++i) CHECK(a.pdp[i] == b.pdp[i]);

    scene::Target ghost;
    ghost.id = "ghost";
    ghost.position = {2.0, 2.0, 0.02};
    ghost.pose = Pose::Absent;
    Scene with_ghost = scn;
    with_ghost.targets.push_back(ghost);
    const auto c = channel::simulate_fpbt_sweep(with_ghost, *mm, noise, 11, cfg);
    for (std::size_t i = 0; i < a.pdp.size(); ++i) CHECK(a.pdp[i] == c.pdp[i]);

    const auto sub7_cap_a =
        channel::simulate_beacon_csi(scn, *scn.ap_for_band(Band::Sub7), noise, {}, 20, 4);
    const auto sub7_cap_b = channel::simulate_beacon_csi(
        with_ghost, *with_ghost.ap_for_band(Band::Sub7), noise, {}, 20, 4);
    for (std::size_t i = 0; i < sub7_cap_a.beacons.size(); ++i)
        CHECK(sub7_cap_a.beacons[i] == sub7_cap_b.beacons[i]);
}

TEST_CASE("degenerate geometry raises") {
    Scene scn = bare_room();
    scene::RadioNode same = scn.aps[0];
    CHECK_THROWS_AS(channel::enumerate_paths(scn, scn.aps[0], same), DegenerateGeometry);
}
