#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "milagro/scene.hpp"

namespace milagro::channel {

using scene::AntennaArray;
using scene::Band;
using scene::RadioNode;
using scene::Scene;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kBeaconSubcarriers = 52;
inline constexpr double kBeaconSubcarrierSpacingHz = 312.5e3;  // 20 MHz / 64
inline constexpr double kFpbtBandwidthHz = 2.16e9;

struct PropagationPath {
    std::vector<Vec3> vertices;  // tx, [reflection point], rx
    double length_m = 0.0;
    double amplitude = 0.0;  // linear, Friis x reflection x blockage
    double excess_blockage_db = 0.0;
    int reflection_count = 0;

    Vec3 departure_direction() const { return normalized(vertices[1] - vertices[0]); }
};

struct ChannelResponse {
    std::vector<std::complex<double>> h;  // (n_rx, n_tx, n_subcarriers) row-major
    std::size_t n_rx = 1, n_tx = 1, n_subcarriers = 0;
    double carrier_freq_hz = 0.0;
    double subcarrier_spacing_hz = 0.0;

    std::complex<double> at(std::size_t rx, std::size_t tx, std::size_t k) const {
        return h[(rx * n_tx + tx) * n_subcarriers + k];
    }
};

struct CsiCapture {
    std::size_t n_beacons = 0;
    std::size_t n_subcarriers = 0;
    std::vector<std::complex<double>> beacons;  // (n_beacons x n_subcarriers)
    std::vector<double> timestamps_s;           // strictly increasing
    std::string source_ap;
    std::vector<double> snr_db;  // realized per-beacon SNR

    std::complex<double> at(std::size_t b, std::size_t k) const {
        return beacons[b * n_subcarriers + k];
    }
    double mean_snr_db() const;
};

struct AwvConfig {
    std::vector<std::pair<double, double>> weights;  // (amplitude, phase) per element
    double steering_angle_deg = 0.0;
};

struct FpbtCapture {
    std::size_t n_awv = 0;
    std::size_t n_time_samples = 0;
    std::size_t n_taps = 0;
    std::vector<float> pdp;                   // (n_awv x n_time_samples), linear power
    std::vector<std::complex<double>> iq;     // (n_awv x n_taps)
    std::vector<float> tap_snr_db;            // (n_awv x n_taps)
    std::vector<AwvConfig> awvs;
    bool failed = false;
    double noise_floor = 0.0;  // linear power per complex sample

    double pdp_at(std::size_t a, std::size_t s) const { return pdp[a * n_time_samples + s]; }
    double mean_snr_db() const;  // mean over AWVs of the strongest-tap SNR
};

struct NoiseModel {
    double snr_target_db = 15.0;
    bool enabled = true;
    std::uint64_t seed = 0;
};

struct TrafficLoad {
    enum class Level { Low, Mid, High };
    Level level = Level::Low;
    double beacon_jitter_std_s = 0.002;
    double beacon_drop_prob = 0.0;

    static TrafficLoad preset(Level lv) {
        switch (lv) {
            case Level::Low: return {lv, 0.002, 0.0};
            case Level::Mid: return {lv, 0.010, 0.05};
            case Level::High: return {lv, 0.025, 0.15};
        }
        return {};
    }
};

struct FpbtConfig {
    int n_awv = 64;
    double sweep_width_deg = 60.0;
    int n_time_samples = 3000;
    int n_taps = 512;
    double fail_prob = 0.02;
};

// ---------------------------------------------------------------------------
// Operations

// LOS plus all first-order wall reflections (image method). Paths whose
// amplitude vanishes (zero reflection coefficient) are omitted.
std::vector<PropagationPath> enumerate_paths(const Scene& scn, const RadioNode& tx,
                                             const RadioNode& rx);

// H(f) = sum_i A_i exp(j 2 pi d_i / lambda(f)), lambda evaluated per frequency.
std::vector<std::complex<double>> response_at(const std::vector<PropagationPath>& paths,
                                              const std::vector<double>& freqs_hz);

// Single-antenna-pair response on the beacon subcarrier grid.
ChannelResponse channel_response(const std::vector<PropagationPath>& paths,
                                 double carrier_freq_hz, std::size_t n_subcarriers,
                                 double subcarrier_spacing_hz);

// Subcarrier frequencies centered on the carrier.
std::vector<double> beacon_subcarrier_freqs(double carrier_freq_hz,
                                            std::size_t n_subcarriers = 52,
                                            double spacing_hz = kBeaconSubcarrierSpacingHz);

CsiCapture simulate_beacon_csi(const Scene& scn, const RadioNode& ap, const NoiseModel& noise,
                               const TrafficLoad& load, std::size_t n_beacons,
                               std::uint64_t seed);

// Progressive-phase steering vectors, angles spanning [-sweep/2, +sweep/2]
// around boresight (azimuth rotation).
std::vector<AwvConfig> awv_codebook(const AntennaArray& array, int n_awv,
                                    double sweep_width_deg, double freq_hz);

// Element positions of the array local frame, centered on the array origin.
std::vector<Vec3> element_positions(const AntennaArray& array, double freq_hz);

std::complex<double> beam_gain(const AwvConfig& awv, const AntennaArray& array,
                               const Vec3& direction, double freq_hz);

FpbtCapture simulate_fpbt_sweep(const Scene& scn, const RadioNode& ap, const NoiseModel& noise,
                                std::uint64_t seed, const FpbtConfig& cfg = {});

// Noise floor (linear power per sample) implied by a target SNR; the
// reference level is a fully steered 1 m line-of-sight tap.
double fpbt_noise_floor(const RadioNode& ap, const NoiseModel& noise);

}  // namespace milagro::channel
