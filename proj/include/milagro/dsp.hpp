#pragma once

#include <cstddef>
#include <vector>

#include "milagro/channel.hpp"

namespace milagro::dsp {

enum class FeatureLayout { Sub7, MmWave };

// Model-ready array. Sub7 is (2 x beacons x subcarriers) with channel 0 = real,
// channel 1 = imaginary; MmWave is (awvs x samples) in dB.
struct FeatureTensor {
    FeatureLayout layout = FeatureLayout::Sub7;
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t size() const { return data.size(); }
};

struct NormStats {
    std::vector<float> mean;
    std::vector<float> std;  // floored at kNormEpsilon
};

inline constexpr float kNormEpsilon = 1e-6f;
inline constexpr float kPdpFloorDb = -120.0f;

// Most recent `window` beacons split into real/imag channels.
FeatureTensor csi_to_features(const channel::CsiCapture& cap, std::size_t window = 100);

// (n_awv x n_time_samples) received power in dB, floored at -120 dB.
FeatureTensor pdp_features(const channel::FpbtCapture& cap);

// Average-pool along the time axis (beacons for Sub7, samples for MmWave).
// A trailing remainder shorter than `factor` is dropped.
FeatureTensor downsample_time(const FeatureTensor& t, std::size_t factor);

struct FilterReport {
    std::vector<std::size_t> kept_indices;
    std::size_t dropped = 0;
};

FilterReport quality_filter_csi(const std::vector<channel::CsiCapture>& caps, double min_snr_db);
FilterReport quality_filter_fpbt(const std::vector<channel::FpbtCapture>& caps,
                                 double min_snr_db);

NormStats fit_normalization(const std::vector<const FeatureTensor*>& train);
FeatureTensor apply_normalization(const FeatureTensor& t, const NormStats& stats);

}  // namespace milagro::dsp
