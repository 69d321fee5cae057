#include "milagro/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "milagro/errors.hpp"

namespace milagro::dsp {

FeatureTensor csi_to_features(const channel::CsiCapture& cap, std::size_t window) {
    if (cap.n_beacons < window)
        throw InsufficientBeacons("capture has " + std::to_string(cap.n_beacons) +
                                  " beacons, window needs " + std::to_string(window));
    const std::size_t k = cap.n_subcarriers;
    const std::size_t first = cap.n_beacons - window;

    FeatureTensor t;
    t.layout = FeatureLayout::Sub7;
    t.shape = {2, window, k};
    t.data.resize(2 * window * k);
    for (std::size_t b = 0; b < window; ++b)
        for (std::size_t s = 0; s < k; ++s) {
            const auto v = cap.at(first + b, s);
            t.data[b * k + s] = static_cast<float>(v.real());
            t.data[window * k + b * k + s] = static_cast<float>(v.imag());
        }
    return t;
}

FeatureTensor pdp_features(const channel::FpbtCapture& cap) {
    if (cap.failed) throw FailedCapture("FPBT capture flagged as failed");
    FeatureTensor t;
    t.layout = FeatureLayout::MmWave;
    t.shape = {cap.n_awv, cap.n_time_samples};
    t.data.resize(cap.pdp.size());
    for (std::size_t i = 0; i < cap.pdp.size(); ++i) {
        const float p = cap.pdp[i];
        t.data[i] = p > 0.0f
                        ? std::max(kPdpFloorDb, 10.0f * std::log10(p))
                        : kPdpFloorDb;
    }
    return t;
}

FeatureTensor downsample_time(const FeatureTensor& t, std::size_t factor) {
    if (factor <= 1) return t;
    FeatureTensor out;
    out.layout = t.layout;
    if (t.layout == FeatureLayout::Sub7) {
        const std::size_t ch = t.shape[0], beacons = t.shape[1], k = t.shape[2];
        const std::size_t nb = beacons / factor;
        if (nb == 0) throw ShapeMismatch("pooling factor larger than the beacon window");
        out.shape = {ch, nb, k};
        out.data.assign(ch * nb * k, 0.0f);
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t s = 0; s < k; ++s) {
                    float acc = 0.0f;
                    for (std::size_t f = 0; f < factor; ++f)
                        acc += t.data[(c * beacons + b * factor + f) * k + s];
                    out.data[(c * nb + b) * k + s] = acc / static_cast<float>(factor);
                }
    } else {
        const std::size_t awvs = t.shape[0], samples = t.shape[1];
        const std::size_t ns = samples / factor;
        if (ns == 0) throw ShapeMismatch("pooling factor larger than the sweep length");
        out.shape = {awvs, ns};
        out.data.assign(awvs * ns, 0.0f);
        for (std::size_t a = 0; a < awvs; ++a)
            for (std::size_t s = 0; s < ns; ++s) {
                float acc = 0.0f;
                for (std::size_t f = 0; f < factor; ++f)
                    acc += t.data[a * samples + s * factor + f];
                out.data[a * ns + s] = acc / static_cast<float>(factor);
            }
    }
    return out;
}

FilterReport quality_filter_csi(const std::vector<channel::CsiCapture>& caps, double min_snr_db) {
    FilterReport r;
    for (std::size_t i = 0; i < caps.size(); ++i) {
        if (caps[i].mean_snr_db() < min_snr_db)
            ++r.dropped;
        else
            r.kept_indices.push_back(i);
    }
    return r;
}

FilterReport quality_filter_fpbt(const std::vector<channel::FpbtCapture>& caps,
                                 double min_snr_db) {
    FilterReport r;
    for (std::size_t i = 0; i < caps.size(); ++i) {
        if (caps[i].failed || caps[i].mean_snr_db() < min_snr_db)
            ++r.dropped;
        else
            r.kept_indices.push_back(i);
    }
    return r;
}

NormStats fit_normalization(const std::vector<const FeatureTensor*>& train) {
    if (train.empty()) throw EmptyTrainingSet("normalization needs at least one tensor");
    const std::size_t n = train.front()->size();
    for (const auto* t : train)
        if (t->size() != n) throw ShapeMismatch("normalization inputs differ in shape");

    NormStats stats;
    stats.mean.assign(n, 0.0f);
    stats.std.assign(n, 0.0f);
    const double inv = 1.0 / static_cast<double>(train.size());
    std::vector<double> mean(n, 0.0), sq(n, 0.0);
    for (const auto* t : train)
        for (std::size_t i = 0; i < n; ++i) {
            mean[i] += t->data[i];
            sq[i] += static_cast<double>(t->data[i]) * t->data[i];
        }
    for (std::size_t i = 0; i < n; ++i) {
        mean[i] *= inv;
        const double var = std::max(0.0, sq[i] * inv - mean[i] * mean[i]);
        stats.mean[i] = static_cast<float>(mean[i]);
        stats.std[i] = std::max(kNormEpsilon, static_cast<float>(std::sqrt(var)));
    }
    return stats;
}

FeatureTensor apply_normalization(const FeatureTensor& t, const NormStats& stats) {
    if (t.size() != stats.mean.size())
        throw ShapeMismatch("normalization stats do not match the tensor shape");
    FeatureTensor out = t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (out.data[i] - stats.mean[i]) / stats.std[i];
    return out;
}

}  // namespace milagro::dsp
