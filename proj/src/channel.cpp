#include "milagro/channel.hpp"

#include <algorithm>
#include <cmath>
#include <omp.h>

#include "milagro/errors.hpp"
#include "milagro/rng.hpp"

namespace milagro::channel {

using scene::BodyShape;
using scene::Obstacle;
using scene::Target;
using scene::Wall;
using scene::WallSide;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Plane {
    int axis;      // 0=x, 1=y, 2=z
    double value;  // coordinate of the plane
};

Plane wall_plane(WallSide side, const Vec3& room) {
    switch (side) {
        case WallSide::XMin: return {0, 0.0};
        case WallSide::XMax: return {0, room.x};
        case WallSide::YMin: return {1, 0.0};
        case WallSide::YMax: return {1, room.y};
        case WallSide::Floor: return {2, 0.0};
        case WallSide::Ceiling: return {2, room.z};
    }
    return {0, 0.0};
}

Vec3 mirror(const Vec3& p, const Plane& pl) {
    Vec3 m = p;
    if (pl.axis == 0) m.x = 2.0 * pl.value - p.x;
    if (pl.axis == 1) m.y = 2.0 * pl.value - p.y;
    if (pl.axis == 2) m.z = 2.0 * pl.value - p.z;
    return m;
}

double axis_coord(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

// dB loss accumulated over one segment: every body/box crossing counts once.
double segment_blockage_db(const Scene& scn, Band band, const Vec3& p0, const Vec3& p1) {
    double loss = 0.0;
    for (const auto& t : scn.targets)
        if (scene::target_blocks_segment(t, p0, p1)) loss += t.penetration_db.at(band);
    for (const auto& o : scn.obstacles)
        if (segment_hits_box(p0, p1, o.box)) loss += o.penetration_db.at(band);
    return loss;
}

}  // namespace

std::vector<PropagationPath> enumerate_paths(const Scene& scn, const RadioNode& tx,
                                             const RadioNode& rx) {
    if (distance(tx.position, rx.position) < 1e-9)
        throw DegenerateGeometry("tx and rx positions coincide");

    const Band band = tx.band;
    const double lambda = kSpeedOfLight / tx.carrier_freq_hz;
    std::vector<PropagationPath> paths;

    // line of sight
    {
        PropagationPath p;
        p.vertices = {tx.position, rx.position};
        p.length_m = distance(tx.position, rx.position);
        p.excess_blockage_db = segment_blockage_db(scn, band, tx.position, rx.position);
        p.reflection_count = 0;
        p.amplitude = lambda / (4.0 * M_PI * p.length_m) *
                      std::pow(10.0, -p.excess_blockage_db / 20.0);
        if (p.amplitude > 0.0) paths.push_back(std::move(p));
    }

    // first-order wall reflections via the image method
    for (const auto& wall : scn.walls) {
        const double gamma = wall.reflection.at(band);
        if (gamma <= 0.0) continue;
        const Plane pl = wall_plane(wall.side, scn.room_dims);
        const Vec3 img = mirror(tx.position, pl);
        const double a0 = axis_coord(img, pl.axis);
        const double a1 = axis_coord(rx.position, pl.axis);
        if (std::abs(a1 - a0) < 1e-12) continue;
        const double t = (pl.value - a0) / (a1 - a0);
        if (t <= 0.0 || t >= 1.0) continue;  // reflection point beyond the face
        const Vec3 hit = img + (rx.position - img) * t;
        // the reflection point must lie on the room face
        if (hit.x < -1e-9 || hit.x > scn.room_dims.x + 1e-9 || hit.y < -1e-9 ||
            hit.y > scn.room_dims.y + 1e-9 || hit.z < -1e-9 || hit.z > scn.room_dims.z + 1e-9)
            continue;

        PropagationPath p;
        p.vertices = {tx.position, hit, rx.position};
        p.length_m = distance(img, rx.position);
        p.reflection_count = 1;
        p.excess_blockage_db = segment_blockage_db(scn, band, tx.position, hit) +
                               segment_blockage_db(scn, band, hit, rx.position);
        p.amplitude = lambda / (4.0 * M_PI * p.length_m) * gamma *
                      std::pow(10.0, -p.excess_blockage_db / 20.0);
        if (p.amplitude > 0.0) paths.push_back(std::move(p));
    }
    return paths;
}

std::vector<std::complex<double>> response_at(const std::vector<PropagationPath>& paths,
                                              const std::vector<double>& freqs_hz) {
    std::vector<std::complex<double>> h(freqs_hz.size(), {0.0, 0.0});
    for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
        const double lambda = kSpeedOfLight / freqs_hz[k];
        std::complex<double> acc{0.0, 0.0};
        for (const auto& p : paths) {
            const double phase = kTwoPi * p.length_m / lambda;
            acc += p.amplitude * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        h[k] = acc;
    }
    return h;
}

std::vector<double> beacon_subcarrier_freqs(double carrier_freq_hz, std::size_t n_subcarriers,
                                            double spacing_hz) {
    std::vector<double> f(n_subcarriers);
    const double half = 0.5 * static_cast<double>(n_subcarriers - 1);
    for (std::size_t k = 0; k < n_subcarriers; ++k)
        f[k] = carrier_freq_hz + (static_cast<double>(k) - half) * spacing_hz;
    return f;
}

ChannelResponse channel_response(const std::vector<PropagationPath>& paths,
                                 double carrier_freq_hz, std::size_t n_subcarriers,
                                 double subcarrier_spacing_hz) {
    ChannelResponse r;
    r.n_subcarriers = n_subcarriers;
    r.carrier_freq_hz = carrier_freq_hz;
    r.subcarrier_spacing_hz = subcarrier_spacing_hz;
    r.h = response_at(paths, beacon_subcarrier_freqs(carrier_freq_hz, n_subcarriers,
                                                     subcarrier_spacing_hz));
    return r;
}

double CsiCapture::mean_snr_db() const {
    if (snr_db.empty()) return -300.0;
    double s = 0.0;
    for (double v : snr_db) s += v;
    return s / static_cast<double>(snr_db.size());
}

CsiCapture simulate_beacon_csi(const Scene& scn, const RadioNode& ap, const NoiseModel& noise,
                               const TrafficLoad& load, std::size_t n_beacons,
                               std::uint64_t seed) {
    if (ap.band != Band::Sub7) throw SceneInvalid("beacon simulation requires a Sub7 AP");
    if (n_beacons < 1) throw SceneInvalid("n_beacons must be >= 1");
    {
        const auto violations = scene::validate_scene(scn);
        if (!violations.empty())
            throw SceneInvalid("scene invalid: " + violations.front().field + ": " +
                               violations.front().rule);
    }

    const auto paths = enumerate_paths(scn, ap, scn.psta);
    const auto freqs = beacon_subcarrier_freqs(ap.carrier_freq_hz);
    const auto h = response_at(paths, freqs);
    const std::size_t n_sub = freqs.size();

    double mean_pow = 0.0;
    for (const auto& v : h) mean_pow += std::norm(v);
    mean_pow /= static_cast<double>(n_sub);
    const double sigma2 =
        noise.enabled ? mean_pow / std::pow(10.0, noise.snr_target_db / 10.0) : 0.0;
    const double sigma_axis = std::sqrt(sigma2 / 2.0);

    const Rng base(mix_seed(seed, noise.seed));

    // phase 1: beacon timeline (jitter + drops), sequential over slots
    struct Slot {
        std::size_t index;
        double t;
    };
    std::vector<Slot> emitted;
    emitted.reserve(n_beacons);
    double prev_t = -1.0;
    const std::size_t max_slots = 64 * n_beacons + 1024;
    for (std::size_t slot = 0; emitted.size() < n_beacons && slot < max_slots; ++slot) {
        Rng sr = base.stream(slot, 0);
        const double jitter = load.beacon_jitter_std_s * sr.gaussian();
        const bool dropped = sr.bernoulli(load.beacon_drop_prob);
        double t = static_cast<double>(slot) * ap.beacon_interval_s + jitter;
        if (dropped) continue;
        if (t <= prev_t) t = prev_t + 1e-6;
        emitted.push_back({slot, t});
        prev_t = t;
    }
    if (emitted.size() < n_beacons)
        throw SceneInvalid("beacon drop probability too high to collect the requested window");

    CsiCapture cap;
    cap.n_beacons = n_beacons;
    cap.n_subcarriers = n_sub;
    cap.source_ap = ap.id;
    cap.beacons.assign(n_beacons * n_sub, {0.0, 0.0});
    cap.timestamps_s.resize(n_beacons);
    cap.snr_db.assign(n_beacons, 300.0);

    double sig_pow = 0.0;
    for (const auto& v : h) sig_pow += std::norm(v);

    // phase 2: per-beacon noise, independent streams so order is irrelevant
#pragma omp parallel for schedule(static)
    for (long bi = 0; bi < static_cast<long>(n_beacons); ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        cap.timestamps_s[b] = emitted[b].t;
        Rng nr = base.stream(emitted[b].index, 1);
        double noise_pow = 0.0;
        for (std::size_t k = 0; k < n_sub; ++k) {
            const std::complex<double> w{sigma_axis * nr.gaussian(), sigma_axis * nr.gaussian()};
            cap.beacons[b * n_sub + k] = h[k] + w;
            noise_pow += std::norm(w);
        }
        if (noise_pow > 0.0) cap.snr_db[b] = 10.0 * std::log10(sig_pow / noise_pow);
    }
    return cap;
}

// ---------------------------------------------------------------------------
// mmWave beam training

std::vector<Vec3> element_positions(const AntennaArray& array, double freq_hz) {
    const double lambda = kSpeedOfLight / freq_hz;
    const double d = array.element_spacing_m > 0.0 ? array.element_spacing_m : lambda / 2.0;
    const Vec3 b = normalized(array.boresight);
    Vec3 right = std::abs(b.z) > 0.99 ? Vec3{1.0, 0.0, 0.0} : normalized(cross(b, Vec3{0, 0, 1}));
    const Vec3 up = cross(right, b);
    std::vector<Vec3> pos;
    pos.reserve(static_cast<std::size_t>(array.elements()));
    for (int r = 0; r < array.rows; ++r)
        for (int c = 0; c < array.cols; ++c) {
            const double dr = (static_cast<double>(r) - (array.rows - 1) / 2.0) * d;
            const double dc = (static_cast<double>(c) - (array.cols - 1) / 2.0) * d;
            pos.push_back(right * dc + up * dr);
        }
    return pos;
}

std::vector<AwvConfig> awv_codebook(const AntennaArray& array, int n_awv, double sweep_width_deg,
                                    double freq_hz) {
    if (n_awv < 2) throw SceneInvalid("codebook needs at least two AWVs");
    const double k = kTwoPi * freq_hz / kSpeedOfLight;
    const auto elems = element_positions(array, freq_hz);
    const Vec3 b = normalized(array.boresight);

    std::vector<AwvConfig> book;
    book.reserve(static_cast<std::size_t>(n_awv));
    for (int i = 0; i < n_awv; ++i) {
        const double ang_deg =
            -sweep_width_deg / 2.0 + sweep_width_deg * static_cast<double>(i) / (n_awv - 1);
        const Vec3 u = rotate_z(b, ang_deg * M_PI / 180.0);
        AwvConfig awv;
        awv.steering_angle_deg = ang_deg;
        awv.weights.reserve(elems.size());
        for (const auto& r : elems) awv.weights.emplace_back(1.0, -k * dot(r, u));
        book.push_back(std::move(awv));
    }
    return book;
}

std::complex<double> beam_gain(const AwvConfig& awv, const AntennaArray& array,
                               const Vec3& direction, double freq_hz) {
    const double k = kTwoPi * freq_hz / kSpeedOfLight;
    const auto elems = element_positions(array, freq_hz);
    if (elems.size() != awv.weights.size())
        throw ShapeMismatch("AWV weight count does not match the array");
    std::complex<double> g{0.0, 0.0};
    for (std::size_t n = 0; n < elems.size(); ++n) {
        const double phase = awv.weights[n].second + k * dot(elems[n], direction);
        g += awv.weights[n].first * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return g;
}

double fpbt_noise_floor(const RadioNode& ap, const NoiseModel& noise) {
    if (!noise.enabled) return 0.0;
    const double lambda = kSpeedOfLight / ap.carrier_freq_hz;
    const double ref_amp = lambda / (4.0 * M_PI) * static_cast<double>(ap.antenna.elements());
    return ref_amp * ref_amp / std::pow(10.0, noise.snr_target_db / 10.0);
}

double FpbtCapture::mean_snr_db() const {
    if (failed || n_awv == 0) return -300.0;
    double s = 0.0;
    for (std::size_t a = 0; a < n_awv; ++a) {
        float best = -300.0f;
        for (std::size_t t = 0; t < n_taps; ++t)
            best = std::max(best, tap_snr_db[a * n_taps + t]);
        s += best;
    }
    return s / static_cast<double>(n_awv);
}

FpbtCapture simulate_fpbt_sweep(const Scene& scn, const RadioNode& ap, const NoiseModel& noise,
                                std::uint64_t seed, const FpbtConfig& cfg) {
    if (ap.band != Band::MmWave) throw SceneInvalid("FPBT simulation requires a MmWave AP");
    {
        const auto violations = scene::validate_scene(scn);
        if (!violations.empty())
            throw SceneInvalid("scene invalid: " + violations.front().field + ": " +
                               violations.front().rule);
    }

    const Rng base(mix_seed(seed, noise.seed));

    FpbtCapture cap;
    cap.n_awv = static_cast<std::size_t>(cfg.n_awv);
    cap.n_time_samples = static_cast<std::size_t>(cfg.n_time_samples);
    cap.n_taps = static_cast<std::size_t>(cfg.n_taps);
    cap.awvs = awv_codebook(ap.antenna, cfg.n_awv, cfg.sweep_width_deg, ap.carrier_freq_hz);
    cap.pdp.assign(cap.n_awv * cap.n_time_samples, 0.0f);
    cap.iq.assign(cap.n_awv * cap.n_taps, {0.0, 0.0});
    cap.tap_snr_db.assign(cap.n_awv * cap.n_taps, -300.0f);
    cap.noise_floor = fpbt_noise_floor(ap, noise);

    {
        Rng fr = base.stream(~0ULL);
        cap.failed = fr.bernoulli(cfg.fail_prob);
    }
    if (cap.failed) return cap;

    const auto paths = enumerate_paths(scn, ap, scn.psta);
    const double lambda = kSpeedOfLight / ap.carrier_freq_hz;
    const double sigma2 = cap.noise_floor;
    const double sigma_axis = std::sqrt(sigma2 / 2.0);

    // tap amplitude includes propagation phase and the complex beam gain
    struct PathArrival {
        std::size_t tap;
        Vec3 dir;
        std::complex<double> amp;
    };
    std::vector<PathArrival> arrivals;
    arrivals.reserve(paths.size());
    for (const auto& p : paths) {
        const double delay = p.length_m / kSpeedOfLight;
        auto tap = static_cast<std::size_t>(
            std::min<long long>(std::llround(delay * kFpbtBandwidthHz),
                                static_cast<long long>(cap.n_taps - 1)));
        const double phase = kTwoPi * p.length_m / lambda;
        arrivals.push_back(
            {tap, p.departure_direction(),
             p.amplitude * std::complex<double>(std::cos(phase), std::sin(phase))});
    }

#pragma omp parallel for schedule(static)
    for (long ai = 0; ai < static_cast<long>(cap.n_awv); ++ai) {
        const auto a = static_cast<std::size_t>(ai);
        std::complex<double>* iq_row = &cap.iq[a * cap.n_taps];
        for (const auto& arr : arrivals)
            iq_row[arr.tap] += arr.amp * beam_gain(cap.awvs[a], ap.antenna, arr.dir,
                                                   ap.carrier_freq_hz);

        float* snr_row = &cap.tap_snr_db[a * cap.n_taps];
        for (std::size_t t = 0; t < cap.n_taps; ++t) {
            const double p = std::norm(iq_row[t]);
            if (sigma2 > 0.0)
                snr_row[t] = static_cast<float>(
                    std::clamp(10.0 * std::log10(std::max(p, 1e-300) / sigma2), -300.0, 300.0));
            else
                snr_row[t] = p > 0.0 ? 300.0f : -300.0f;
        }

        // received power over time: tap t sits at sample 2t (half-tap sampling)
        Rng nr = base.stream(a);
        float* pdp_row = &cap.pdp[a * cap.n_time_samples];
        for (std::size_t s = 0; s < cap.n_time_samples; ++s) {
            std::complex<double> v{0.0, 0.0};
            if (s % 2 == 0 && s / 2 < cap.n_taps) v = iq_row[s / 2];
            if (sigma_axis > 0.0)
                v += std::complex<double>(sigma_axis * nr.gaussian(), sigma_axis * nr.gaussian());
            pdp_row[s] = static_cast<float>(std::norm(v));
        }
    }
    return cap;
}

}  // namespace milagro::channel
