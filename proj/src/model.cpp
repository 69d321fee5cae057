#include "milagro/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include <json.hpp>

#include "milagro/errors.hpp"
#include "milagro/hash.hpp"
#include "milagro/io.hpp"

namespace milagro::model {

using ordered_json = nlohmann::ordered_json;

const char* band_mode_name(BandMode m) {
    switch (m) {
        case BandMode::Joint: return "joint";
        case BandMode::Sub7Only: return "sub7";
        case BandMode::MmwaveOnly: return "mmwave";
    }
    return "joint";
}

BandMode band_mode_from_name(const std::string& s) {
    if (s == "joint") return BandMode::Joint;
    if (s == "sub7") return BandMode::Sub7Only;
    if (s == "mmwave") return BandMode::MmwaveOnly;
    throw SchemaVersionMismatch("unknown band mode: " + s);
}

// ---------------------------------------------------------------------------
// BlockStack

void BlockStack::init(std::size_t channels, std::size_t len, const ModelConfig& cfg,
                      std::size_t out, Rng& rng) {
    in_channels = channels;
    in_len = len;
    pool = static_cast<std::size_t>(cfg.pool);
    n_out = out;
    dropout_rate = cfg.dropout_rate;

    const auto filters = static_cast<std::size_t>(cfg.conv_filters);
    const auto kernel = static_cast<std::size_t>(cfg.conv_kernel);
    if (len < kernel) throw ShapeMismatch("stack input shorter than the conv kernel");
    conv = nn::Conv1dLayer(filters, channels, kernel);
    const std::size_t conv_len = len - kernel + 1;
    const std::size_t pool_len = conv_len / pool;
    if (pool_len == 0) throw ShapeMismatch("stack input too short for the pooling window");
    fc1 = nn::DenseLayer(static_cast<std::size_t>(cfg.hidden), filters * pool_len);
    fc2 = nn::DenseLayer(out, static_cast<std::size_t>(cfg.hidden));

    const double conv_std = std::sqrt(2.0 / static_cast<double>(channels * kernel));
    for (auto& v : conv.w.data) v = conv_std * rng.gaussian();
    const double fc1_std = std::sqrt(2.0 / static_cast<double>(fc1.in_features()));
    for (auto& v : fc1.w.data) v = fc1_std * rng.gaussian();
    const double fc2_std = std::sqrt(1.0 / static_cast<double>(fc2.in_features()));
    for (auto& v : fc2.w.data) v = fc2_std * rng.gaussian();
}

std::size_t BlockStack::flat_features() const { return fc1.in_features(); }

std::vector<Tensor*> BlockStack::params() {
    return {&conv.w, &conv.b, &fc1.w, &fc1.b, &fc2.w, &fc2.b};
}

std::vector<const Tensor*> BlockStack::params() const {
    return {&conv.w, &conv.b, &fc1.w, &fc1.b, &fc2.w, &fc2.b};
}

std::vector<const Tensor*> StackGrads::list() const {
    return {&conv_w, &conv_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
}

Tensor stack_forward(const BlockStack& s, const Tensor& x, bool training, Rng& rng,
                     StackCache* cache) {
    Tensor conv_out = nn::conv1d_forward(x, s.conv);
    auto pooled = nn::maxpool1d_forward(conv_out, s.pool);

    Tensor flat = pooled.out;  // (B, F, L') -> (B, F*L'), same storage order
    flat.shape = {flat.dim(0), flat.dim(1) * flat.dim(2)};

    Tensor fc1_out = nn::dense_forward(flat, s.fc1);
    Tensor relu_out = nn::relu_forward(fc1_out);
    Tensor mask;
    Tensor dropped = nn::dropout_forward(relu_out, s.dropout_rate, training, rng, &mask);
    Tensor logits = nn::dense_forward(dropped, s.fc2);
    Tensor probs = nn::softmax(logits);

    if (cache) {
        cache->x = x;
        cache->conv_out = std::move(conv_out);
        cache->pool_out = std::move(pooled.out);
        cache->argmax = std::move(pooled.argmax);
        cache->fc1_out = std::move(fc1_out);
        cache->relu_out = std::move(relu_out);
        cache->drop_mask = std::move(mask);
        cache->dropped = std::move(dropped);
        cache->probs = probs;
    }
    return probs;
}

StackGrads stack_backward(const BlockStack& s, const StackCache& cache,
                          const std::vector<int>& labels) {
    const Tensor g_logits = nn::softmax_xent_backward(cache.probs, labels);
    auto dg2 = nn::dense_backward(g_logits, cache.dropped, s.fc2);
    const Tensor g_relu = nn::dropout_backward(dg2.x, cache.drop_mask);
    const Tensor g_fc1 = nn::relu_backward(g_relu, cache.fc1_out);

    Tensor flat = cache.pool_out;
    flat.shape = {flat.dim(0), flat.dim(1) * flat.dim(2)};
    auto dg1 = nn::dense_backward(g_fc1, flat, s.fc1);

    Tensor g_pool = std::move(dg1.x);
    g_pool.shape = cache.pool_out.shape;
    const Tensor g_conv = nn::maxpool1d_backward(g_pool, cache.argmax, cache.conv_out.shape);
    auto dgc = nn::conv1d_backward(g_conv, cache.x, s.conv);

    StackGrads g;
    g.conv_w = std::move(dgc.w);
    g.conv_b = std::move(dgc.b);
    g.fc1_w = std::move(dg1.w);
    g.fc1_b = std::move(dg1.b);
    g.fc2_w = std::move(dg2.w);
    g.fc2_b = std::move(dg2.b);
    return g;
}

// ---------------------------------------------------------------------------
// dataset

void stratified_split(Dataset& ds, double train_frac, std::uint64_t seed) {
    ds.train_idx.clear();
    ds.test_idx.clear();
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        by_label[ds.samples[i].fine_label].push_back(i);
    const Rng base(mix_seed(seed, 0x5b717ULL));
    for (auto& [label, idx] : by_label) {
        Rng rng = base.stream(static_cast<std::uint64_t>(label));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.next_u64() % i)]);
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(train_frac * static_cast<double>(idx.size())));
        if (idx.size() > 1) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? ds.train_idx : ds.test_idx).push_back(idx[i]);
    }
    std::sort(ds.train_idx.begin(), ds.train_idx.end());
    std::sort(ds.test_idx.begin(), ds.test_idx.end());
}

namespace {

std::vector<std::size_t> shape_from_json(const ordered_json& j) {
    std::vector<std::size_t> s;
    for (const auto& v : j) s.push_back(v.get<std::size_t>());
    return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    if (ds.samples.empty()) throw EmptyDataset("refusing to save an empty dataset");
    std::filesystem::create_directories(dir);

    const auto& s7 = ds.samples.front().sub7.shape;
    const auto& s60 = ds.samples.front().mmwave.shape;
    std::vector<float> sub7_blob, mm_blob;
    sub7_blob.reserve(ds.samples.size() * ds.samples.front().sub7.size());
    mm_blob.reserve(ds.samples.size() * ds.samples.front().mmwave.size());
    for (const auto& s : ds.samples) {
        if (s.sub7.shape != s7 || s.mmwave.shape != s60)
            throw ShapeMismatch("dataset samples disagree on feature shapes");
        sub7_blob.insert(sub7_blob.end(), s.sub7.data.begin(), s.sub7.data.end());
        mm_blob.insert(mm_blob.end(), s.mmwave.data.begin(), s.mmwave.data.end());
    }
    io::write_f32_blob(dir / "sub7.f32", sub7_blob);
    io::write_f32_blob(dir / "mmwave.f32", mm_blob);

    ordered_json j;
    j["schema"] = 1;
    j["kind"] = "dataset";
    j["n_samples"] = ds.samples.size();
    j["sub7_shape"] = s7;
    j["mmwave_shape"] = s60;
    j["dtype"] = "f32le";
    j["seed"] = ds.seed;
    j["scene_hash"] = std::to_string(ds.scene_hash);
    j["taxonomy"] = ordered_json::parse(scene::taxonomy_to_json(ds.taxonomy));
    std::vector<int> labels;
    for (const auto& s : ds.samples) labels.push_back(s.fine_label);
    j["labels"] = labels;
    j["train_idx"] = ds.train_idx;
    j["test_idx"] = ds.test_idx;
    j["checksum_sub7"] = std::to_string(io::file_fnv1a64(dir / "sub7.f32"));
    j["checksum_mmwave"] = std::to_string(io::file_fnv1a64(dir / "mmwave.f32"));
    io::write_text_atomic(dir / "manifest.json", j.dump(2));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    ordered_json j;
    try {
        j = ordered_json::parse(io::read_text(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("dataset manifest parse error: " + std::string(e.what()));
    }
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("dataset manifest schema is not 1");

    Dataset ds;
    ds.taxonomy = scene::taxonomy_from_json(j.at("taxonomy").dump());
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.scene_hash = std::stoull(j.at("scene_hash").get<std::string>());
    ds.train_idx = j.at("train_idx").get<std::vector<std::size_t>>();
    ds.test_idx = j.at("test_idx").get<std::vector<std::size_t>>();
    const auto labels = j.at("labels").get<std::vector<int>>();
    const auto s7 = shape_from_json(j.at("sub7_shape"));
    const auto s60 = shape_from_json(j.at("mmwave_shape"));

    if (std::to_string(io::file_fnv1a64(dir / "sub7.f32")) !=
            j.at("checksum_sub7").get<std::string>() ||
        std::to_string(io::file_fnv1a64(dir / "mmwave.f32")) !=
            j.at("checksum_mmwave").get<std::string>())
        throw CorruptChecksum("dataset blob checksum mismatch");

    const auto sub7_blob = io::read_f32_blob(dir / "sub7.f32");
    const auto mm_blob = io::read_f32_blob(dir / "mmwave.f32");
    const std::size_t n = labels.size();
    const std::size_t n7 =
        std::accumulate(s7.begin(), s7.end(), std::size_t{1}, std::multiplies<>());
    const std::size_t n60 =
        std::accumulate(s60.begin(), s60.end(), std::size_t{1}, std::multiplies<>());
    if (sub7_blob.size() != n * n7 || mm_blob.size() != n * n60)
        throw CorruptChecksum("dataset blob size does not match the manifest");

    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.fine_label = labels[i];
        s.sub7.layout = dsp::FeatureLayout::Sub7;
        s.sub7.shape = s7;
        s.sub7.data.assign(sub7_blob.begin() + static_cast<long>(i * n7),
                           sub7_blob.begin() + static_cast<long>((i + 1) * n7));
        s.mmwave.layout = dsp::FeatureLayout::MmWave;
        s.mmwave.shape = s60;
        s.mmwave.data.assign(mm_blob.begin() + static_cast<long>(i * n60),
                             mm_blob.begin() + static_cast<long>((i + 1) * n60));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// model construction

namespace {

std::size_t pool_factor(std::size_t in_len, std::size_t target) {
    const std::size_t f = target > 0 ? in_len / target : 1;
    return f >= 1 ? f : 1;
}

}  // namespace

std::vector<Tensor*> MilagroModel::parameters() {
    std::vector<Tensor*> all = block1.params();
    for (auto& p : paths)
        for (auto* t : p.params()) all.push_back(t);
    return all;
}

std::vector<const Tensor*> MilagroModel::parameters() const {
    std::vector<const Tensor*> all = block1.params();
    for (const auto& p : paths)
        for (const auto* t : p.params()) all.push_back(t);
    return all;
}

MilagroModel build_model(const ModelConfig& cfg, const LabelTaxonomy& taxonomy,
                         const std::vector<std::size_t>& sub7_shape,
                         const std::vector<std::size_t>& mmwave_shape, std::uint64_t seed) {
    if (taxonomy.fine_count() < 1) throw LabelOutsideTaxonomy("taxonomy has no fine labels");
    if (sub7_shape.size() != 3 || mmwave_shape.size() != 2)
        throw ShapeMismatch("expected sub7 (2, beacons, subcarriers) and mmwave (awvs, samples)");

    MilagroModel m;
    m.cfg = cfg;
    m.taxonomy = taxonomy;

    const std::size_t beacons = sub7_shape[1], subc = sub7_shape[2];
    const std::size_t f7 = pool_factor(beacons, static_cast<std::size_t>(cfg.sub7_pooled_beacons));
    m.sub7_channels = sub7_shape[0];
    m.sub7_len = (beacons / f7) * subc;

    const std::size_t samples = mmwave_shape[1];
    const std::size_t f60 =
        pool_factor(samples, static_cast<std::size_t>(cfg.mmwave_pooled_samples));
    m.mmwave_channels = mmwave_shape[0];
    m.mmwave_len = samples / f60;

    Rng rng(mix_seed(seed, 0x30de1ULL));
    const auto fine = static_cast<std::size_t>(taxonomy.fine_count());

    switch (cfg.bands) {
        case BandMode::Sub7Only:
            m.block1.init(m.sub7_channels, m.sub7_len, cfg, fine, rng);
            break;
        case BandMode::MmwaveOnly:
            m.block1.init(m.mmwave_channels, m.mmwave_len, cfg, fine, rng);
            break;
        case BandMode::Joint: {
            const auto coarse = static_cast<std::size_t>(taxonomy.coarse_count());
            m.block1.init(m.mmwave_channels, m.mmwave_len, cfg, coarse, rng);
            m.path_fine.assign(coarse, {});
            for (int f = 0; f < taxonomy.fine_count(); ++f)
                m.path_fine[static_cast<std::size_t>(taxonomy.coarse_of(f))].push_back(f);
            for (std::size_t c = 0; c < coarse; ++c) {
                if (m.path_fine[c].empty())
                    throw LabelOutsideTaxonomy("coarse label has no fine labels mapped to it");
                BlockStack p;
                p.init(m.sub7_channels, m.sub7_len, cfg, m.path_fine[c].size(), rng);
                m.paths.push_back(std::move(p));
            }
            break;
        }
    }
    return m;
}

Tensor model_input(const MilagroModel& m, const FeatureTensor& t) {
    FeatureTensor pooled;
    std::size_t channels, len;
    if (t.layout == dsp::FeatureLayout::Sub7) {
        if (t.shape.size() != 3) throw ShapeMismatch("sub7 feature tensor is not 3-D");
        const std::size_t f =
            pool_factor(t.shape[1], static_cast<std::size_t>(m.cfg.sub7_pooled_beacons));
        pooled = dsp::downsample_time(t, f);
        channels = pooled.shape[0];
        len = pooled.shape[1] * pooled.shape[2];
        if (channels != m.sub7_channels || len != m.sub7_len)
            throw ShapeMismatch("sub7 features do not match the model input geometry");
        if (m.has_norm) pooled = dsp::apply_normalization(pooled, m.norm_sub7);
    } else {
        if (t.shape.size() != 2) throw ShapeMismatch("mmwave feature tensor is not 2-D");
        const std::size_t f =
            pool_factor(t.shape[1], static_cast<std::size_t>(m.cfg.mmwave_pooled_samples));
        pooled = dsp::downsample_time(t, f);
        channels = pooled.shape[0];
        len = pooled.shape[1];
        if (channels != m.mmwave_channels || len != m.mmwave_len)
            throw ShapeMismatch("mmwave features do not match the model input geometry");
        if (m.has_norm) pooled = dsp::apply_normalization(pooled, m.norm_mmwave);
    }
    Tensor x({1, channels, len});
    for (std::size_t i = 0; i < pooled.data.size(); ++i) x.data[i] = pooled.data[i];
    return x;
}

// ---------------------------------------------------------------------------
// batched evaluation machinery

namespace {

struct InputCache {
    std::size_t n = 0;
    std::size_t c7 = 0, l7 = 0, c60 = 0, l60 = 0;
    std::vector<double> sub7;  // (n, c7*l7)
    std::vector<double> mm;    // (n, c60*l60)
};

// Pool (and optionally normalize) every referenced sample once.
InputCache build_cache(const MilagroModel& m, const Dataset& ds, bool need_sub7,
                       bool need_mm) {
    InputCache cache;
    cache.n = ds.samples.size();
    cache.c7 = m.sub7_channels;
    cache.l7 = m.sub7_len;
    cache.c60 = m.mmwave_channels;
    cache.l60 = m.mmwave_len;
    if (need_sub7) cache.sub7.resize(cache.n * cache.c7 * cache.l7);
    if (need_mm) cache.mm.resize(cache.n * cache.c60 * cache.l60);
    for (std::size_t i = 0; i < cache.n; ++i) {
        if (need_sub7) {
            const Tensor x = model_input(m, ds.samples[i].sub7);
            std::copy(x.data.begin(), x.data.end(),
                      cache.sub7.begin() + static_cast<long>(i * cache.c7 * cache.l7));
        }
        if (need_mm) {
            const Tensor x = model_input(m, ds.samples[i].mmwave);
            std::copy(x.data.begin(), x.data.end(),
                      cache.mm.begin() + static_cast<long>(i * cache.c60 * cache.l60));
        }
    }
    return cache;
}

Tensor gather(const std::vector<double>& src, std::size_t row_len,
              const std::vector<std::size_t>& rows, std::size_t channels, std::size_t len) {
    Tensor x({rows.size(), channels, len});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(src.begin() + static_cast<long>(rows[i] * row_len),
                  src.begin() + static_cast<long>((rows[i] + 1) * row_len),
                  x.data.begin() + static_cast<long>(i * row_len));
    return x;
}

// Inference over cached inputs; hard argmax routing.
void cached_predict(const MilagroModel& m, const InputCache& cache,
                    const std::vector<std::size_t>& indices, std::vector<int>& labels_out,
                    std::vector<double>& conf_out) {
    labels_out.assign(indices.size(), 0);
    conf_out.assign(indices.size(), 0.0);
    Rng dummy(0);
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const std::size_t e = std::min(indices.size(), start + chunk);
        std::vector<std::size_t> rows(indices.begin() + static_cast<long>(start),
                                      indices.begin() + static_cast<long>(e));
        const bool joint = m.cfg.bands == BandMode::Joint;
        const bool block1_on_mm = m.cfg.bands != BandMode::Sub7Only;
        const Tensor xb = block1_on_mm
                              ? gather(cache.mm, cache.c60 * cache.l60, rows, cache.c60, cache.l60)
                              : gather(cache.sub7, cache.c7 * cache.l7, rows, cache.c7, cache.l7);
        const Tensor probs1 = stack_forward(m.block1, xb, false, dummy, nullptr);

        if (!joint) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const double* p = &probs1.data[i * m.block1.n_out];
                std::size_t best = 0;
                for (std::size_t j = 1; j < m.block1.n_out; ++j)
                    if (p[j] > p[best]) best = j;
                labels_out[start + i] = static_cast<int>(best);
                conf_out[start + i] = p[best];
            }
            continue;
        }

        // route by coarse argmax, then run each path on its rows
        std::vector<std::vector<std::size_t>> route(m.paths.size());
        std::vector<std::size_t> route_of(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* p = &probs1.data[i * m.block1.n_out];
            std::size_t best = 0;
            for (std::size_t j = 1; j < m.block1.n_out; ++j)
                if (p[j] > p[best]) best = j;
            route[best].push_back(i);
            route_of[i] = best;
        }
        for (std::size_t c = 0; c < m.paths.size(); ++c) {
            if (route[c].empty()) continue;
            std::vector<std::size_t> sub_rows;
            for (std::size_t i : route[c]) sub_rows.push_back(rows[i]);
            const Tensor x7 =
                gather(cache.sub7, cache.c7 * cache.l7, sub_rows, cache.c7, cache.l7);
            const Tensor probs2 = stack_forward(m.paths[c], x7, false, dummy, nullptr);
            for (std::size_t k = 0; k < route[c].size(); ++k) {
                const double* p = &probs2.data[k * m.paths[c].n_out];
                std::size_t best = 0;
                for (std::size_t j = 1; j < m.paths[c].n_out; ++j)
                    if (p[j] > p[best]) best = j;
                const std::size_t i = route[c][k];
                labels_out[start + i] = m.path_fine[c][best];
                conf_out[start + i] = p[best];
            }
        }
    }
}

double cached_accuracy(const MilagroModel& m, const InputCache& cache, const Dataset& ds,
                       const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::vector<int> pred;
    std::vector<double> conf;
    cached_predict(m, cache, indices, pred, conf);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (pred[i] == ds.samples[indices[i]].fine_label) ++hit;
    return static_cast<double>(hit) / static_cast<double>(indices.size());
}

}  // namespace

ForwardResult forward(const MilagroModel& m, const FeatureTensor& mmwave,
                      const FeatureTensor& sub7, bool training, Rng& rng, GateMode gate,
                      int teacher_coarse) {
    ForwardResult r;
    const auto fine = static_cast<std::size_t>(m.taxonomy.fine_count());
    r.fine_probs.assign(fine, 0.0);

    if (m.cfg.bands != BandMode::Joint) {
        const Tensor x = m.cfg.bands == BandMode::Sub7Only ? model_input(m, sub7)
                                                           : model_input(m, mmwave);
        const Tensor probs = stack_forward(m.block1, x, training, rng, nullptr);
        r.coarse_probs.assign(probs.data.begin(), probs.data.end());
        r.fine_probs = r.coarse_probs;
        return r;
    }

    const Tensor x60 = model_input(m, mmwave);
    const Tensor probs1 = stack_forward(m.block1, x60, training, rng, nullptr);
    r.coarse_probs.assign(probs1.data.begin(), probs1.data.end());

    std::size_t route = 0;
    if (gate == GateMode::TeacherForced) {
        if (teacher_coarse < 0 || teacher_coarse >= m.taxonomy.coarse_count())
            throw LabelOutsideTaxonomy("teacher-forced coarse label out of range");
        route = static_cast<std::size_t>(teacher_coarse);
    } else {
        for (std::size_t j = 1; j < r.coarse_probs.size(); ++j)
            if (r.coarse_probs[j] > r.coarse_probs[route]) route = j;
    }

    const Tensor x7 = model_input(m, sub7);
    const Tensor probs2 = stack_forward(m.paths[route], x7, training, rng, nullptr);
    for (std::size_t j = 0; j < m.path_fine[route].size(); ++j)
        r.fine_probs[static_cast<std::size_t>(m.path_fine[route][j])] = probs2.data[j];
    return r;
}

Prediction predict(const MilagroModel& m, const FeatureTensor& mmwave,
                   const FeatureTensor& sub7) {
    Rng dummy(0);
    const ForwardResult r = forward(m, mmwave, sub7, false, dummy, GateMode::Predicted);
    Prediction p;
    for (std::size_t j = 1; j < r.fine_probs.size(); ++j)
        if (r.fine_probs[j] > r.fine_probs[static_cast<std::size_t>(p.fine_label)])
            p.fine_label = static_cast<int>(j);
    p.confidence = r.fine_probs[static_cast<std::size_t>(p.fine_label)];
    return p;
}

// ---------------------------------------------------------------------------
// training

TrainHistory train(MilagroModel& m, const Dataset& ds, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (ds.samples.empty() || ds.train_idx.empty())
        throw EmptyDataset("training needs a non-empty train split");
    for (const auto& s : ds.samples)
        if (s.fine_label < 0 || s.fine_label >= m.taxonomy.fine_count())
            throw LabelOutsideTaxonomy("sample label outside the model taxonomy");

    const bool joint = m.cfg.bands == BandMode::Joint;
    const bool need_sub7 = m.cfg.bands != BandMode::MmwaveOnly;
    const bool need_mm = m.cfg.bands != BandMode::Sub7Only;

    // normalization is fitted on the pooled training tensors only
    {
        m.has_norm = false;
        std::vector<dsp::FeatureTensor> pooled7, pooled60;
        std::vector<const dsp::FeatureTensor*> p7, p60;
        pooled7.reserve(ds.train_idx.size());
        pooled60.reserve(ds.train_idx.size());
        for (std::size_t i : ds.train_idx) {
            if (need_sub7)
                pooled7.push_back(dsp::downsample_time(
                    ds.samples[i].sub7,
                    pool_factor(ds.samples[i].sub7.shape[1],
                                static_cast<std::size_t>(m.cfg.sub7_pooled_beacons))));
            if (need_mm)
                pooled60.push_back(dsp::downsample_time(
                    ds.samples[i].mmwave,
                    pool_factor(ds.samples[i].mmwave.shape[1],
                                static_cast<std::size_t>(m.cfg.mmwave_pooled_samples))));
        }
        for (const auto& t : pooled7) p7.push_back(&t);
        for (const auto& t : pooled60) p60.push_back(&t);
        if (need_sub7) m.norm_sub7 = dsp::fit_normalization(p7);
        if (need_mm) m.norm_mmwave = dsp::fit_normalization(p60);
        m.has_norm = true;
    }

    const InputCache cache = build_cache(m, ds, need_sub7, need_mm);

    nn::AdamState adam1;
    adam1.lr = cfg.lr;
    auto block1_params = m.block1.params();
    adam1.init(block1_params);
    std::vector<nn::AdamState> adam_paths(m.paths.size());
    for (std::size_t c = 0; c < m.paths.size(); ++c) {
        adam_paths[c].lr = cfg.lr;
        auto p = m.paths[c].params();
        adam_paths[c].init(p);
    }

    // per-path training indices under teacher forcing
    std::vector<std::vector<std::size_t>> path_train(m.paths.size());
    std::vector<std::vector<int>> fine_to_local;
    if (joint) {
        fine_to_local.assign(m.paths.size(),
                             std::vector<int>(static_cast<std::size_t>(m.taxonomy.fine_count()),
                                              -1));
        for (std::size_t c = 0; c < m.paths.size(); ++c)
            for (std::size_t j = 0; j < m.path_fine[c].size(); ++j)
                fine_to_local[c][static_cast<std::size_t>(m.path_fine[c][j])] =
                    static_cast<int>(j);
        for (std::size_t i : ds.train_idx) {
            const int coarse = m.taxonomy.coarse_of(ds.samples[i].fine_label);
            path_train[static_cast<std::size_t>(coarse)].push_back(i);
        }
    }

    const Rng base(mix_seed(cfg.seed, 0x7a19ULL));
    TrainHistory hist;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    auto shuffled = [](std::vector<std::size_t> v, Rng rng) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<std::size_t>(rng.next_u64() % i)]);
        return v;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_weight = 0;
        const auto e = static_cast<std::uint64_t>(epoch);

        // block 1: coarse labels (joint) or fine labels (single band)
        {
            const auto order = shuffled(ds.train_idx, base.stream(1, e));
            Rng drop_rng = base.stream(2, e);
            for (std::size_t start = 0; start < order.size(); start += batch) {
                const std::size_t end = std::min(order.size(), start + batch);
                std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                              order.begin() + static_cast<long>(end));
                std::vector<int> labels;
                labels.reserve(rows.size());
                for (std::size_t i : rows) {
                    const int fine = ds.samples[i].fine_label;
                    labels.push_back(joint ? m.taxonomy.coarse_of(fine) : fine);
                }
                const Tensor x =
                    (m.cfg.bands == BandMode::Sub7Only)
                        ? gather(cache.sub7, cache.c7 * cache.l7, rows, cache.c7, cache.l7)
                        : gather(cache.mm, cache.c60 * cache.l60, rows, cache.c60, cache.l60);
                StackCache sc;
                const Tensor probs = stack_forward(m.block1, x, true, drop_rng, &sc);
                loss_sum += nn::cross_entropy(probs, labels) * static_cast<double>(rows.size());
                loss_weight += rows.size();
                const StackGrads g = stack_backward(m.block1, sc, labels);
                nn::adam_step(block1_params, g.list(), adam1);
            }
        }

        // block 2 paths, teacher-forced routing
        if (joint) {
            for (std::size_t c = 0; c < m.paths.size(); ++c) {
                if (path_train[c].empty()) continue;
                const auto order = shuffled(path_train[c], base.stream(3, e * 1024 + c));
                Rng drop_rng = base.stream(4, e * 1024 + c);
                auto path_params = m.paths[c].params();
                for (std::size_t start = 0; start < order.size(); start += batch) {
                    const std::size_t end = std::min(order.size(), start + batch);
                    std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                                  order.begin() + static_cast<long>(end));
                    std::vector<int> labels;
                    labels.reserve(rows.size());
                    for (std::size_t i : rows)
                        labels.push_back(fine_to_local[c][static_cast<std::size_t>(
                            ds.samples[i].fine_label)]);
                    const Tensor x =
                        gather(cache.sub7, cache.c7 * cache.l7, rows, cache.c7, cache.l7);
                    StackCache sc;
                    const Tensor probs = stack_forward(m.paths[c], x, true, drop_rng, &sc);
                    loss_sum +=
                        nn::cross_entropy(probs, labels) * static_cast<double>(rows.size());
                    loss_weight += rows.size();
                    const StackGrads g = stack_backward(m.paths[c], sc, labels);
                    nn::adam_step(path_params, g.list(), adam_paths[c]);
                }
            }
        }

        hist.train_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(
                                                 1, loss_weight)));
        hist.train_accuracy.push_back(cached_accuracy(m, cache, ds, ds.train_idx));
        hist.test_accuracy.push_back(cached_accuracy(m, cache, ds, ds.test_idx));
    }
    return hist;
}

EvalResult evaluate(const MilagroModel& m, const Dataset& ds,
                    const std::vector<std::size_t>& indices) {
    const bool need_sub7 = m.cfg.bands != BandMode::MmwaveOnly;
    const bool need_mm = m.cfg.bands != BandMode::Sub7Only;
    const InputCache cache = build_cache(m, ds, need_sub7, need_mm);
    EvalResult r;
    cached_predict(m, cache, indices, r.predictions, r.confidences);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (r.predictions[i] == ds.samples[indices[i]].fine_label) ++hit;
    r.accuracy = indices.empty() ? 0.0
                                 : static_cast<double>(hit) / static_cast<double>(indices.size());
    return r;
}

// ---------------------------------------------------------------------------
// federated averaging

std::vector<Tensor> federated_average(const std::vector<std::vector<Tensor>>& parameter_sets) {
    if (parameter_sets.empty()) throw EmptyList("federated_average needs at least one set");
    const auto& first = parameter_sets.front();
    for (const auto& set : parameter_sets) {
        if (set.size() != first.size())
            throw ShapeMismatch("parameter sets differ in tensor count");
        for (std::size_t t = 0; t < set.size(); ++t)
            if (set[t].shape != first[t].shape)
                throw ShapeMismatch("parameter sets differ in tensor shapes");
    }
    std::vector<Tensor> mean = first;
    const double inv = 1.0 / static_cast<double>(parameter_sets.size());
    std::vector<double> values(parameter_sets.size());
    for (std::size_t t = 0; t < mean.size(); ++t) {
        for (std::size_t i = 0; i < mean[t].size(); ++i) {
            for (std::size_t s = 0; s < parameter_sets.size(); ++s)
                values[s] = parameter_sets[s][t].data[i];
            // canonical summation order makes the mean permutation-invariant
            std::sort(values.begin(), values.end());
            double acc = 0.0;
            for (double v : values) acc += v;
            mean[t].data[i] = acc * inv;
        }
    }
    return mean;
}

MilagroModel federated_average(const std::vector<const MilagroModel*>& models) {
    if (models.empty()) throw EmptyList("federated_average needs at least one model");
    std::vector<std::vector<Tensor>> sets;
    for (const auto* m : models) {
        std::vector<Tensor> set;
        for (const auto* t : m->parameters()) set.push_back(*t);
        sets.push_back(std::move(set));
    }
    const auto mean = federated_average(sets);
    MilagroModel out = *models.front();
    auto params = out.parameters();
    for (std::size_t t = 0; t < params.size(); ++t) *params[t] = mean[t];
    return out;
}

// ---------------------------------------------------------------------------
// checkpointing

namespace {

constexpr char kMagic[4] = {'M', 'G', 'R', 'O'};

ordered_json stats_json(const NormStats& s) {
    return ordered_json{{"mean", s.mean}, {"std", s.std}};
}

NormStats stats_from(const ordered_json& j) {
    NormStats s;
    s.mean = j.at("mean").get<std::vector<float>>();
    s.std = j.at("std").get<std::vector<float>>();
    return s;
}

}  // namespace

void save_checkpoint(const MilagroModel& m, const std::filesystem::path& path) {
    std::vector<std::uint8_t> blob;
    std::size_t param_count = 0;
    ordered_json shapes = ordered_json::array();
    for (const auto* t : m.parameters()) {
        shapes.push_back(t->shape);
        param_count += t->size();
    }
    blob.resize(param_count * 4);
    std::size_t off = 0;
    for (const auto* t : m.parameters())
        for (double v : t->data) {
            io::pack_f32le(static_cast<float>(v), &blob[off]);
            off += 4;
        }
    const std::uint64_t checksum = fnv1a64(blob.data(), blob.size());

    ordered_json h;
    h["schema"] = 1;
    h["bands"] = band_mode_name(m.cfg.bands);
    h["config"] = ordered_json{{"conv_filters", m.cfg.conv_filters},
                               {"conv_kernel", m.cfg.conv_kernel},
                               {"pool", m.cfg.pool},
                               {"hidden", m.cfg.hidden},
                               {"dropout_rate", m.cfg.dropout_rate},
                               {"sub7_pooled_beacons", m.cfg.sub7_pooled_beacons},
                               {"mmwave_pooled_samples", m.cfg.mmwave_pooled_samples}};
    h["input"] = ordered_json{{"sub7_channels", m.sub7_channels},
                              {"sub7_len", m.sub7_len},
                              {"mmwave_channels", m.mmwave_channels},
                              {"mmwave_len", m.mmwave_len}};
    h["taxonomy"] = ordered_json::parse(scene::taxonomy_to_json(m.taxonomy));
    h["layer_shapes"] = shapes;
    h["has_norm"] = m.has_norm;
    if (m.has_norm) {
        h["norm_sub7"] = stats_json(m.norm_sub7);
        h["norm_mmwave"] = stats_json(m.norm_mmwave);
    }
    h["param_count"] = param_count;
    h["param_checksum"] = std::to_string(checksum);
    const std::string header = h.dump();

    std::vector<std::uint8_t> file;
    file.reserve(8 + header.size() + blob.size());
    file.insert(file.end(), kMagic, kMagic + 4);
    const auto hlen = static_cast<std::uint32_t>(header.size());
    for (int i = 0; i < 4; ++i) file.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xff));
    file.insert(file.end(), header.begin(), header.end());
    file.insert(file.end(), blob.begin(), blob.end());
    io::write_bytes_atomic(path, file.data(), file.size());
}

MilagroModel load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = io::read_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw SchemaVersionMismatch("not a model checkpoint: " + path.string());
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (bytes.size() < 8 + hlen) throw CorruptChecksum("checkpoint header truncated");

    ordered_json h;
    try {
        h = ordered_json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + hlen));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptChecksum("checkpoint header unparseable: " + std::string(e.what()));
    }
    if (!h.contains("schema") || h.at("schema").get<int>() != 1)
        throw SchemaVersionMismatch("checkpoint schema is not 1");

    ModelConfig cfg;
    cfg.bands = band_mode_from_name(h.at("bands").get<std::string>());
    const auto& cj = h.at("config");
    cfg.conv_filters = cj.at("conv_filters").get<int>();
    cfg.conv_kernel = cj.at("conv_kernel").get<int>();
    cfg.pool = cj.at("pool").get<int>();
    cfg.hidden = cj.at("hidden").get<int>();
    cfg.dropout_rate = cj.at("dropout_rate").get<double>();
    cfg.sub7_pooled_beacons = cj.at("sub7_pooled_beacons").get<int>();
    cfg.mmwave_pooled_samples = cj.at("mmwave_pooled_samples").get<int>();

    const LabelTaxonomy tax = scene::taxonomy_from_json(h.at("taxonomy").dump());
    const auto& ij = h.at("input");

    // rebuild with the recorded geometry, then overwrite the parameters
    MilagroModel m;
    m.cfg = cfg;
    m.taxonomy = tax;
    m.sub7_channels = ij.at("sub7_channels").get<std::size_t>();
    m.sub7_len = ij.at("sub7_len").get<std::size_t>();
    m.mmwave_channels = ij.at("mmwave_channels").get<std::size_t>();
    m.mmwave_len = ij.at("mmwave_len").get<std::size_t>();
    Rng rng(0);
    const auto fine = static_cast<std::size_t>(tax.fine_count());
    if (cfg.bands == BandMode::Sub7Only) {
        m.block1.init(m.sub7_channels, m.sub7_len, cfg, fine, rng);
    } else if (cfg.bands == BandMode::MmwaveOnly) {
        m.block1.init(m.mmwave_channels, m.mmwave_len, cfg, fine, rng);
    } else {
        const auto coarse = static_cast<std::size_t>(tax.coarse_count());
        m.block1.init(m.mmwave_channels, m.mmwave_len, cfg, coarse, rng);
        m.path_fine.assign(coarse, {});
        for (int f = 0; f < tax.fine_count(); ++f)
            m.path_fine[static_cast<std::size_t>(tax.coarse_of(f))].push_back(f);
        for (std::size_t c = 0; c < coarse; ++c) {
            BlockStack p;
            p.init(m.sub7_channels, m.sub7_len, cfg, m.path_fine[c].size(), rng);
            m.paths.push_back(std::move(p));
        }
    }

    m.has_norm = h.at("has_norm").get<bool>();
    if (m.has_norm) {
        m.norm_sub7 = stats_from(h.at("norm_sub7"));
        m.norm_mmwave = stats_from(h.at("norm_mmwave"));
    }

    const auto param_count = h.at("param_count").get<std::size_t>();
    const std::size_t blob_off = 8 + hlen;
    if (bytes.size() - blob_off != param_count * 4)
        throw CorruptChecksum("checkpoint parameter blob truncated");
    const std::uint64_t checksum = fnv1a64(bytes.data() + blob_off, param_count * 4);
    if (std::to_string(checksum) != h.at("param_checksum").get<std::string>())
        throw CorruptChecksum("checkpoint parameter checksum mismatch");

    auto params = m.parameters();
    std::size_t expect = 0;
    for (const auto* t : params) expect += t->size();
    if (expect != param_count) throw CorruptChecksum("checkpoint parameter count mismatch");
    std::size_t off = blob_off;
    for (auto* t : params)
        for (auto& v : t->data) {
            v = io::unpack_f32le(&bytes[off]);
            off += 4;
        }
    return m;
}

}  // namespace milagro::model
