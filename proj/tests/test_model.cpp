#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>

#include "milagro/errors.hpp"
#include "milagro/io.hpp"
#include "milagro/model.hpp"
#include "milagro/rng.hpp"

using namespace milagro;
using model::BandMode;
using model::Dataset;
using model::MilagroModel;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() / ("milagro_model_" + std::to_string(tick % 1000000));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

scene::LabelTaxonomy toy_taxonomy() {
    scene::LabelTaxonomy tax;
    tax.kind = scene::TaxonomyKind::Custom;
    tax.fine_labels = {"a", "b", "c", "d"};
    tax.coarse_labels = {"left", "right"};
    tax.coarse_map = {0, 0, 1, 1};
    tax.anchors = {{1, 1, 0}, {2, 2, 0}};  // unused by the toy data
    return tax;
}

// Gaussian blobs with a margin far above the noise: the coarse pair is
// separable in the mmwave tensor, the fine label within a pair in sub7.
Dataset toy_dataset(int per_class, double noise, std::uint64_t seed) {
    Dataset ds;
    ds.taxonomy = toy_taxonomy();
    Rng rng(seed);
    for (int c = 0; c < 4; ++c)
        for (int s = 0; s < per_class; ++s) {
            model::Sample sample;
            sample.fine_label = c;
            sample.sub7.layout = dsp::FeatureLayout::Sub7;
            sample.sub7.shape = {2, 8, 5};
            sample.sub7.data.resize(2 * 8 * 5);
            for (std::size_t i = 0; i < sample.sub7.data.size(); ++i)
                sample.sub7.data[i] = static_cast<float>(
                    3.0 * c * std::sin(0.7 * (c + 1) * static_cast<double>(i)) +
                    noise * rng.gaussian());
            sample.mmwave.layout = dsp::FeatureLayout::MmWave;
            sample.mmwave.shape = {4, 16};
            sample.mmwave.data.resize(4 * 16);
            const int coarse = c / 2;
            for (std::size_t i = 0; i < sample.mmwave.data.size(); ++i)
                sample.mmwave.data[i] = static_cast<float>(
                    4.0 * coarse * std::cos(0.3 * static_cast<double>(i)) +
                    noise * rng.gaussian());
            ds.samples.push_back(std::move(sample));
        }
    model::stratified_split(ds, 0.8, seed);
    return ds;
}

MilagroModel toy_model(const Dataset& ds, BandMode bands, std::uint64_t seed) {
    model::ModelConfig mc;
    mc.bands = bands;
    mc.hidden = 32;
    mc.conv_filters = 8;
    mc.sub7_pooled_beacons = 4;
    mc.mmwave_pooled_samples = 8;
    return model::build_model(mc, ds.taxonomy, ds.samples.front().sub7.shape,
                              ds.samples.front().mmwave.shape, seed);
}

}  // namespace

TEST_CASE("stratified split: disjoint, covering, per-class 80/20") {
    auto ds = toy_dataset(10, 0.1, 3);
    CHECK(ds.train_idx.size() == 32);
    CHECK(ds.test_idx.size() == 8);
    std::vector<int> seen(40, 0);
    for (auto i : ds.train_idx) seen[i] += 1;
    for (auto i : ds.test_idx) seen[i] += 1;
    for (int s : seen) CHECK(s == 1);
    for (int c = 0; c < 4; ++c) {
        int train_c = 0;
        for (auto i : ds.train_idx)
            if (ds.samples[i].fine_label == c) ++train_c;
        CHECK(train_c == 8);
    }
}

TEST_CASE("separable 4-class toy reaches 0.99+ within 50 epochs") {
    auto ds = toy_dataset(20, 0.25, 11);
    auto m = toy_model(ds, BandMode::Joint, 1);
    model::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.seed = 5;
    const auto hist = model::train(m, ds, cfg);
    REQUIRE(hist.test_accuracy.size() == 50);
    CHECK(hist.test_accuracy.back() >= 0.99);
    CHECK(hist.train_loss.back() < hist.train_loss.front());
}

TEST_CASE("zero epochs is rejected") {
    auto ds = toy_dataset(4, 0.1, 2);
    auto m = toy_model(ds, BandMode::Joint, 1);
    model::TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(model::train(m, ds, cfg), std::invalid_argument);
}

TEST_CASE("empty dataset and foreign labels are rejected") {
    Dataset empty;
    empty.taxonomy = toy_taxonomy();
    auto ds = toy_dataset(4, 0.1, 2);
    auto m = toy_model(ds, BandMode::Joint, 1);
    model::TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(model::train(m, empty, cfg), EmptyDataset);

    auto bad = toy_dataset(4, 0.1, 2);
    bad.samples[0].fine_label = 9;
    CHECK_THROWS_AS(model::train(m, bad, cfg), LabelOutsideTaxonomy);
}

TEST_CASE("fine_probs is a probability vector supported on one path") {
    auto ds = toy_dataset(6, 0.3, 7);
    auto m = toy_model(ds, BandMode::Joint, 3);
    model::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 1;
    model::train(m, ds, cfg);

    Rng rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        dsp::FeatureTensor s7, s60;
        s7.layout = dsp::FeatureLayout::Sub7;
        s7.shape = {2, 8, 5};
        for (int i = 0; i < 80; ++i) s7.data.push_back(static_cast<float>(rng.gaussian()));
        s60.layout = dsp::FeatureLayout::MmWave;
        s60.shape = {4, 16};
        for (int i = 0; i < 64; ++i) s60.data.push_back(static_cast<float>(rng.gaussian()));

        Rng fr(0);
        const auto r = model::forward(m, s60, s7, false, fr);
        double sum = 0.0;
        for (double p : r.fine_probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        // support confined to exactly one path's label set
        const bool left = r.fine_probs[0] + r.fine_probs[1] > 1e-12;
        const bool right = r.fine_probs[2] + r.fine_probs[3] > 1e-12;
        CHECK(left != right);
    }
}

TEST_CASE("degenerate single-coarse taxonomy reduces to one classifier") {
    auto ds = toy_dataset(6, 0.2, 5);
    ds.taxonomy.coarse_labels = {"all"};
    ds.taxonomy.coarse_map = {0, 0, 0, 0};
    auto m = toy_model(ds, BandMode::Joint, 2);
    REQUIRE(m.paths.size() == 1);
    model::TrainConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 3;
    model::train(m, ds, cfg);
    Rng fr(0);
    const auto r = model::forward(m, ds.samples[0].mmwave, ds.samples[0].sub7, false, fr);
    double sum = 0.0;
    for (double p : r.fine_probs) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(r.coarse_probs.size() == 1);
    CHECK(r.coarse_probs[0] == doctest::Approx(1.0));
}

TEST_CASE("predict: deterministic, confidence in (0,1]") {
    auto ds = toy_dataset(6, 0.2, 5);
    auto m = toy_model(ds, BandMode::Joint, 2);
    model::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 3;
    model::train(m, ds, cfg);
    const auto a = model::predict(m, ds.samples[1].mmwave, ds.samples[1].sub7);
    const auto b = model::predict(m, ds.samples[1].mmwave, ds.samples[1].sub7);
    CHECK(a.fine_label == b.fine_label);
    CHECK(a.confidence == b.confidence);
    CHECK(a.confidence > 0.0);
    CHECK(a.confidence <= 1.0);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    auto ds = toy_dataset(6, 0.3, 13);
    auto m1 = toy_model(ds, BandMode::Joint, 4);
    auto m2 = toy_model(ds, BandMode::Joint, 4);
    model::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 21;
    const auto h1 = model::train(m1, ds, cfg);
    const auto h2 = model::train(m2, ds, cfg);
    const auto p1 = m1.parameters();
    const auto p2 = m2.parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t t = 0; t < p1.size(); ++t)
        for (std::size_t i = 0; i < p1[t]->size(); ++i)
            CHECK(p1[t]->data[i] == p2[t]->data[i]);
    CHECK(h1.test_accuracy == h2.test_accuracy);
    CHECK(h1.train_loss == h2.train_loss);
}

TEST_CASE("federated averaging: identity, symmetry, coordinate means") {
    Tensor a({3});
    a.data = {1.0, 2.0, 3.0};
    const auto id = model::federated_average(std::vector<std::vector<Tensor>>{{a}});
    for (std::size_t i = 0; i < 3; ++i) CHECK(id[0].data[i] == a.data[i]);

    Tensor neg = a;
    for (auto& v : neg.data) v = -v;
    const auto zero = model::federated_average({{a}, {neg}});
    for (double v : zero[0].data) CHECK(v == 0.0);

    Rng rng(2);
    std::vector<std::vector<Tensor>> sets;
    for (int n = 0; n < 3; ++n) {
        Tensor t({5});
        for (auto& v : t.data) v = rng.gaussian();
        sets.push_back({t});
    }
    const auto mean = model::federated_average(sets);
    for (std::size_t i = 0; i < 5; ++i) {
        const double want =
            (sets[0][0].data[i] + sets[1][0].data[i] + sets[2][0].data[i]) / 3.0;
        CHECK(std::abs(mean[0].data[i] - want) < 1e-12);
    }

    // permutation invariance and idempotence on identical inputs
    const auto mean2 = model::federated_average({sets[2], sets[0], sets[1]});
    for (std::size_t i = 0; i < 5; ++i) CHECK(mean[0].data[i] == mean2[0].data[i]);
    const auto same = model::federated_average({sets[0], sets[0]});
    for (std::size_t i = 0; i < 5; ++i) CHECK(same[0].data[i] == sets[0][0].data[i]);

    CHECK_THROWS_AS(model::federated_average(std::vector<std::vector<Tensor>>{}), EmptyList);
    Tensor wrong({2});
    CHECK_THROWS_AS(model::federated_average({{a}, {wrong}}), ShapeMismatch);
}

TEST_CASE("federated averaging over whole models") {
    auto ds = toy_dataset(4, 0.2, 6);
    auto m1 = toy_model(ds, BandMode::Joint, 10);
    auto m2 = toy_model(ds, BandMode::Joint, 20);
    const auto avg = model::federated_average(std::vector<const MilagroModel*>{&m1, &m2});
    const auto pa = avg.parameters();
    const auto p1 = m1.parameters();
    const auto p2 = m2.parameters();
    for (std::size_t t = 0; t < pa.size(); ++t)
        for (std::size_t i = 0; i < pa[t]->size(); ++i)
            CHECK(pa[t]->data[i] ==
                  doctest::Approx((p1[t]->data[i] + p2[t]->data[i]) / 2.0).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip: bytes stable, argmax preserved, corruption detected") {
    TempDir tmp;
    auto ds = toy_dataset(10, 0.3, 8);
    auto m = toy_model(ds, BandMode::Joint, 5);
    model::TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 9;
    model::train(m, ds, cfg);

    const auto p1 = tmp.path / "a.ckpt";
    const auto p2 = tmp.path / "b.ckpt";
    model::save_checkpoint(m, p1);
    const auto loaded = model::load_checkpoint(p1);
    model::save_checkpoint(loaded, p2);
    CHECK(io::read_bytes(p1) == io::read_bytes(p2));  // save -> load -> save

    int disagreements = 0;
    for (const auto& s : ds.samples) {
        const auto a = model::predict(m, s.mmwave, s.sub7);
        const auto b = model::predict(loaded, s.mmwave, s.sub7);
        if (a.fine_label != b.fine_label) ++disagreements;
    }
    CHECK(disagreements == 0);

    // truncation
    const auto bytes = io::read_bytes(p1);
    io::write_bytes_atomic(tmp.path / "trunc.ckpt", bytes.data(), bytes.size() - 16);
    CHECK_THROWS_AS(model::load_checkpoint(tmp.path / "trunc.ckpt"), CorruptChecksum);

    // not a checkpoint at all
    io::write_text_atomic(tmp.path / "junk.ckpt", "hello");
    CHECK_THROWS_AS(model::load_checkpoint(tmp.path / "junk.ckpt"), SchemaVersionMismatch);
}

TEST_CASE("single-band models train on their own band") {
    auto ds = toy_dataset(10, 0.25, 15);
    model::TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 8;
    cfg.seed = 2;

    auto sub7 = toy_model(ds, BandMode::Sub7Only, 1);
    model::train(sub7, ds, cfg);
    const auto e7 = model::evaluate(sub7, ds, ds.test_idx);
    CHECK(e7.accuracy >= 0.99);  // sub7 tensor separates all four classes

    auto mm = toy_model(ds, BandMode::MmwaveOnly, 1);
    model::train(mm, ds, cfg);
    const auto e60 = model::evaluate(mm, ds, ds.test_idx);
    // the mmwave tensor only separates the coarse pair
    CHECK(e60.accuracy <= 0.8);
    CHECK(e60.accuracy >= 0.3);
}

TEST_CASE("teacher-forced path training reduces loss on separable data") {
    auto ds = toy_dataset(12, 0.2, 19);
    auto m = toy_model(ds, BandMode::Joint, 6);
    model::TrainConfig cfg;
    cfg.epochs = 15;
    cfg.seed = 4;
    cfg.gate_mode = model::GateMode::TeacherForced;
    const auto hist = model::train(m, ds, cfg);
    CHECK(hist.train_loss.back() < hist.train_loss.front());
}
