#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "milagro/errors.hpp"
#include "milagro/harness.hpp"
#include "milagro/io.hpp"
#include "milagro/model.hpp"
#include "milagro/rng.hpp"

using namespace milagro;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() / ("milagro_io_" + std::to_string(tick % 1000000));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("f32 blob round-trip is bit-exact") {
    TempDir tmp;
    Rng rng(1);
    std::vector<float> values;
    for (int i = 0; i < 1000; ++i) values.push_back(static_cast<float>(rng.gaussian() * 1e3));
    values.push_back(0.0f);
    values.push_back(-0.0f);
    values.push_back(1e-38f);
    const auto path = tmp.path / "x.f32";
    io::write_f32_blob(path, values);
    const auto back = io::read_f32_blob(path);
    REQUIRE(back.size() == values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t a, b;
        std::memcpy(&a, &values[i], 4);
        std::memcpy(&b, &back[i], 4);
        CHECK(a == b);
    }
}

TEST_CASE("complex blobs interleave real0, imag0, real1, ...") {
    TempDir tmp;
    const std::vector<std::complex<double>> values = {{1.0, 2.0}, {-3.0, 4.5}};
    const auto path = tmp.path / "c.f32";
    io::write_c64_blob(path, values);

    const auto flat = io::read_f32_blob(path);
    REQUIRE(flat.size() == 4);
    CHECK(flat[0] == 1.0f);
    CHECK(flat[1] == 2.0f);
    CHECK(flat[2] == -3.0f);
    CHECK(flat[3] == 4.5f);

    const auto back = io::read_c64_blob(path);
    CHECK(back[1].real() == -3.0);
    CHECK(back[1].imag() == 4.5);
}

TEST_CASE("blob bytes are little-endian") {
    TempDir tmp;
    const auto path = tmp.path / "le.f32";
    io::write_f32_blob(path, {1.0f});  // 0x3f800000
    const auto bytes = io::read_bytes(path);
    REQUIRE(bytes.size() == 4);
    CHECK(bytes[0] == 0x00);
    CHECK(bytes[1] == 0x00);
    CHECK(bytes[2] == 0x80);
    CHECK(bytes[3] == 0x3f);
}

TEST_CASE("missing files raise IoFailure") {
    CHECK_THROWS_AS(io::read_bytes("/nonexistent/path/x.bin"), IoFailure);
    CHECK_THROWS_AS(io::read_f32_blob("/nonexistent/path/x.f32"), IoFailure);
}

TEST_CASE("dataset container round-trip preserves bytes and metadata") {
    TempDir tmp;
    auto sc = harness::make_losnlos(2.0, "los", 3);
    sc.fpbt.n_awv = 4;
    sc.fpbt.n_time_samples = 30;
    sc.fpbt.n_taps = 16;
    sc.beacon_window = 8;
    const auto ds = harness::gen_dataset(sc, 77);

    const auto dir = tmp.path / "ds";
    model::save_dataset(ds, dir);
    const auto back = model::load_dataset(dir);

    REQUIRE(back.samples.size() == ds.samples.size());
    CHECK(back.train_idx == ds.train_idx);
    CHECK(back.test_idx == ds.test_idx);
    CHECK(back.scene_hash == ds.scene_hash);
    CHECK(back.taxonomy.fine_labels == ds.taxonomy.fine_labels);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].fine_label == ds.samples[i].fine_label);
        REQUIRE(back.samples[i].sub7.data.size() == ds.samples[i].sub7.data.size());
        for (std::size_t k = 0; k < ds.samples[i].sub7.data.size(); ++k)
            CHECK(back.samples[i].sub7.data[k] == ds.samples[i].sub7.data[k]);
        for (std::size_t k = 0; k < ds.samples[i].mmwave.data.size(); ++k)
            CHECK(back.samples[i].mmwave.data[k] == ds.samples[i].mmwave.data[k]);
    }

    // saving the loaded dataset reproduces identical blobs
    const auto dir2 = tmp.path / "ds2";
    model::save_dataset(back, dir2);
    CHECK(io::read_bytes(dir / "sub7.f32") == io::read_bytes(dir2 / "sub7.f32"));
    CHECK(io::read_bytes(dir / "mmwave.f32") == io::read_bytes(dir2 / "mmwave.f32"));
    CHECK(io::read_text(dir / "manifest.json") == io::read_text(dir2 / "manifest.json"));
}

TEST_CASE("corrupted containers are rejected") {
    TempDir tmp;
    auto sc = harness::make_losnlos(2.0, "los", 2);
    sc.fpbt.n_awv = 2;
    sc.fpbt.n_time_samples = 10;
    sc.fpbt.n_taps = 8;
    sc.beacon_window = 4;
    const auto ds = harness::gen_dataset(sc, 1);
    const auto dir = tmp.path / "ds";
    model::save_dataset(ds, dir);

    // truncate a blob
    {
        const auto blob = io::read_bytes(dir / "sub7.f32");
        io::write_bytes_atomic(dir / "sub7.f32", blob.data(), blob.size() - 8);
    }
    CHECK_THROWS_AS(model::load_dataset(dir), CorruptChecksum);

    // schema bump
    model::save_dataset(ds, dir);
    auto text = io::read_text(dir / "manifest.json");
    const auto pos = text.find("\"schema\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "\"schema\": 9");
    io::write_text_atomic(dir / "manifest.json", text);
    CHECK_THROWS_AS(model::load_dataset(dir), SchemaVersionMismatch);
}
