#include "milagro/io.hpp"

#include <cstring>
#include <fstream>

#include "milagro/errors.hpp"
#include "milagro/hash.hpp"

namespace milagro::io {

namespace fs = std::filesystem;

void pack_f32le(float v, std::uint8_t* out) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out[0] = static_cast<std::uint8_t>(bits & 0xff);
    out[1] = static_cast<std::uint8_t>((bits >> 8) & 0xff);
    out[2] = static_cast<std::uint8_t>((bits >> 16) & 0xff);
    out[3] = static_cast<std::uint8_t>((bits >> 24) & 0xff);
}

float unpack_f32le(const std::uint8_t* in) {
    const std::uint32_t bits = static_cast<std::uint32_t>(in[0]) |
                               (static_cast<std::uint32_t>(in[1]) << 8) |
                               (static_cast<std::uint32_t>(in[2]) << 16) |
                               (static_cast<std::uint32_t>(in[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_bytes_atomic(const fs::path& path, const void* data, std::size_t n) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoFailure("cannot open for writing: " + tmp.string());
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!f) throw IoFailure("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoFailure("rename failed: " + path.string() + ": " + ec.message());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoFailure("cannot open for reading: " + path.string());
    const std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw IoFailure("short read: " + path.string());
    return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_bytes_atomic(path, text.data(), text.size());
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_f32_blob(const fs::path& path, const std::vector<float>& values) {
    std::vector<std::uint8_t> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) pack_f32le(values[i], &buf[i * 4]);
    write_bytes_atomic(path, buf.data(), buf.size());
}

std::vector<float> read_f32_blob(const fs::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() % 4 != 0) throw IoFailure("blob size not a multiple of 4: " + path.string());
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = unpack_f32le(&bytes[i * 4]);
    return out;
}

void write_c64_blob(const fs::path& path, const std::vector<std::complex<double>>& values) {
    std::vector<float> flat(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        flat[2 * i] = static_cast<float>(values[i].real());
        flat[2 * i + 1] = static_cast<float>(values[i].imag());
    }
    write_f32_blob(path, flat);
}

std::vector<std::complex<double>> read_c64_blob(const fs::path& path) {
    const auto flat = read_f32_blob(path);
    if (flat.size() % 2 != 0) throw IoFailure("complex blob has odd element count");
    std::vector<std::complex<double>> out(flat.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {flat[2 * i], flat[2 * i + 1]};
    return out;
}

std::uint64_t file_fnv1a64(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace milagro::io
