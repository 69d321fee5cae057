#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace milagro::io {

// Raw little-endian float32 blobs; complex values interleave (real0, imag0,
// real1, ...). Writes are atomic (temp file + rename).

void write_bytes_atomic(const std::filesystem::path& path, const void* data, std::size_t n);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_f32_blob(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32_blob(const std::filesystem::path& path);

void write_c64_blob(const std::filesystem::path& path,
                    const std::vector<std::complex<double>>& values);
std::vector<std::complex<double>> read_c64_blob(const std::filesystem::path& path);

// Little-endian scalar packing used by blob and checkpoint code.
void pack_f32le(float v, std::uint8_t* out);
float unpack_f32le(const std::uint8_t* in);

std::uint64_t file_fnv1a64(const std::filesystem::path& path);

}  // namespace milagro::io
