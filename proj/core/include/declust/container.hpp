#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "declust/tensor.hpp"

namespace declust {

/// One entry of the flat binary tensor container used for checkpoints and
/// dataset files.
struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Binary layout (all integers little-endian):
///   magic "DCLTNSR1" (8 bytes), u64 tensor count, then per tensor:
///   u32 name length, name bytes, u32 rank, u64 dims[rank],
///   f64 values[numel] as IEEE-754 little-endian bits.
/// Round trips are bit-exact.
std::vector<std::uint8_t> container_to_bytes(const std::vector<NamedTensor>& items);
std::vector<NamedTensor> container_from_bytes(const std::vector<std::uint8_t>& bytes);

void save_container(const std::string& path, const std::vector<NamedTensor>& items);
std::vector<NamedTensor> load_container(const std::string& path);

/// Helpers for whole-file IO (throw IoError-style std::runtime_error).
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_file_text(const std::string& path, const std::string& text);
std::string read_file_text(const std::string& path);

}  // namespace declust
