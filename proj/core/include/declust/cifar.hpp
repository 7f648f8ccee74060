#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "declust/data.hpp"

namespace declust {

/// One CIFAR-10 binary record: label byte + 3072 pixel bytes (32x32 R plane,
/// then G, then B, row-major).
struct CifarRecord {
    std::uint8_t label;
    std::array<std::uint8_t, 3072> pixels;
};

constexpr std::size_t kCifarRecordBytes = 3073;

/// Parses a binary batch file. Rejects truncated records (with the byte
/// offset) and label bytes > 9.
std::vector<CifarRecord> cifar_read(std::span<const std::uint8_t> bytes);

/// Inverse of cifar_read; read-then-write is byte-lossless.
std::vector<std::uint8_t> cifar_write(const std::vector<CifarRecord>& records);

/// Records -> dataset of (3,32,32) tensors: pixels scaled to [0,1], then
/// per-channel standardization with statistics computed over the records
/// themselves (zero-variance channels guarded by epsilon 1e-8).
Dataset cifar_to_dataset(const std::vector<CifarRecord>& records);

/// cifar_to_dataset(cifar_read(bytes)).
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);

}  // namespace declust
