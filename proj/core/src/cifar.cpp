#include "declust/cifar.hpp"

#include <cmath>
#include <stdexcept>

namespace declust {

std::vector<CifarRecord> cifar_read(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % kCifarRecordBytes != 0)
        throw std::invalid_argument(
            "cifar: truncated record at offset " +
            std::to_string(bytes.size() - bytes.size() % kCifarRecordBytes));
    std::size_t n = bytes.size() / kCifarRecordBytes;
    std::vector<CifarRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
        if (rec[0] > 9)
            throw std::invalid_argument("cifar: label byte " + std::to_string(rec[0]) +
                                        " > 9 at offset " + std::to_string(i * kCifarRecordBytes));
        records[i].label = rec[0];
        std::copy(rec + 1, rec + kCifarRecordBytes, records[i].pixels.begin());
    }
    return records;
}

std::vector<std::uint8_t> cifar_write(const std::vector<CifarRecord>& records) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(records.size() * kCifarRecordBytes);
    for (const CifarRecord& r : records) {
        bytes.push_back(r.label);
        bytes.insert(bytes.end(), r.pixels.begin(), r.pixels.end());
    }
    return bytes;
}

Dataset cifar_to_dataset(const std::vector<CifarRecord>& records) {
    if (records.empty()) throw std::invalid_argument("cifar: no records");
    constexpr std::size_t kPlane = 1024;  // 32 * 32
    const double n_per_channel = static_cast<double>(records.size() * kPlane);

    // per-channel statistics over the whole batch, pixels scaled to [0,1]
    double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    for (const CifarRecord& r : records)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < kPlane; ++i) {
                double v = static_cast<double>(r.pixels[c * kPlane + i]) / 255.0;
                mean[c] += v;
                sq[c] += v * v;
            }
    double sd[3];
    for (std::size_t c = 0; c < 3; ++c) {
        mean[c] /= n_per_channel;
        double var = sq[c] / n_per_channel - mean[c] * mean[c];
        sd[c] = std::sqrt(var < 0.0 ? 0.0 : var) + 1e-8;
    }

    Dataset ds;
    ds.class_count = 10;
    ds.samples.reserve(records.size());
    ds.labels.reserve(records.size());
    for (const CifarRecord& r : records) {
        Tensor img({3, 32, 32});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < kPlane; ++i) {
                double v = static_cast<double>(r.pixels[c * kPlane + i]) / 255.0;
                img.data[c * kPlane + i] = (v - mean[c]) / sd[c];
            }
        ds.samples.push_back(std::move(img));
        ds.labels.push_back(static_cast<int>(r.label));
    }
    ds.validate();
    return ds;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
    return cifar_to_dataset(cifar_read(bytes));
}

}  // namespace declust
