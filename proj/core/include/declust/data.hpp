#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "declust/tensor.hpp"

namespace declust {

/// Labeled sample store. Samples are either images (C,H,W) or vectors (d),
/// uniformly shaped within one dataset.
struct Dataset {
    std::vector<Tensor> samples;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return samples.size(); }
    bool is_image() const { return !samples.empty() && samples[0].rank() == 3; }
    void validate() const;
    std::vector<std::size_t> per_class_counts() const;
};

/// Exponential class-count profile: head class keeps max_per_class samples,
/// tail class 1/imbalance_ratio of that.
struct LongTailSpec {
    int class_count = 2;
    std::size_t max_per_class = 400;
    double imbalance_ratio = 20.0;

    void validate() const;
};

/// n_c = round(n_max * r^(-c / (C-1))), rounded half away from zero,
/// floored at 1.
std::vector<std::size_t> long_tail_counts(const LongTailSpec& spec);

/// Per-class Gaussian point clouds; deterministic given seed.
Dataset gen_blobs(int classes, std::size_t dim, const std::vector<std::vector<double>>& means,
                  double sigma, const std::vector<std::size_t>& counts, std::uint64_t seed);

/// Deterministic class-mean layout for blob datasets: class c sits at
/// +/- (separation/2) * (1 + c / (2 dim)) along axis (c/2) % dim.
std::vector<std::vector<double>> make_blob_means(int classes, std::size_t dim, double separation);

/// Dataset container: samples in the tensor container ("sample.<index>" plus
/// a "meta" record) next to a CSV label file "index,label".
void save_dataset(const std::string& tensor_path, const std::string& label_csv_path,
                  const Dataset& ds);
Dataset load_dataset(const std::string& tensor_path, const std::string& label_csv_path);

}  // namespace declust
