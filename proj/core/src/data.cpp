#include "declust/data.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "declust/container.hpp"
#include "declust/errors.hpp"
#include "declust/rng.hpp"

namespace declust {

void Dataset::validate() const {
    if (samples.size() != labels.size())
        throw std::invalid_argument("Dataset: sample/label count mismatch");
    if (class_count < 1) throw std::invalid_argument("Dataset: class_count must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= class_count)
            throw std::invalid_argument("Dataset: label " + std::to_string(labels[i]) +
                                        " at index " + std::to_string(i) + " out of range");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (!samples[i].same_shape(samples[0]))
            throw std::invalid_argument("Dataset: sample " + std::to_string(i) +
                                        " shape differs from sample 0");
}

std::vector<std::size_t> Dataset::per_class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)]++;
    return counts;
}

void LongTailSpec::validate() const {
    if (class_count < 2) throw std::invalid_argument("LongTailSpec: class_count must be >= 2");
    if (max_per_class < 1) throw std::invalid_argument("LongTailSpec: max_per_class must be >= 1");
    if (!(imbalance_ratio >= 1.0))
        throw std::invalid_argument("LongTailSpec: imbalance_ratio must be >= 1");
}

std::vector<std::size_t> long_tail_counts(const LongTailSpec& spec) {
    spec.validate();
    std::vector<std::size_t> counts;
    counts.reserve(static_cast<std::size_t>(spec.class_count));
    for (int c = 0; c < spec.class_count; ++c) {
        double frac = static_cast<double>(c) / static_cast<double>(spec.class_count - 1);
        double raw = static_cast<double>(spec.max_per_class) * std::pow(spec.imbalance_ratio, -frac);
        long long rounded = std::llround(raw);  // round half away from zero
        counts.push_back(static_cast<std::size_t>(rounded < 1 ? 1 : rounded));
    }
    return counts;
}

Dataset gen_blobs(int classes, std::size_t dim, const std::vector<std::vector<double>>& means,
                  double sigma, const std::vector<std::size_t>& counts, std::uint64_t seed) {
    if (classes < 1) throw std::invalid_argument("gen_blobs: classes must be >= 1");
    if (means.size() != static_cast<std::size_t>(classes) ||
        counts.size() != static_cast<std::size_t>(classes))
        throw std::invalid_argument("gen_blobs: means/counts must list one entry per class");
    for (const auto& m : means)
        if (m.size() != dim) throw std::invalid_argument("gen_blobs: mean dimension mismatch");

    Dataset ds;
    ds.class_count = classes;
    for (int c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c), i));
            Tensor x({dim});
            for (std::size_t j = 0; j < dim; ++j)
                x.data[j] = means[static_cast<std::size_t>(c)][j] + sigma * rng.normal();
            ds.samples.push_back(std::move(x));
            ds.labels.push_back(c);
        }
    }
    ds.validate();
    return ds;
}

std::vector<std::vector<double>> make_blob_means(int classes, std::size_t dim, double separation) {
    if (classes < 1 || dim == 0) throw std::invalid_argument("make_blob_means: bad arguments");
    std::vector<std::vector<double>> means;
    means.reserve(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        std::vector<double> m(dim, 0.0);
        std::size_t axis = (static_cast<std::size_t>(c) / 2) % dim;
        double sign = c % 2 == 0 ? 1.0 : -1.0;
        double radius = 1.0 + static_cast<double>(c) / static_cast<double>(2 * dim);
        m[axis] = sign * (separation / 2.0) * radius;
        means.push_back(std::move(m));
    }
    return means;
}

void save_dataset(const std::string& tensor_path, const std::string& label_csv_path,
                  const Dataset& ds) {
    ds.validate();
    std::vector<NamedTensor> items;
    items.reserve(ds.size() + 1);
    items.push_back({"meta", Tensor({2}, {static_cast<double>(ds.size()),
                                          static_cast<double>(ds.class_count)})});
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample.%08zu", i);
        items.push_back({name, ds.samples[i]});
    }
    save_container(tensor_path, items);

    std::ostringstream csv;
    csv << "index,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) csv << i << "," << ds.labels[i] << "\n";
    write_file_text(label_csv_path, csv.str());
}

Dataset load_dataset(const std::string& tensor_path, const std::string& label_csv_path) {
    std::vector<NamedTensor> items = load_container(tensor_path);
    if (items.empty() || items[0].name != "meta")
        throw std::invalid_argument("load_dataset: missing meta record in " + tensor_path);
    Dataset ds;
    std::size_t n = static_cast<std::size_t>(items[0].value.data.at(0));
    ds.class_count = static_cast<int>(items[0].value.data.at(1));
    if (items.size() != n + 1)
        throw std::invalid_argument("load_dataset: expected " + std::to_string(n) +
                                    " samples, found " + std::to_string(items.size() - 1));
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(std::move(items[i + 1].value));

    std::istringstream csv(read_file_text(label_csv_path));
    std::string line;
    if (!std::getline(csv, line) || line != "index,label")
        throw std::invalid_argument("load_dataset: bad label CSV header in " + label_csv_path);
    ds.labels.reserve(n);
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("load_dataset: malformed label row: " + line);
        ds.labels.push_back(std::stoi(line.substr(comma + 1)));
    }
    ds.validate();
    return ds;
}

}  // namespace declust
