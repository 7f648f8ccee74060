#include "declust/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "declust/rng.hpp"

namespace declust {

void ProbeConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("ProbeConfig: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("ProbeConfig: batch_size must be >= 1");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0))
        throw std::invalid_argument("ProbeConfig: label_fraction must be in (0, 1]");
}

std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, double fraction,
                                           std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_subset: fraction must be in (0, 1]");
    std::size_t n = labels.size();
    int classes = 0;
    for (int l : labels) classes = std::max(classes, l + 1);

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < n; ++i)
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    std::size_t total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    // largest-remainder apportionment keeps per-class shares within one sample
    std::vector<std::size_t> quota(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainder;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        double exact = fraction * static_cast<double>(by_class[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainder.push_back({exact - std::floor(exact), c});
    }
    std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total && i < remainder.size(); ++i) {
        std::size_t c = remainder[i].second;
        if (quota[c] < by_class[c].size()) {
            quota[c] += 1;
            assigned += 1;
        }
    }

    std::vector<std::size_t> picked;
    picked.reserve(total);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        Rng rng(derive_seed(seed, c));
        rng.shuffle(by_class[c]);
        for (std::size_t i = 0; i < quota[c]; ++i) picked.push_back(by_class[c][i]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

namespace {

void softmax_inplace(std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

}  // namespace

Metrics linear_probe(const Tensor& train_embeddings, const std::vector<int>& train_labels,
                     const Tensor& test_embeddings, const std::vector<int>& test_labels,
                     int class_count, const ProbeConfig& cfg) {
    cfg.validate();
    if (train_embeddings.rank() != 2 || test_embeddings.rank() != 2)
        throw std::invalid_argument("linear_probe: embeddings must be N x d");
    if (train_embeddings.shape[0] != train_labels.size() ||
        test_embeddings.shape[0] != test_labels.size())
        throw std::invalid_argument("linear_probe: embedding/label count mismatch");
    std::size_t d = train_embeddings.shape[1];
    std::size_t c = static_cast<std::size_t>(class_count);

    std::vector<std::size_t> subset;
    if (cfg.label_fraction < 1.0) {
        subset = stratified_subset(train_labels, cfg.label_fraction, derive_seed(cfg.seed, 7));
    } else {
        subset.resize(train_labels.size());
        std::iota(subset.begin(), subset.end(), 0);
    }
    {
        std::vector<bool> seen(c, false);
        for (std::size_t i : subset) seen[static_cast<std::size_t>(train_labels[i])] = true;
        std::size_t distinct = 0;
        for (bool b : seen) distinct += b ? 1 : 0;
        if (distinct < 2)
            throw std::invalid_argument("linear_probe: training subset has a single class");
    }

    // softmax regression with explicit gradients; Adam with training defaults
    Tensor w({d, c}), b({c});
    Adam adam(cfg.adam, {w, b});
    std::size_t batch = std::min<std::size_t>(cfg.batch_size, subset.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 1, epoch));
        rng.shuffle(subset);
        for (std::size_t start = 0; start < subset.size(); start += batch) {
            std::size_t len = std::min(batch, subset.size() - start);
            Tensor gw({d, c}), gb({c});
            for (std::size_t bi = 0; bi < len; ++bi) {
                std::size_t row = subset[start + bi];
                std::vector<double> logits(c);
                for (std::size_t j = 0; j < c; ++j) {
                    double acc = b.data[j];
                    for (std::size_t f = 0; f < d; ++f)
                        acc += train_embeddings.at(row, f) * w.at(f, j);
                    logits[j] = acc;
                }
                softmax_inplace(logits);
                logits[static_cast<std::size_t>(train_labels[row])] -= 1.0;
                for (std::size_t j = 0; j < c; ++j) {
                    gb.data[j] += logits[j] / static_cast<double>(len);
                    for (std::size_t f = 0; f < d; ++f)
                        gw.at(f, j) += train_embeddings.at(row, f) * logits[j] /
                                       static_cast<double>(len);
                }
            }
            adam.step({&w, &b}, {&gw, &gb}, {"probe.w", "probe.b"}, {true, true});
        }
    }

    std::vector<int> predicted(test_labels.size());
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            double acc = b.data[j];
            for (std::size_t f = 0; f < d; ++f) acc += test_embeddings.at(i, f) * w.at(f, j);
            if (acc > best_score) {
                best_score = acc;
                best = j;
            }
        }
        predicted[i] = static_cast<int>(best);
    }
    return compute_metrics(predicted, test_labels, class_count);
}

std::vector<int> knn_predict(const Tensor& train_embeddings,
                             const std::vector<int>& train_labels,
                             const Tensor& query_embeddings, std::size_t k) {
    if (train_embeddings.rank() != 2 || query_embeddings.rank() != 2 ||
        train_embeddings.shape[1] != query_embeddings.shape[1])
        throw std::invalid_argument("knn_predict: embeddings must be N x d with matching d");
    std::size_t n = train_embeddings.shape[0];
    if (n == 0 || train_labels.size() != n)
        throw std::invalid_argument("knn_predict: empty or mismatched training set");
    std::size_t kk = std::min(k, n);
    std::size_t d = train_embeddings.shape[1];
    int classes = 0;
    for (int l : train_labels) classes = std::max(classes, l + 1);

    std::vector<int> predictions(query_embeddings.shape[0]);
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t q = 0; q < query_embeddings.shape[0]; ++q) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                double diff = query_embeddings.at(q, f) - train_embeddings.at(i, f);
                acc += diff * diff;
            }
            dist[i] = {std::sqrt(acc), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                          dist.end());
        std::vector<std::size_t> votes(static_cast<std::size_t>(classes), 0);
        std::vector<double> summed(static_cast<std::size_t>(classes), 0.0);
        for (std::size_t i = 0; i < kk; ++i) {
            std::size_t cls = static_cast<std::size_t>(train_labels[dist[i].second]);
            votes[cls] += 1;
            summed[cls] += dist[i].first;
        }
        std::size_t best = 0;
        bool have = false;
        for (std::size_t cls = 0; cls < votes.size(); ++cls) {
            if (votes[cls] == 0) continue;
            if (!have || votes[cls] > votes[best] ||
                (votes[cls] == votes[best] && summed[cls] < summed[best])) {
                best = cls;
                have = true;
            }
        }
        predictions[q] = static_cast<int>(best);
    }
    return predictions;
}

Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth,
                        int class_count) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("compute_metrics: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("compute_metrics: empty input");
    std::size_t c = static_cast<std::size_t>(class_count);

    std::size_t hits = 0;
    std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0), support(c, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        std::size_t t = static_cast<std::size_t>(truth[i]);
        std::size_t p = static_cast<std::size_t>(predicted[i]);
        support[t] += 1;
        if (t == p) {
            hits += 1;
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn[t] += 1;
        }
    }

    Metrics m;
    m.top1 = static_cast<double>(hits) / static_cast<double>(truth.size());
    m.per_class_f1.resize(c, 0.0);
    for (std::size_t cls = 0; cls < c; ++cls) {
        double denom = static_cast<double>(2 * tp[cls] + fp[cls] + fn[cls]);
        m.per_class_f1[cls] = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[cls]) / denom;
    }
    if (class_count == 2) {
        // minority class is the positive one; ties resolve to class 1
        std::size_t minority = support[1] <= support[0] ? 1 : 0;
        m.f1 = m.per_class_f1[minority];
    } else {
        double acc = 0.0;
        for (double v : m.per_class_f1) acc += v;
        m.f1 = acc / static_cast<double>(c);
    }
    return m;
}

double adjusted_rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    if (labels_a.size() != labels_b.size())
        throw std::invalid_argument("adjusted_rand_index: length mismatch");
    std::size_t n = labels_a.size();
    if (n == 0) throw std::invalid_argument("adjusted_rand_index: empty input");
    int ca = 0, cb = 0;
    for (int l : labels_a) ca = std::max(ca, l + 1);
    for (int l : labels_b) cb = std::max(cb, l + 1);

    std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(ca),
                                                std::vector<std::size_t>(static_cast<std::size_t>(cb), 0));
    for (std::size_t i = 0; i < n; ++i)
        table[static_cast<std::size_t>(labels_a[i])][static_cast<std::size_t>(labels_b[i])] += 1;

    auto choose2 = [](std::size_t x) {
        return static_cast<double>(x) * static_cast<double>(x > 0 ? x - 1 : 0) / 2.0;
    };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    std::vector<std::size_t> row_sums(static_cast<std::size_t>(ca), 0);
    std::vector<std::size_t> col_sums(static_cast<std::size_t>(cb), 0);
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            sum_ij += choose2(table[i][j]);
            row_sums[i] += table[i][j];
            col_sums[j] += table[i][j];
        }
    for (std::size_t x : row_sums) sum_a += choose2(x);
    for (std::size_t x : col_sums) sum_b += choose2(x);
    double total_pairs = choose2(n);
    double expected = sum_a * sum_b / total_pairs;
    double max_index = 0.5 * (sum_a + sum_b);
    double denom = max_index - expected;
    if (denom == 0.0) return sum_ij - expected == 0.0 ? 1.0 : 0.0;
    return (sum_ij - expected) / denom;
}

}  // namespace declust
