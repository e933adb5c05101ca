#pragma once
// AUC-ROC scoring and benchmark aggregation. AUC uses the Mann-Whitney rank
// formulation with midranks, so tied scores count half a concordant pair.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "diffad/error.hpp"

namespace diffad {

struct LabeledScores {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels; // 0 = normal, 1 = anomaly
};

namespace detail {

inline void check_labeled(const LabeledScores& ls) {
    if (ls.scores.size() != ls.labels.size())
        throw MetricError("scores and labels differ in length");
    std::size_t pos = 0;
    for (std::uint8_t l : ls.labels) pos += l != 0;
    if (pos == 0 || pos == ls.labels.size())
        throw MetricError("AUC needs both classes present");
}

} // namespace detail

inline double auc_roc(const LabeledScores& ls) {
    detail::check_labeled(ls);
    const std::size_t n = ls.scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ls.scores[a] < ls.scores[b]; });

    // midranks: tied scores share the average of their 1-based positions
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && ls.scores[order[j + 1]] == ls.scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum = 0.0;
    std::size_t n1 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (ls.labels[k] != 0) {
            rank_sum += rank[k];
            ++n1;
        }
    }
    const std::size_t n0 = n - n1;
    const double u = rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

// stepwise ROC curve over unique thresholds, descending; starts at (0,0) and
// ends at (1,1); its trapezoidal area equals auc_roc (ties become diagonals)
inline std::vector<RocPoint> roc_points(const LabeledScores& ls) {
    detail::check_labeled(ls);
    const std::size_t n = ls.scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ls.scores[a] > ls.scores[b]; });

    std::size_t n1 = 0;
    for (std::uint8_t l : ls.labels) n1 += l != 0;
    const std::size_t n0 = n - n1;

    std::vector<RocPoint> points{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && ls.scores[order[j + 1]] == ls.scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k)
            (ls.labels[order[k]] != 0 ? tp : fp) += 1;
        points.push_back({static_cast<double>(fp) / static_cast<double>(n0),
                          static_cast<double>(tp) / static_cast<double>(n1)});
        i = j + 1;
    }
    return points;
}

struct BenchmarkResult {
    std::string method;
    std::string dataset;
    std::uint64_t seed = 0;
    double auc = 0.0;
    double seconds = 0.0;
};

struct AggregateRow {
    std::string dataset;
    std::string method;
    double mean_auc = 0.0;
    double std_auc = 0.0; // population convention (divide by the seed count)
    std::size_t runs = 0;
};

inline std::vector<AggregateRow> aggregate(const std::vector<BenchmarkResult>& results) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const BenchmarkResult& r : results)
        groups[{r.dataset, r.method}].push_back(r.auc);

    std::vector<AggregateRow> rows;
    rows.reserve(groups.size());
    for (const auto& [key, aucs] : groups) {
        AggregateRow row;
        row.dataset = key.first;
        row.method = key.second;
        row.runs = aucs.size();
        for (double a : aucs) row.mean_auc += a;
        row.mean_auc /= static_cast<double>(aucs.size());
        for (double a : aucs) {
            const double dv = a - row.mean_auc;
            row.std_auc += dv * dv;
        }
        row.std_auc = std::sqrt(row.std_auc / static_cast<double>(aucs.size()));
        rows.push_back(std::move(row));
    }
    return rows; // std::map iteration is already (dataset, method) ordered
}

} // namespace diffad
