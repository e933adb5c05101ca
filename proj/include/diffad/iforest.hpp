#pragma once
// isolation forest: anomalies sit in sparse regions, so random axis-aligned
// splits isolate them in fewer steps than inliers. score = 2^(-E[path]/c(psi)).

#include <cmath>
#include <cstdint>
#include <vector>

#include "diffad/error.hpp"
#include "diffad/rng.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

// expected unsuccessful-search path length in a binary search tree of n keys;
// used both to normalize scores and to extend paths at truncated leaves
inline double avg_path_length(std::size_t n) {
    if (n <= 1) return 0.0;
    const double m = static_cast<double>(n);
    const double harmonic = std::log(m - 1.0) + 0.5772156649; // Euler-Mascheroni
    return 2.0 * harmonic - 2.0 * (m - 1.0) / m;
}

struct IsolationNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0; // indices into the owning tree's node vector
    std::uint32_t right = 0;
    std::uint64_t size = 0; // number of subsample points that reached a leaf
};

using IsolationTree = std::vector<IsolationNode>;

struct IforestConfig {
    std::size_t trees = 100;
    std::size_t subsample = 256; // capped at n during fit
};

class IsolationForest {
public:
    explicit IsolationForest(IforestConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.trees == 0) throw ConfigError("iforest: need at least one tree");
        if (cfg_.subsample < 2) throw ConfigError("iforest: subsample must be >= 2");
    }

    void fit(const Tensor& data, std::uint64_t seed) {
        if (data.ndim() != 2) throw ShapeError("iforest: expected a 2-D data matrix");
        const std::size_t n = data.rows();
        dim_ = data.cols();
        if (n < 2) throw FitError("iforest: need at least 2 training points");
        psi_ = std::min(cfg_.subsample, n);
        height_limit_ =
            static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(psi_))));

        trees_.assign(cfg_.trees, {});
        std::vector<std::size_t> order(n);
        for (std::size_t t = 0; t < cfg_.trees; ++t) {
            RngStream rng = RngStream::substream(seed, t);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            // partial Fisher-Yates: the first psi entries become the subsample
            for (std::size_t i = 0; i < psi_ && i + 1 < n; ++i)
                std::swap(order[i], order[i + rng.uniform_int(n - i)]);
            std::vector<std::size_t> rows(order.begin(),
                                          order.begin() + static_cast<std::ptrdiff_t>(psi_));
            trees_[t].reserve(2 * psi_);
            build(trees_[t], data, rows, 0, rng);
        }
    }

    bool fitted() const { return !trees_.empty(); }
    std::size_t data_dim() const { return dim_; }
    std::size_t psi() const { return psi_; }
    const IforestConfig& config() const { return cfg_; }
    const std::vector<IsolationTree>& trees() const { return trees_; }

    double score_one(const double* row) const {
        if (!fitted()) throw ContractError("iforest: score before fit");
        double total = 0.0;
        for (const IsolationTree& tree : trees_) {
            std::size_t node = 0, depth = 0;
            while (tree[node].feature >= 0) {
                node = row[tree[node].feature] < tree[node].threshold ? tree[node].left
                                                                      : tree[node].right;
                ++depth;
            }
            total += static_cast<double>(depth) + avg_path_length(tree[node].size);
        }
        const double mean_path = total / static_cast<double>(trees_.size());
        return std::exp2(-mean_path / avg_path_length(psi_));
    }

    std::vector<double> score(const Tensor& x) const {
        if (x.ndim() > 2 || x.cols() != dim_)
            throw ShapeError("iforest: feature dimension mismatch");
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = score_one(&x(i, 0));
        return out;
    }

    // rebuild a fitted forest from serialized parts; trusts the caller
    static IsolationForest restore(IforestConfig cfg, std::size_t psi, std::size_t dim,
                                   std::vector<IsolationTree> trees) {
        IsolationForest f(cfg);
        f.psi_ = psi;
        f.dim_ = dim;
        f.height_limit_ =
            static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(psi))));
        f.trees_ = std::move(trees);
        return f;
    }

private:
    // grows the subtree over `rows`, returns its node index
    std::uint32_t build(IsolationTree& tree, const Tensor& data,
                        const std::vector<std::size_t>& rows, std::size_t depth,
                        RngStream& rng) {
        const std::uint32_t id = static_cast<std::uint32_t>(tree.size());
        tree.emplace_back();
        if (depth >= height_limit_ || rows.size() <= 1) {
            tree[id].size = rows.size();
            return id;
        }

        // only features that actually vary across the node's points are usable
        std::vector<int> candidates;
        for (std::size_t j = 0; j < dim_; ++j) {
            double lo = data(rows[0], j), hi = lo;
            for (std::size_t i : rows) {
                lo = std::min(lo, data(i, j));
                hi = std::max(hi, data(i, j));
            }
            if (hi > lo) candidates.push_back(static_cast<int>(j));
        }
        if (candidates.empty()) { // all points identical: nothing to split
            tree[id].size = rows.size();
            return id;
        }

        const int feature = candidates[rng.uniform_int(candidates.size())];
        double lo = data(rows[0], feature), hi = lo;
        for (std::size_t i : rows) {
            lo = std::min(lo, data(i, feature));
            hi = std::max(hi, data(i, feature));
        }
        double u;
        do {
            u = rng.uniform();
        } while (u == 0.0);
        const double threshold = lo + u * (hi - lo);

        std::vector<std::size_t> left, right;
        for (std::size_t i : rows)
            (data(i, feature) < threshold ? left : right).push_back(i);
        if (left.empty() || right.empty()) { // threshold rounded onto an extreme
            tree[id].size = rows.size();
            return id;
        }

        tree[id].feature = feature;
        tree[id].threshold = threshold;
        const std::uint32_t l = build(tree, data, left, depth + 1, rng);
        const std::uint32_t r = build(tree, data, right, depth + 1, rng);
        tree[id].left = l;
        tree[id].right = r;
        return id;
    }

    IforestConfig cfg_;
    std::size_t psi_ = 0;
    std::size_t dim_ = 0;
    std::size_t height_limit_ = 0;
    std::vector<IsolationTree> trees_;
};

} // namespace diffad
