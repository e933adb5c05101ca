#pragma once
// COPOD: treat each dimension's empirical CDF as a marginal, score a point by
// the joint tail probability under an independence copula. Nonparametric, no
// seeds, no hyperparameters.

#include <algorithm>
#include <cmath>
#include <vector>

#include "diffad/error.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

class Copod {
public:
    void fit(const Tensor& data) {
        if (data.ndim() != 2) throw ShapeError("copod: expected a 2-D data matrix");
        n_ = data.rows();
        if (n_ < 2) throw FitError("copod: need at least 2 training points");
        const std::size_t d = data.cols();
        sorted_.assign(d, {});
        skew_.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            std::vector<double>& col = sorted_[j];
            col.resize(n_);
            double mean = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                col[i] = data(i, j);
                mean += col[i];
            }
            mean /= static_cast<double>(n_);
            std::sort(col.begin(), col.end());
            double m2 = 0.0, m3 = 0.0;
            for (double v : col) {
                const double c = v - mean;
                m2 += c * c;
                m3 += c * c * c;
            }
            m2 /= static_cast<double>(n_);
            m3 /= static_cast<double>(n_);
            // population skewness; constant columns get 0 (routes to the right tail)
            skew_[j] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
        }
    }

    bool fitted() const { return !sorted_.empty(); }
    std::size_t data_dim() const { return sorted_.size(); }
    std::size_t train_size() const { return n_; }
    const std::vector<std::vector<double>>& sorted_columns() const { return sorted_; }
    const std::vector<double>& skewness() const { return skew_; }

    // the three tail aggregates behind the final max; useful because the left
    // and right sums are pure rank statistics (invariant under monotone maps)
    struct Parts {
        double left = 0.0;
        double right = 0.0;
        double skewed = 0.0;
    };

    Parts score_parts(const double* row) const {
        if (!fitted()) throw ContractError("copod: score before fit");
        const double n = static_cast<double>(n_);
        const double floor_p = 1.0 / n;
        Parts parts;
        for (std::size_t j = 0; j < sorted_.size(); ++j) {
            const std::vector<double>& col = sorted_[j];
            const double x = row[j];
            const auto le =
                std::upper_bound(col.begin(), col.end(), x) - col.begin(); // #{<= x}
            const auto ge =
                col.end() - std::lower_bound(col.begin(), col.end(), x); // #{>= x}
            const double p_l = std::max(static_cast<double>(le) / n, floor_p);
            const double p_r = std::max(static_cast<double>(ge) / n, floor_p);
            parts.left += -std::log(p_l);
            parts.right += -std::log(p_r);
            parts.skewed += -std::log(skew_[j] < 0.0 ? p_l : p_r);
        }
        return parts;
    }

    double score_one(const double* row) const {
        const Parts p = score_parts(row);
        return std::max({p.left, p.right, p.skewed});
    }

    std::vector<double> score(const Tensor& x) const {
        if (x.ndim() > 2 || x.cols() != data_dim())
            throw ShapeError("copod: feature dimension mismatch");
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = score_one(&x(i, 0));
        return out;
    }

    // rebuild a fitted model from serialized parts; trusts the caller
    static Copod restore(std::size_t n, std::vector<std::vector<double>> sorted,
                         std::vector<double> skew) {
        Copod c;
        c.n_ = n;
        c.sorted_ = std::move(sorted);
        c.skew_ = std::move(skew);
        return c;
    }

private:
    std::size_t n_ = 0;
    std::vector<std::vector<double>> sorted_;
    std::vector<double> skew_;
};

} // namespace diffad
