#pragma once
// one-class SVM on random Fourier features. phi(x) = sqrt(2/D) cos(Omega x + b)
// approximates the RBF kernel exp(-gamma ||x-y||^2); the one-class primal
//   (1/2)||w||^2 - rho + (1/(nu n)) sum_i max(0, rho - w.phi(x_i))
// is minimized by subgradient steps in w with rho set to the exact minimizer
// (the nu-quantile of the projections) each epoch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "diffad/error.hpp"
#include "diffad/rng.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

struct OcsvmConfig {
    double nu = 0.1;     // asymptotic fraction of margin violators
    double gamma = 0.0;  // RBF width; <= 0 means "use 1/d at fit time"
    std::size_t features = 256;
    std::size_t epochs = 500;
};

class Ocsvm {
public:
    explicit Ocsvm(OcsvmConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg_.nu > 0.0) || cfg_.nu > 1.0) throw ConfigError("ocsvm: nu must be in (0, 1]");
        if (cfg_.features == 0) throw ConfigError("ocsvm: need at least one feature");
        if (cfg_.epochs == 0) throw ConfigError("ocsvm: need at least one epoch");
    }

    void fit(const Tensor& data, std::uint64_t seed) {
        if (data.ndim() != 2) throw ShapeError("ocsvm: expected a 2-D data matrix");
        const std::size_t n = data.rows(), d = data.cols();
        if (n == 0 || d == 0) throw FitError("ocsvm: empty training data");
        gamma_ = cfg_.gamma > 0.0 ? cfg_.gamma : 1.0 / static_cast<double>(d);

        const std::size_t D = cfg_.features;
        RngStream freq_rng = RngStream::substream(seed, 0);
        RngStream phase_rng = RngStream::substream(seed, 1);
        omega_ = Tensor({D, d});
        const double sigma = std::sqrt(2.0 * gamma_);
        for (auto& v : omega_.data()) v = sigma * freq_rng.gaussian();
        phase_.resize(D);
        for (auto& v : phase_) v = 2.0 * std::numbers::pi * phase_rng.uniform();

        const Tensor feats = features(data);
        const double nn = static_cast<double>(n);

        // start from the empirical feature mean so the first projections are a
        // kernel density estimate rather than identically zero
        w_.assign(D, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < D; ++k) w_[k] += feats(i, k);
        for (auto& v : w_) v /= nn;

        const double inv_nu_n = 1.0 / (cfg_.nu * nn);
        const std::size_t q = std::min(
            static_cast<std::size_t>(cfg_.nu * nn), n - 1); // order statistic for rho
        std::vector<double> proj(n), sorted(n);
        std::vector<double> pull(D);
        for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            project(feats, proj);
            sorted = proj;
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q),
                             sorted.end());
            rho_ = sorted[q];

            std::fill(pull.begin(), pull.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (proj[i] >= rho_) continue; // not a margin violator
                for (std::size_t k = 0; k < D; ++k) pull[k] += feats(i, k);
            }
            const double lr = 1.0 / static_cast<double>(epoch);
            double norm_sq = 0.0;
            for (std::size_t k = 0; k < D; ++k) {
                w_[k] = (1.0 - lr) * w_[k] + lr * inv_nu_n * pull[k];
                norm_sq += w_[k] * w_[k];
            }
            // any dual-feasible solution has ||w|| <= sqrt(2); project back so a
            // large early step cannot blow up the iterate
            if (norm_sq > 2.0) {
                const double shrink = std::sqrt(2.0 / norm_sq);
                for (auto& v : w_) v *= shrink;
            }
        }
        project(feats, proj);
        sorted = proj;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q),
                         sorted.end());
        rho_ = sorted[q];
    }

    bool fitted() const { return !w_.empty(); }
    std::size_t data_dim() const { return omega_.size() ? omega_.cols() : 0; }
    const OcsvmConfig& config() const { return cfg_; }
    double gamma() const { return gamma_; }
    double rho() const { return rho_; }
    const Tensor& omega() const { return omega_; }
    const std::vector<double>& phase() const { return phase_; }
    const std::vector<double>& weights() const { return w_; }

    double score_one(const double* row) const {
        if (!fitted()) throw ContractError("ocsvm: score before fit");
        const std::size_t D = w_.size(), d = omega_.cols();
        const double scale = std::sqrt(2.0 / static_cast<double>(D));
        double dot = 0.0;
        for (std::size_t k = 0; k < D; ++k) {
            double arg = phase_[k];
            for (std::size_t j = 0; j < d; ++j) arg += omega_(k, j) * row[j];
            dot += w_[k] * scale * std::cos(arg);
        }
        return rho_ - dot; // higher = more anomalous
    }

    std::vector<double> score(const Tensor& x) const {
        if (x.ndim() > 2 || x.cols() != data_dim())
            throw ShapeError("ocsvm: feature dimension mismatch");
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = score_one(&x(i, 0));
        return out;
    }

    // rebuild a fitted model from serialized parts; trusts the caller
    static Ocsvm restore(OcsvmConfig cfg, double gamma, double rho, Tensor omega,
                         std::vector<double> phase, std::vector<double> weights) {
        Ocsvm m(cfg);
        m.gamma_ = gamma;
        m.rho_ = rho;
        m.omega_ = std::move(omega);
        m.phase_ = std::move(phase);
        m.w_ = std::move(weights);
        return m;
    }

private:
    Tensor features(const Tensor& x) const {
        Tensor out = matmul(x, transpose(omega_));
        const double scale = std::sqrt(2.0 / static_cast<double>(cfg_.features));
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t k = 0; k < cfg_.features; ++k)
                out(i, k) = scale * std::cos(out(i, k) + phase_[k]);
        return out;
    }

    void project(const Tensor& feats, std::vector<double>& out) const {
        const std::size_t n = feats.rows(), D = feats.cols();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < D; ++k) s += feats(i, k) * w_[k];
            out[i] = s;
        }
    }

    OcsvmConfig cfg_;
    double gamma_ = 0.0;
    double rho_ = 0.0;
    Tensor omega_;
    std::vector<double> phase_;
    std::vector<double> w_;
};

} // namespace diffad
