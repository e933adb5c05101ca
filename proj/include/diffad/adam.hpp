#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "diffad/tensor.hpp"

namespace diffad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter list. Moment shapes mirror the
// parameter shapes; the step counter is shared.
class AdamState {
public:
    AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.shape());
            v_.emplace_back(p.shape());
        }
    }

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_; }

    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw ShapeError("adam: parameter/gradient count mismatch");
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].same_shape(grads[i]) || !params[i].same_shape(m_[i])) {
                throw ShapeError("adam: shape mismatch at parameter " + std::to_string(i));
            }
            for (std::size_t j = 0; j < params[i].size(); ++j) {
                const double g = grads[i][j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                params[i][j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long step_ = 0;
};

} // namespace diffad
