#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "diffad/error.hpp"

namespace diffad {

// Forward-process variance schedule and everything derived from it. Arrays
// are stored for t = 1..T; accessors take 1-based timesteps and alpha_bar(0)
// is defined as 1.
struct NoiseSchedule {
    std::size_t T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;         // 1 - beta_t
    std::vector<double> alpha_bars;     // prod_{s<=t} alpha_s
    std::vector<double> posterior_vars; // beta_tilde_t

    double beta(std::size_t t) const { return at(betas, t, "beta"); }
    double alpha(std::size_t t) const { return at(alphas, t, "alpha"); }
    double alpha_bar(std::size_t t) const {
        if (t == 0) return 1.0;
        return at(alpha_bars, t, "alpha_bar");
    }
    double posterior_var(std::size_t t) const { return at(posterior_vars, t, "posterior_var"); }

private:
    double at(const std::vector<double>& v, std::size_t t, const char* what) const {
        if (t < 1 || t > T) {
            throw ContractError(std::string(what) + ": timestep " + std::to_string(t) +
                                " outside [1, " + std::to_string(T) + "]");
        }
        return v[t - 1];
    }
};

// Builds the derived arrays from an explicit beta sequence. Also the
// reconstruction path when loading a serialized model.
inline NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("schedule needs at least one beta");
    NoiseSchedule s;
    s.T = betas.size();
    s.betas = std::move(betas);
    s.alphas.resize(s.T);
    s.alpha_bars.resize(s.T);
    s.posterior_vars.resize(s.T);
    double prod = 1.0;
    for (std::size_t i = 0; i < s.T; ++i) {
        const double b = s.betas[i];
        if (!(b > 0.0 && b < 1.0)) {
            throw ConfigError("beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                              " outside (0, 1)");
        }
        const double ab_prev = prod;
        s.alphas[i] = 1.0 - b;
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
        s.posterior_vars[i] = (1.0 - ab_prev) / (1.0 - prod) * b;
    }
    return s;
}

// beta_t linearly interpolated from beta_start to beta_end inclusive; T=1
// degenerates to a single step at beta_start.
inline NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(T);
    for (std::size_t i = 0; i < T; ++i) {
        betas[i] = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                             static_cast<double>(T - 1);
    }
    return schedule_from_betas(std::move(betas));
}

// The usual [1e-4, 0.02] endpoints are tuned for T=1000; shorter schedules
// scale beta_end up (capped at 0.5) so the data still ends fully noised.
inline NoiseSchedule default_linear_schedule(std::size_t T) {
    if (T < 1) throw ConfigError("default_linear_schedule: T must be >= 1");
    const double beta_end = std::min(0.5, 0.02 * 1000.0 / static_cast<double>(T));
    return linear_schedule(T, 1e-4, beta_end);
}

} // namespace diffad
