#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffad/adam.hpp"
#include "diffad/denoiser.hpp"
#include "diffad/error.hpp"
#include "diffad/rng.hpp"
#include "diffad/schedule.hpp"
#include "diffad/tape.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

// ============================================================================
// Per-feature z-score standardization
// ============================================================================

// Diffusion assumes roughly unit-scale data, so detectors standardize with
// statistics fitted on the training set only and undo the map on outputs.
struct Standardizer {
    Tensor mean; // [d]
    Tensor stdev; // [d]

    static Standardizer identity(std::size_t d) {
        return Standardizer{Tensor::zeros({d}), Tensor::full({d}, 1.0)};
    }

    static Standardizer fit(const Tensor& X) {
        const std::size_t n = X.rows(), d = X.cols();
        Standardizer s{Tensor::zeros({d}), Tensor::zeros({d})};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += X(i, j);
        for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = X(i, j) - s.mean[j];
                s.stdev[j] += dv * dv;
            }
        for (std::size_t j = 0; j < d; ++j) {
            // floor keeps constant features from dividing by zero
            s.stdev[j] = std::max(std::sqrt(s.stdev[j] / static_cast<double>(n)), 1e-8);
        }
        return s;
    }

    std::size_t dim() const { return mean.size(); }

    Tensor apply(const Tensor& X) const {
        check(X);
        Tensor out = X;
        const std::size_t d = dim();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (out[i] - mean[i % d]) / stdev[i % d];
        }
        return out;
    }

    Tensor invert(const Tensor& X) const {
        check(X);
        Tensor out = X;
        const std::size_t d = dim();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stdev[i % d] + mean[i % d];
        return out;
    }

private:
    void check(const Tensor& X) const {
        if (X.cols() != dim()) {
            throw ShapeError("standardizer fitted for " + std::to_string(dim()) +
                             " features, got " + X.shape_str());
        }
    }
};

// ============================================================================
// Forward process
// ============================================================================

namespace detail {

inline void check_timestep(std::size_t t, const NoiseSchedule& s, const char* op) {
    if (t < 1 || t > s.T) {
        throw ContractError(std::string(op) + ": timestep " + std::to_string(t) +
                            " outside [1, " + std::to_string(s.T) + "]");
    }
}

} // namespace detail

// Closed-form noising with one timestep per row.
inline Tensor q_sample_rows(const Tensor& x0, std::span<const int> ts, const Tensor& eps,
                            const NoiseSchedule& s) {
    if (!x0.same_shape(eps)) {
        throw ShapeError("q_sample: x0 " + x0.shape_str() + " vs eps " + eps.shape_str());
    }
    const std::size_t n = x0.rows(), d = x0.cols();
    if (ts.size() != n) throw ShapeError("q_sample: one timestep per row required");
    Tensor out = x0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ts[i] < 1) throw ContractError("q_sample: timestep must be >= 1");
        const double ab = s.alpha_bar(static_cast<std::size_t>(ts[i]));
        const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = ca * x0[i * d + j] + cb * eps[i * d + j];
    }
    return out;
}

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
inline Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps,
                       const NoiseSchedule& s) {
    detail::check_timestep(t, s, "q_sample");
    const std::vector<int> ts(x0.rows(), static_cast<int>(t));
    return q_sample_rows(x0, ts, eps, s);
}

// Mean and (shared scalar) variance of the forward-process posterior
// q(x_{t-1} | x_t, x0).
struct PosteriorParams {
    Tensor mean;
    double var;
};

inline PosteriorParams posterior_params(const Tensor& x0, const Tensor& x_t, std::size_t t,
                                        const NoiseSchedule& s) {
    detail::check_timestep(t, s, "posterior_params");
    if (!x0.same_shape(x_t)) {
        throw ShapeError("posterior_params: x0 " + x0.shape_str() + " vs x_t " + x_t.shape_str());
    }
    const double ab_prev = s.alpha_bar(t - 1);
    const double ab = s.alpha_bar(t);
    const double c0 = std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab);
    const double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    Tensor mean = x0;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = c0 * x0[i] + ct * x_t[i];
    return {std::move(mean), s.posterior_var(t)};
}

// ============================================================================
// Reverse process
// ============================================================================

// mu_theta(x_t, t) = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
inline Tensor reverse_mean(const Denoiser& model, const Tensor& x_t, std::size_t t,
                           const NoiseSchedule& s) {
    detail::check_timestep(t, s, "reverse_mean");
    const std::vector<int> ts(x_t.rows(), static_cast<int>(t));
    const Tensor eps_hat = model.predict_noise(x_t, ts);
    const double k = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    const double inv = 1.0 / std::sqrt(s.alpha(t));
    Tensor out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] - k * eps_hat[i]);
    return out;
}

// One ancestral step: mu_theta plus sqrt(beta_tilde_t) z, except t=1 which
// returns the mean exactly (no noise on the final step).
inline Tensor p_sample(const Denoiser& model, const Tensor& x_t, std::size_t t,
                       const NoiseSchedule& s, RngStream& rng) {
    Tensor out = reverse_mean(model, x_t, t, s);
    if (t == 1) return out;
    const double sd = std::sqrt(s.posterior_var(t));
    const Tensor z = rng.gaussian_tensor(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sd * z[i];
    return out;
}

// Full ancestral generation from x_T ~ N(0, I).
inline Tensor sample(const Denoiser& model, const NoiseSchedule& s, std::size_t n, std::size_t d,
                     RngStream& rng) {
    if (n == 0) throw ContractError("sample: n must be positive");
    if (d != model.data_dim()) {
        throw ShapeError("sample: model expects dimension " + std::to_string(model.data_dim()));
    }
    Tensor x = rng.gaussian_tensor({n, d});
    for (std::size_t t = s.T; t >= 1; --t) x = p_sample(model, x, t, s, rng);
    return x;
}

// Algebraic inversion of q_sample using the predicted noise.
inline Tensor one_shot_x0(const Denoiser& model, const Tensor& x_t, std::size_t t,
                          const NoiseSchedule& s) {
    detail::check_timestep(t, s, "one_shot_x0");
    const std::vector<int> ts(x_t.rows(), static_cast<int>(t));
    const Tensor eps_hat = model.predict_noise(x_t, ts);
    const double ab = s.alpha_bar(t);
    const double cb = std::sqrt(1.0 - ab), inv = 1.0 / std::sqrt(ab);
    Tensor out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] - cb * eps_hat[i]);
    return out;
}

// ============================================================================
// Training
// ============================================================================

// Noise-prediction MSE, averaged over every element of the batch.
inline NodeId lsimple_loss(Tape& tape, const Denoiser& model, std::span<const NodeId> params,
                           NodeId x_t, std::span<const int> ts, NodeId eps) {
    const NodeId out = model.predict_noise(tape, params, x_t, ts);
    const NodeId diff = tape.sub(out, eps);
    return tape.mean_all(tape.mul(diff, diff));
}

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

// Minibatch DDPM training: per row draw t ~ U{1..T} and eps ~ N(0,I), noise,
// predict, Adam-update on the noise MSE. Returns one mean loss per epoch.
inline std::vector<double> train_ddpm(Denoiser& model, const Tensor& data,
                                      const NoiseSchedule& sched, const TrainConfig& cfg) {
    if (data.ndim() != 2 || data.cols() != model.data_dim()) {
        throw ShapeError("train_ddpm: data must be [n x " + std::to_string(model.data_dim()) +
                         "], got " + data.shape_str());
    }
    const std::size_t n = data.rows(), d = data.cols();
    if (cfg.batch < 1 || cfg.batch > n) {
        throw ContractError("train_ddpm: need n >= batch >= 1");
    }
    if (cfg.epochs < 1) throw ContractError("train_ddpm: epochs must be >= 1");

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    AdamState adam(model.params(), acfg);
    RngStream shuffle_rng = RngStream::substream(cfg.seed, 0);
    RngStream t_rng = RngStream::substream(cfg.seed, 1);
    RngStream eps_rng = RngStream::substream(cfg.seed, 2);

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;

    std::vector<double> trace;
    trace.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(idx);
        double acc = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, n - start);
            Tensor x0({bs, d});
            for (std::size_t i = 0; i < bs; ++i)
                for (std::size_t j = 0; j < d; ++j) x0(i, j) = data(idx[start + i], j);
            std::vector<int> ts(bs);
            for (auto& t : ts) t = 1 + static_cast<int>(t_rng.uniform_int(sched.T));
            const Tensor eps = eps_rng.gaussian_tensor({bs, d});
            const Tensor x_t = q_sample_rows(x0, ts, eps, sched);

            Tape tape;
            std::vector<NodeId> pids;
            pids.reserve(model.params().size());
            for (const Tensor& p : model.params()) pids.push_back(tape.leaf(p));
            const NodeId loss =
                lsimple_loss(tape, model, pids, tape.leaf(x_t), ts, tape.leaf(eps));

            const double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) {
                throw NumericError("train_ddpm: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", step " +
                                   std::to_string(steps + 1));
            }
            const Gradients grads = tape.backward(loss);
            std::vector<Tensor> gvec;
            gvec.reserve(pids.size());
            for (std::size_t i = 0; i < pids.size(); ++i) {
                gvec.push_back(grads.has(pids[i]) ? grads.wrt(pids[i])
                                                  : Tensor(model.params()[i].shape()));
            }
            adam.step(model.params(), gvec);
            acc += lv;
            ++steps;
        }
        trace.push_back(acc / static_cast<double>(steps));
    }
    return trace;
}

// ============================================================================
// Variational-bound diagnostic
// ============================================================================

// KL(N(mu_a, var I) || N(mu_b, var I)) = |mu_a - mu_b|^2 / (2 var)
inline double diag_gaussian_kl_same_var(const Tensor& mu_a, const Tensor& mu_b, double var) {
    if (!mu_a.same_shape(mu_b)) throw ShapeError("kl: mean shapes differ");
    if (!(var > 0.0)) throw ContractError("kl: variance must be positive");
    return squared_norm(sub(mu_a, mu_b)) / (2.0 * var);
}

// Per-timestep variational-bound term for a single row: the posterior KL for
// t >= 2, and the Gaussian decoder's negative log-likelihood at t = 1 (where
// the posterior variance vanishes).
inline double vlb_term(const Tensor& x0, const Tensor& x_t, std::size_t t, const Denoiser& model,
                       const NoiseSchedule& s) {
    detail::check_timestep(t, s, "vlb_term");
    if (!x0.same_shape(x_t)) throw ShapeError("vlb_term: x0/x_t shapes differ");
    if (x0.rows() != 1) throw ShapeError("vlb_term: one row at a time");
    const std::size_t d = x0.size();
    const Tensor xt_row({1, d}, x_t.data());
    const Tensor mu_theta = reverse_mean(model, xt_row, t, s);
    if (t == 1) {
        const double b1 = s.beta(1);
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = x0[j] - mu_theta[j];
            sq += dv * dv;
        }
        return 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi * b1) + sq / b1);
    }
    const PosteriorParams pp = posterior_params(Tensor({1, d}, x0.data()), xt_row, t, s);
    return diag_gaussian_kl_same_var(pp.mean, mu_theta, pp.var);
}

// ============================================================================
// Reconstruction-error detector
// ============================================================================

enum class ScoreMode : std::uint8_t { OneShot = 0, MultiStep = 1 };

struct ScoringConfig {
    std::size_t t_star = 0; // 0 = max(1, T/4)
    std::size_t repeats = 4;
    ScoreMode mode = ScoreMode::MultiStep;
};

// Frozen diffusion model plus everything needed to score points: noise the
// input to t*, denoise it back, and call the (standardized-space) squared
// reconstruction error the anomaly score, averaged over `repeats` noisings.
class DiffusionDetector {
public:
    DiffusionDetector(std::shared_ptr<Denoiser> model, NoiseSchedule sched,
                      ScoringConfig scoring, Standardizer standardizer)
        : model_(std::move(model)),
          sched_(std::move(sched)),
          scoring_(scoring),
          standardizer_(std::move(standardizer)) {
        if (!model_) throw ContractError("detector: model required");
        if (scoring_.t_star == 0) scoring_.t_star = std::max<std::size_t>(1, sched_.T / 4);
        if (scoring_.t_star < 1 || scoring_.t_star > sched_.T) {
            throw ContractError("detector: t_star must lie in [1, T]");
        }
        if (scoring_.repeats < 1) throw ContractError("detector: repeats must be >= 1");
        if (standardizer_.dim() != model_->data_dim()) {
            throw ShapeError("detector: standardizer dimension mismatch");
        }
    }

    const Denoiser& model() const { return *model_; }
    std::shared_ptr<Denoiser> model_ptr() const { return model_; }
    const NoiseSchedule& schedule() const { return sched_; }
    const ScoringConfig& scoring() const { return scoring_; }
    const Standardizer& standardizer() const { return standardizer_; }

    // Noise to t*, denoise back, return in the data's original scale.
    Tensor reconstruct(const Tensor& x, RngStream& rng) const {
        const Tensor z = standardizer_.apply(x);
        const Tensor eps = rng.gaussian_tensor(z.shape());
        const Tensor x_t = q_sample(z, scoring_.t_star, eps, sched_);
        Tensor zhat = denoise(x_t, [&rng](std::vector<std::size_t> shape) {
            return rng.gaussian_tensor(std::move(shape));
        });
        return standardizer_.invert(zhat);
    }

    // Mean squared reconstruction error over `repeats` independent noisings,
    // computed in standardized space. Row i draws all of its noise from
    // substream(seed, i), so scores do not depend on how a caller batches or
    // threads the rows.
    std::vector<double> anomaly_score(const Tensor& x, std::uint64_t seed) const {
        const Tensor z = standardizer_.apply(x);
        const std::size_t n = z.rows(), d = z.cols();
        std::vector<RngStream> row_rng;
        row_rng.reserve(n);
        for (std::size_t i = 0; i < n; ++i) row_rng.push_back(RngStream::substream(seed, i));

        auto per_row_noise = [&row_rng](std::vector<std::size_t> shape) {
            Tensor t(std::move(shape));
            const std::size_t rows = t.rows(), cols = t.cols();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) t(i, j) = row_rng[i].gaussian();
            return t;
        };

        std::vector<double> scores(n, 0.0);
        for (std::size_t k = 0; k < scoring_.repeats; ++k) {
            const Tensor eps = per_row_noise({n, d});
            const Tensor x_t = q_sample(z, scoring_.t_star, eps, sched_);
            const Tensor zhat = denoise(x_t, per_row_noise);
            for (std::size_t i = 0; i < n; ++i) {
                double sq = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dv = z(i, j) - zhat(i, j);
                    sq += dv * dv;
                }
                scores[i] += sq;
            }
        }
        for (auto& sc : scores) sc /= static_cast<double>(scoring_.repeats);
        return scores;
    }

    // Ancestral samples mapped back to the data's original scale.
    Tensor sample(std::size_t n, RngStream& rng) const {
        return standardizer_.invert(diffad::sample(*model_, sched_, n, model_->data_dim(), rng));
    }

private:
    template <typename NoiseFn>
    Tensor denoise(Tensor x_t, NoiseFn&& noise) const {
        if (scoring_.mode == ScoreMode::OneShot) {
            return one_shot_x0(*model_, x_t, scoring_.t_star, sched_);
        }
        for (std::size_t t = scoring_.t_star; t >= 1; --t) {
            Tensor mean = reverse_mean(*model_, x_t, t, sched_);
            if (t == 1) return mean;
            const double sd = std::sqrt(sched_.posterior_var(t));
            const Tensor zn = noise(x_t.shape());
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += sd * zn[i];
            x_t = std::move(mean);
        }
        return x_t;
    }

    std::shared_ptr<Denoiser> model_;
    NoiseSchedule sched_;
    ScoringConfig scoring_;
    Standardizer standardizer_;
};

// Standardize the training data, train the denoiser on it, and wrap the
// result into a detector. Optionally hands back the per-epoch loss trace.
inline DiffusionDetector fit_diffusion_detector(std::shared_ptr<Denoiser> model,
                                                const Tensor& data, NoiseSchedule sched,
                                                const TrainConfig& train_cfg,
                                                const ScoringConfig& scoring = {},
                                                std::vector<double>* trace = nullptr) {
    if (!model) throw ContractError("fit_diffusion_detector: model required");
    const Standardizer st = Standardizer::fit(data);
    std::vector<double> local = train_ddpm(*model, st.apply(data), sched, train_cfg);
    if (trace) *trace = std::move(local);
    return DiffusionDetector(std::move(model), std::move(sched), scoring, st);
}

} // namespace diffad
