#pragma once
// one fit/score interface over all five methods so the benchmark can treat
// them uniformly. higher score = more anomalous, everywhere.

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "diffad/copod.hpp"
#include "diffad/diffusion.hpp"
#include "diffad/error.hpp"
#include "diffad/iforest.hpp"
#include "diffad/ocsvm.hpp"

namespace diffad {

enum class MethodKind : std::uint8_t {
    DdpmMlp = 0,
    DdpmDit = 1,
    IForest = 2,
    Ocsvm = 3,
    Copod = 4,
};

inline constexpr std::string_view kMethodNames[] = {"ddpm_mlp", "ddpm_dit", "iforest",
                                                    "ocsvm", "copod"};

inline std::string_view method_name(MethodKind kind) {
    return kMethodNames[static_cast<std::size_t>(kind)];
}

inline MethodKind parse_method(std::string_view name) {
    for (std::size_t i = 0; i < std::size(kMethodNames); ++i)
        if (kMethodNames[i] == name) return static_cast<MethodKind>(i);
    throw ConfigError("unknown method '" + std::string(name) +
                      "' (valid: ddpm_mlp, ddpm_dit, iforest, ocsvm, copod)");
}

// everything needed to build and train a diffusion detector, minus the data
struct DiffusionParams {
    std::size_t T = 100;
    double beta_start = 0.0; // <= 0 means "use the default schedule for T"
    double beta_end = 0.0;
    ScoringConfig scoring;
    TrainConfig train; // its seed is overridden by the fit() seed
    MlpConfig mlp;     // data_dim filled in at fit time
    DitConfig dit;
};

inline NoiseSchedule make_schedule(const DiffusionParams& p) {
    return p.beta_start > 0.0 ? linear_schedule(p.T, p.beta_start, p.beta_end)
                              : default_linear_schedule(p.T);
}

// per-method hyperparameters, typically filled from a config file
struct MethodParams {
    DiffusionParams diffusion;
    IforestConfig iforest;
    OcsvmConfig ocsvm;
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual MethodKind kind() const = 0;
    virtual std::size_t data_dim() const = 0; // 0 before fit
    virtual void fit(const Tensor& train, std::uint64_t seed) = 0;
    // seed matters only for stochastic scorers (the diffusion methods)
    virtual std::vector<double> score(const Tensor& x, std::uint64_t seed) const = 0;
    std::string_view name() const { return method_name(kind()); }
};

class DiffusionMethod final : public Detector {
public:
    DiffusionMethod(Backbone backbone, DiffusionParams params)
        : backbone_(backbone), params_(std::move(params)) {}

    MethodKind kind() const override {
        return backbone_ == Backbone::Mlp ? MethodKind::DdpmMlp : MethodKind::DdpmDit;
    }
    std::size_t data_dim() const override { return det_ ? det_->model().data_dim() : 0; }

    void fit(const Tensor& train, std::uint64_t seed) override {
        if (train.ndim() != 2) throw ShapeError("diffusion fit: expected a 2-D data matrix");
        std::shared_ptr<Denoiser> model;
        if (backbone_ == Backbone::Mlp) {
            MlpConfig cfg = params_.mlp;
            cfg.data_dim = train.cols();
            model = std::make_shared<MlpDenoiser>(cfg, seed);
        } else {
            DitConfig cfg = params_.dit;
            cfg.data_dim = train.cols();
            if (train.cols() % cfg.patch != 0)
                throw ConfigError("dit: patch size must divide the data dimension");
            model = std::make_shared<DitDenoiser>(cfg, seed);
        }
        TrainConfig tc = params_.train;
        tc.seed = seed;
        det_.emplace(fit_diffusion_detector(std::move(model), train, make_schedule(params_),
                                            tc, params_.scoring, &trace_));
    }

    std::vector<double> score(const Tensor& x, std::uint64_t seed) const override {
        if (!det_) throw ContractError("diffusion: score before fit");
        return det_->anomaly_score(x, seed);
    }

    const DiffusionParams& params() const { return params_; }
    const std::vector<double>& loss_trace() const { return trace_; }
    const DiffusionDetector& detector() const {
        if (!det_) throw ContractError("diffusion: detector before fit");
        return *det_;
    }
    // adopt an already-fitted detector (deserialization path)
    void adopt(DiffusionDetector det) { det_.emplace(std::move(det)); }

private:
    Backbone backbone_;
    DiffusionParams params_;
    std::optional<DiffusionDetector> det_;
    std::vector<double> trace_;
};

class IforestMethod final : public Detector {
public:
    explicit IforestMethod(IforestConfig cfg = {}) : model_(cfg) {}
    MethodKind kind() const override { return MethodKind::IForest; }
    std::size_t data_dim() const override { return model_.data_dim(); }
    void fit(const Tensor& train, std::uint64_t seed) override { model_.fit(train, seed); }
    std::vector<double> score(const Tensor& x, std::uint64_t) const override {
        return model_.score(x);
    }
    IsolationForest& model() { return model_; }
    const IsolationForest& model() const { return model_; }

private:
    IsolationForest model_;
};

class OcsvmMethod final : public Detector {
public:
    explicit OcsvmMethod(OcsvmConfig cfg = {}) : model_(cfg) {}
    MethodKind kind() const override { return MethodKind::Ocsvm; }
    std::size_t data_dim() const override { return model_.data_dim(); }
    void fit(const Tensor& train, std::uint64_t seed) override { model_.fit(train, seed); }
    std::vector<double> score(const Tensor& x, std::uint64_t) const override {
        return model_.score(x);
    }
    Ocsvm& model() { return model_; }
    const Ocsvm& model() const { return model_; }

private:
    Ocsvm model_;
};

class CopodMethod final : public Detector {
public:
    MethodKind kind() const override { return MethodKind::Copod; }
    std::size_t data_dim() const override { return model_.data_dim(); }
    void fit(const Tensor& train, std::uint64_t) override { model_.fit(train); }
    std::vector<double> score(const Tensor& x, std::uint64_t) const override {
        return model_.score(x);
    }
    Copod& model() { return model_; }
    const Copod& model() const { return model_; }

private:
    Copod model_;
};

inline std::unique_ptr<Detector> make_detector(MethodKind kind, const MethodParams& params) {
    switch (kind) {
        case MethodKind::DdpmMlp:
            return std::make_unique<DiffusionMethod>(Backbone::Mlp, params.diffusion);
        case MethodKind::DdpmDit:
            return std::make_unique<DiffusionMethod>(Backbone::Dit, params.diffusion);
        case MethodKind::IForest:
            return std::make_unique<IforestMethod>(params.iforest);
        case MethodKind::Ocsvm:
            return std::make_unique<OcsvmMethod>(params.ocsvm);
        case MethodKind::Copod:
            return std::make_unique<CopodMethod>();
    }
    throw ContractError("make_detector: unhandled method kind");
}

} // namespace diffad
