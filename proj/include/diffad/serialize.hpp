#pragma once
// binary model formats. "ADM1" holds a diffusion detector (denoiser weights,
// noise schedule, scoring config, standardizer); "ADB1" holds one classical
// baseline. both are little-endian and round-trip bit-exactly.

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>

#include "diffad/detector.hpp"
#include "diffad/io.hpp"

namespace diffad {

namespace detail {

inline void write_tensor(std::ostream& os, const Tensor& t) {
    io::write_u8(os, static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t d : t.shape()) io::write_u64(os, d);
    for (std::size_t i = 0; i < t.size(); ++i) io::write_f64(os, t[i]);
}

inline Tensor read_tensor(std::istream& is, const char* what) {
    const std::uint8_t ndim = io::read_u8(is, what);
    if (ndim < 1 || ndim > 2) throw FormatError(std::string(what) + ": bad tensor rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t total = 1;
    for (auto& d : shape) {
        d = io::read_u64(is, what);
        if (d == 0 || d > (1u << 28)) throw FormatError(std::string(what) + ": bad tensor dim");
        total *= d;
    }
    if (total > (1u << 28)) throw FormatError(std::string(what) + ": implausible tensor size");
    Tensor t(shape);
    for (std::size_t i = 0; i < total; ++i) {
        t[i] = io::read_f64(is, what);
        if (!std::isfinite(t[i]))
            throw FormatError(std::string(what) + ": non-finite tensor value");
    }
    return t;
}

inline void write_f64_array(std::ostream& os, const std::vector<double>& v) {
    io::write_u64(os, v.size());
    for (double x : v) io::write_f64(os, x);
}

inline std::vector<double> read_f64_array(std::istream& is, const char* what,
                                          std::size_t cap = (1u << 28)) {
    const std::uint64_t n = io::read_u64(is, what);
    if (n == 0 || n > cap) throw FormatError(std::string(what) + ": bad array length");
    std::vector<double> v(n);
    for (auto& x : v) {
        x = io::read_f64(is, what);
        if (!std::isfinite(x)) throw FormatError(std::string(what) + ": non-finite value");
    }
    return v;
}

inline void write_denoiser(std::ostream& os, const Denoiser& model) {
    io::write_u8(os, static_cast<std::uint8_t>(model.backbone()));
    if (model.backbone() == Backbone::Mlp) {
        const MlpConfig& cfg = static_cast<const MlpDenoiser&>(model).config();
        io::write_u64(os, cfg.data_dim);
        io::write_u64(os, cfg.embed_dim);
        io::write_u8(os, static_cast<std::uint8_t>(cfg.activation));
        io::write_u64(os, cfg.hidden.size());
        for (std::size_t h : cfg.hidden) io::write_u64(os, h);
    } else {
        const DitConfig& cfg = static_cast<const DitDenoiser&>(model).config();
        io::write_u64(os, cfg.data_dim);
        io::write_u64(os, cfg.patch);
        io::write_u64(os, cfg.width);
        io::write_u64(os, cfg.blocks);
        io::write_u64(os, cfg.heads);
        io::write_u64(os, cfg.ffn_hidden);
        io::write_u64(os, cfg.embed_dim);
        io::write_u8(os, cfg.pos_embedding ? 1 : 0);
    }
    io::write_u64(os, model.params().size());
    for (const Tensor& p : model.params()) write_tensor(os, p);
}

inline std::shared_ptr<Denoiser> read_denoiser(std::istream& is) {
    const std::uint8_t backbone = io::read_u8(is, "backbone id");
    if (backbone > 1) throw FormatError("unknown backbone id");
    std::shared_ptr<Denoiser> model;
    try {
        if (backbone == 0) {
            MlpConfig cfg;
            cfg.data_dim = io::read_u64(is, "mlp data_dim");
            cfg.embed_dim = io::read_u64(is, "mlp embed_dim");
            const std::uint8_t act = io::read_u8(is, "mlp activation");
            if (act > 1) throw FormatError("unknown activation id");
            cfg.activation = static_cast<Activation>(act);
            const std::uint64_t layers = io::read_u64(is, "mlp hidden count");
            if (layers > 64) throw FormatError("implausible hidden layer count");
            cfg.hidden.resize(layers);
            for (auto& h : cfg.hidden) h = io::read_u64(is, "mlp hidden width");
            model = std::make_shared<MlpDenoiser>(cfg, 0);
        } else {
            DitConfig cfg;
            cfg.data_dim = io::read_u64(is, "dit data_dim");
            cfg.patch = io::read_u64(is, "dit patch");
            cfg.width = io::read_u64(is, "dit width");
            cfg.blocks = io::read_u64(is, "dit blocks");
            cfg.heads = io::read_u64(is, "dit heads");
            cfg.ffn_hidden = io::read_u64(is, "dit ffn_hidden");
            cfg.embed_dim = io::read_u64(is, "dit embed_dim");
            cfg.pos_embedding = io::read_u8(is, "dit pos flag") != 0;
            model = std::make_shared<DitDenoiser>(cfg, 0);
        }
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid model hyperparameters: ") + e.what());
    }

    const std::uint64_t count = io::read_u64(is, "parameter count");
    if (count != model->params().size())
        throw FormatError("parameter count does not match the architecture");
    for (Tensor& p : model->params()) {
        Tensor loaded = read_tensor(is, "parameter tensor");
        if (!loaded.same_shape(p)) throw FormatError("parameter tensor shape mismatch");
        p = std::move(loaded);
    }
    return model;
}

} // namespace detail

inline void save_diffusion_model(std::ostream& os, const DiffusionDetector& det) {
    io::write_magic(os, "ADM1");
    detail::write_denoiser(os, det.model());
    io::write_u8(os, 1); // detector blocks follow
    const NoiseSchedule& s = det.schedule();
    io::write_u64(os, s.T);
    for (double b : s.betas) io::write_f64(os, b);
    io::write_u64(os, det.scoring().t_star);
    io::write_u64(os, det.scoring().repeats);
    io::write_u8(os, static_cast<std::uint8_t>(det.scoring().mode));
    io::write_u64(os, det.standardizer().dim());
    for (std::size_t j = 0; j < det.standardizer().dim(); ++j)
        io::write_f64(os, det.standardizer().mean[j]);
    for (std::size_t j = 0; j < det.standardizer().dim(); ++j)
        io::write_f64(os, det.standardizer().stdev[j]);
}

// reads everything after the magic (already consumed by the caller)
inline DiffusionDetector load_diffusion_model_body(std::istream& is) {
    std::shared_ptr<Denoiser> model = detail::read_denoiser(is);
    if (io::read_u8(is, "detector flag") != 1)
        throw FormatError("model file carries no detector blocks");

    const std::uint64_t T = io::read_u64(is, "schedule length");
    if (T == 0 || T > 1000000) throw FormatError("implausible schedule length");
    std::vector<double> betas(T);
    for (auto& b : betas) b = io::read_f64(is, "schedule beta");

    ScoringConfig sc;
    sc.t_star = io::read_u64(is, "scoring t_star");
    sc.repeats = io::read_u64(is, "scoring repeats");
    const std::uint8_t mode = io::read_u8(is, "scoring mode");
    if (mode > 1) throw FormatError("unknown scoring mode");
    sc.mode = static_cast<ScoreMode>(mode);

    const std::uint64_t dim = io::read_u64(is, "standardizer dim");
    if (dim == 0 || dim > (1u << 24)) throw FormatError("implausible standardizer dim");
    Standardizer st = Standardizer::identity(dim);
    for (std::size_t j = 0; j < dim; ++j) st.mean[j] = io::read_f64(is, "standardizer mean");
    for (std::size_t j = 0; j < dim; ++j) st.stdev[j] = io::read_f64(is, "standardizer std");

    io::expect_eof(is);
    try {
        return DiffusionDetector(std::move(model), schedule_from_betas(std::move(betas)), sc,
                                 std::move(st));
    } catch (const Error& e) {
        throw FormatError(std::string("inconsistent detector blocks: ") + e.what());
    }
}

inline void save_baseline_model(std::ostream& os, const Detector& det) {
    io::write_magic(os, "ADB1");
    io::write_u8(os, static_cast<std::uint8_t>(det.kind()));
    switch (det.kind()) {
        case MethodKind::IForest: {
            const IsolationForest& m = static_cast<const IforestMethod&>(det).model();
            if (!m.fitted()) throw ContractError("cannot serialize an unfitted model");
            io::write_u64(os, m.config().trees);
            io::write_u64(os, m.config().subsample);
            io::write_u64(os, m.psi());
            io::write_u64(os, m.data_dim());
            io::write_u64(os, m.trees().size());
            for (const IsolationTree& tree : m.trees()) {
                io::write_u64(os, tree.size());
                for (const IsolationNode& node : tree) {
                    io::write_u32(os, static_cast<std::uint32_t>(node.feature));
                    io::write_f64(os, node.threshold);
                    io::write_u32(os, node.left);
                    io::write_u32(os, node.right);
                    io::write_u64(os, node.size);
                }
            }
            break;
        }
        case MethodKind::Ocsvm: {
            const Ocsvm& m = static_cast<const OcsvmMethod&>(det).model();
            if (!m.fitted()) throw ContractError("cannot serialize an unfitted model");
            io::write_f64(os, m.config().nu);
            io::write_u64(os, m.config().features);
            io::write_u64(os, m.config().epochs);
            io::write_f64(os, m.gamma());
            io::write_f64(os, m.rho());
            detail::write_tensor(os, m.omega());
            detail::write_f64_array(os, m.phase());
            detail::write_f64_array(os, m.weights());
            break;
        }
        case MethodKind::Copod: {
            const Copod& m = static_cast<const CopodMethod&>(det).model();
            if (!m.fitted()) throw ContractError("cannot serialize an unfitted model");
            io::write_u64(os, m.train_size());
            io::write_u64(os, m.data_dim());
            for (const std::vector<double>& col : m.sorted_columns())
                detail::write_f64_array(os, col);
            for (double s : m.skewness()) io::write_f64(os, s);
            break;
        }
        default:
            throw ContractError("save_baseline_model: not a baseline detector");
    }
}

// reads everything after the magic (already consumed by the caller)
inline std::unique_ptr<Detector> load_baseline_model_body(std::istream& is) {
    const std::uint8_t kind = io::read_u8(is, "method kind");
    switch (static_cast<MethodKind>(kind)) {
        case MethodKind::IForest: {
            IforestConfig cfg;
            cfg.trees = io::read_u64(is, "iforest tree count");
            cfg.subsample = io::read_u64(is, "iforest subsample");
            const std::uint64_t psi = io::read_u64(is, "iforest psi");
            const std::uint64_t dim = io::read_u64(is, "iforest dim");
            const std::uint64_t n_trees = io::read_u64(is, "iforest forest size");
            if (cfg.trees == 0 || cfg.trees > 100000 || n_trees != cfg.trees ||
                cfg.subsample < 2 || psi < 2 || psi > cfg.subsample || dim == 0 ||
                dim > (1u << 24))
                throw FormatError("inconsistent isolation forest header");
            std::vector<IsolationTree> trees(n_trees);
            for (IsolationTree& tree : trees) {
                const std::uint64_t nodes = io::read_u64(is, "tree node count");
                if (nodes == 0 || nodes > 4 * psi)
                    throw FormatError("implausible tree node count");
                tree.resize(nodes);
                for (IsolationNode& node : tree) {
                    node.feature = static_cast<int>(io::read_u32(is, "node feature"));
                    node.threshold = io::read_f64(is, "node threshold");
                    node.left = io::read_u32(is, "node left child");
                    node.right = io::read_u32(is, "node right child");
                    node.size = io::read_u64(is, "node size");
                    const bool leaf = node.feature < 0;
                    if (leaf) {
                        if (node.feature != -1 || node.size > psi)
                            throw FormatError("invalid leaf node");
                    } else if (node.feature >= static_cast<int>(dim) ||
                               !std::isfinite(node.threshold) || node.left >= nodes ||
                               node.right >= nodes) {
                        throw FormatError("invalid split node");
                    }
                }
            }
            io::expect_eof(is);
            auto out = std::make_unique<IforestMethod>(cfg);
            out->model() = IsolationForest::restore(cfg, psi, dim, std::move(trees));
            return out;
        }
        case MethodKind::Ocsvm: {
            OcsvmConfig cfg;
            cfg.nu = io::read_f64(is, "ocsvm nu");
            cfg.features = io::read_u64(is, "ocsvm feature count");
            cfg.epochs = io::read_u64(is, "ocsvm epochs");
            const double gamma = io::read_f64(is, "ocsvm gamma");
            const double rho = io::read_f64(is, "ocsvm rho");
            if (!(cfg.nu > 0.0) || cfg.nu > 1.0 || cfg.features == 0 ||
                cfg.features > (1u << 24) || cfg.epochs == 0 || !(gamma > 0.0) ||
                !std::isfinite(rho))
                throw FormatError("inconsistent ocsvm header");
            Tensor omega = detail::read_tensor(is, "ocsvm frequencies");
            std::vector<double> phase = detail::read_f64_array(is, "ocsvm phases");
            std::vector<double> weights = detail::read_f64_array(is, "ocsvm weights");
            if (omega.ndim() != 2 || omega.rows() != cfg.features ||
                phase.size() != cfg.features || weights.size() != cfg.features)
                throw FormatError("inconsistent ocsvm feature map");
            io::expect_eof(is);
            auto out = std::make_unique<OcsvmMethod>(cfg);
            out->model() = Ocsvm::restore(cfg, gamma, rho, std::move(omega), std::move(phase),
                                          std::move(weights));
            return out;
        }
        case MethodKind::Copod: {
            const std::uint64_t n = io::read_u64(is, "copod sample size");
            const std::uint64_t d = io::read_u64(is, "copod dim");
            if (n < 2 || n > (1u << 28) || d == 0 || d > (1u << 24))
                throw FormatError("inconsistent copod header");
            std::vector<std::vector<double>> cols(d);
            for (auto& col : cols) {
                col = detail::read_f64_array(is, "copod column");
                if (col.size() != n) throw FormatError("copod column length mismatch");
                if (!std::is_sorted(col.begin(), col.end()))
                    throw FormatError("copod column not sorted");
            }
            std::vector<double> skew(d);
            for (auto& s : skew) s = io::read_f64(is, "copod skewness");
            io::expect_eof(is);
            auto out = std::make_unique<CopodMethod>();
            out->model() = Copod::restore(n, std::move(cols), std::move(skew));
            return out;
        }
        default:
            throw FormatError("unknown baseline method kind");
    }
}

// dispatch on the detector's kind; diffusion models get ADM1, baselines ADB1
inline void save_model(std::ostream& os, const Detector& det) {
    if (det.kind() == MethodKind::DdpmMlp || det.kind() == MethodKind::DdpmDit) {
        save_diffusion_model(os, static_cast<const DiffusionMethod&>(det).detector());
    } else {
        save_baseline_model(os, det);
    }
}

inline std::unique_ptr<Detector> load_model(std::istream& is) {
    char magic[5] = {};
    io::read_bytes(is, magic, 4, "file magic");
    const std::string_view got(magic, 4);
    if (got == "ADM1") {
        DiffusionDetector det = load_diffusion_model_body(is);
        const Backbone backbone = det.model().backbone();
        DiffusionParams params;
        params.T = det.schedule().T;
        params.scoring = det.scoring();
        auto out = std::make_unique<DiffusionMethod>(backbone, params);
        out->adopt(std::move(det));
        return out;
    }
    if (got == "ADB1") return load_baseline_model_body(is);
    throw FormatError("unrecognized model file (expected magic ADM1 or ADB1)");
}

inline void save_model_file(const std::string& path, const Detector& det) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    save_model(os, det);
    os.flush();
    if (!os) throw IoError("failed writing '" + path + "'");
}

inline std::unique_ptr<Detector> load_model_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return load_model(is);
}

} // namespace diffad
