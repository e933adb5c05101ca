#pragma once
// strict INI-style config. every section and key is known; anything else is a
// hard error so typos cannot silently fall back to defaults.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "diffad/dataset.hpp"
#include "diffad/detector.hpp"
#include "diffad/error.hpp"

namespace diffad {

// one dataset the benchmark runs on: either a generator or a file on disk
struct DataSpec {
    std::string name;
    std::string generator; // "blobs" or "ring"; empty when path is set
    std::string path;      // .csv or .bin dataset file; empty when generated
    std::size_t n = 2000;
    std::size_t dim = 2; // blobs only
    double anomaly_frac = 0.1;
};

struct BenchSettings {
    std::vector<std::uint64_t> seeds{1};
    std::vector<MethodKind> methods{MethodKind::DdpmMlp, MethodKind::DdpmDit,
                                    MethodKind::IForest, MethodKind::Ocsvm,
                                    MethodKind::Copod};
    std::string roc_dir; // when set, per-cell ROC point CSVs land here
};

struct FullConfig {
    BenchSettings bench;
    std::vector<DataSpec> datasets;
    SplitSpec split;                              // seed is overridden per replication
    MethodParams methods;                         // hyperparameters for every method
    MethodKind train_method = MethodKind::DdpmMlp; // what cmd_train fits
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

[[noreturn]] inline void config_fail(std::size_t line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline double parse_config_f64(std::string_view v, std::size_t line) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        config_fail(line, "expected a number, got '" + std::string(v) + "'");
    return out;
}

inline std::uint64_t parse_config_u64(std::string_view v, std::size_t line) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        config_fail(line, "expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
}

inline bool parse_config_bool(std::string_view v, std::size_t line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    config_fail(line, "expected true/false, got '" + std::string(v) + "'");
}

inline std::vector<std::string_view> split_list(std::string_view v) {
    std::vector<std::string_view> out;
    while (!v.empty()) {
        const std::size_t comma = v.find(',');
        out.push_back(trim(v.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

} // namespace detail

inline FullConfig parse_config(std::istream& is) {
    using detail::config_fail;
    FullConfig cfg;
    bool seeds_set = false, methods_set = false;

    std::string section;
    DataSpec* data = nullptr; // active [data:...] block
    std::vector<std::string> seen_keys;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;

        if (line.front() == '[') {
            if (line.back() != ']') config_fail(line_no, "unterminated section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            data = nullptr;
            if (section.rfind("data:", 0) == 0) {
                const std::string name = section.substr(5);
                if (name.empty()) config_fail(line_no, "dataset section needs a name");
                for (const DataSpec& d : cfg.datasets)
                    if (d.name == name) config_fail(line_no, "duplicate dataset '" + name + "'");
                cfg.datasets.push_back(DataSpec{.name = name});
                data = &cfg.datasets.back();
            } else if (section != "bench" && section != "split" && section != "diffusion" &&
                       section != "train" && section != "mlp" && section != "dit" &&
                       section != "iforest" && section != "ocsvm") {
                config_fail(line_no, "unknown section [" + section + "]");
            }
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) config_fail(line_no, "expected key = value");
        const std::string key = std::string(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (key.empty()) config_fail(line_no, "empty key");
        if (value.empty()) config_fail(line_no, "empty value for '" + key + "'");
        if (section.empty()) config_fail(line_no, "key '" + key + "' outside any section");

        const std::string qualified = section + "." + key;
        for (const std::string& seen : seen_keys)
            if (seen == qualified) config_fail(line_no, "duplicate key '" + key + "'");
        seen_keys.push_back(qualified);

        auto u64 = [&] { return detail::parse_config_u64(value, line_no); };
        auto f64 = [&] { return detail::parse_config_f64(value, line_no); };

        if (section == "bench") {
            if (key == "seeds") {
                cfg.bench.seeds.clear();
                for (std::string_view s : detail::split_list(value))
                    cfg.bench.seeds.push_back(detail::parse_config_u64(s, line_no));
                seeds_set = true;
            } else if (key == "methods") {
                cfg.bench.methods.clear();
                for (std::string_view m : detail::split_list(value)) {
                    try {
                        cfg.bench.methods.push_back(parse_method(m));
                    } catch (const ConfigError& e) {
                        config_fail(line_no, e.what());
                    }
                }
                methods_set = true;
            } else if (key == "roc_dir") {
                cfg.bench.roc_dir = std::string(value);
            } else {
                config_fail(line_no, "unknown key '" + key + "' in [bench]");
            }
        } else if (data != nullptr) {
            if (key == "generator") {
                if (value != "blobs" && value != "ring")
                    config_fail(line_no, "unknown generator '" + std::string(value) +
                                             "' (valid: blobs, ring)");
                data->generator = std::string(value);
            } else if (key == "path") {
                data->path = std::string(value);
            } else if (key == "n") {
                data->n = u64();
            } else if (key == "dim") {
                data->dim = u64();
            } else if (key == "anomaly_frac") {
                data->anomaly_frac = f64();
            } else {
                config_fail(line_no, "unknown key '" + key + "' in [" + section + "]");
            }
        } else if (section == "split") {
            if (key == "train_fraction")
                cfg.split.train_fraction = f64();
            else if (key == "contamination")
                cfg.split.contamination = f64();
            else
                config_fail(line_no, "unknown key '" + key + "' in [split]");
        } else if (section == "diffusion") {
            DiffusionParams& p = cfg.methods.diffusion;
            if (key == "T")
                p.T = u64();
            else if (key == "beta_start")
                p.beta_start = f64();
            else if (key == "beta_end")
                p.beta_end = f64();
            else if (key == "t_star")
                p.scoring.t_star = u64();
            else if (key == "repeats")
                p.scoring.repeats = u64();
            else if (key == "mode") {
                if (value == "multi")
                    p.scoring.mode = ScoreMode::MultiStep;
                else if (value == "oneshot")
                    p.scoring.mode = ScoreMode::OneShot;
                else
                    config_fail(line_no, "mode must be 'multi' or 'oneshot'");
            } else {
                config_fail(line_no, "unknown key '" + key + "' in [diffusion]");
            }
        } else if (section == "train") {
            TrainConfig& t = cfg.methods.diffusion.train;
            if (key == "epochs")
                t.epochs = u64();
            else if (key == "batch")
                t.batch = u64();
            else if (key == "lr")
                t.lr = f64();
            else if (key == "seed")
                t.seed = u64();
            else if (key == "method") {
                try {
                    cfg.train_method = parse_method(value);
                } catch (const ConfigError& e) {
                    config_fail(line_no, e.what());
                }
            } else {
                config_fail(line_no, "unknown key '" + key + "' in [train]");
            }
        } else if (section == "mlp") {
            MlpConfig& m = cfg.methods.diffusion.mlp;
            if (key == "hidden") {
                m.hidden.clear();
                for (std::string_view h : detail::split_list(value))
                    m.hidden.push_back(detail::parse_config_u64(h, line_no));
            } else if (key == "embed_dim") {
                m.embed_dim = u64();
            } else if (key == "activation") {
                if (value == "relu")
                    m.activation = Activation::Relu;
                else if (value == "gelu")
                    m.activation = Activation::Gelu;
                else
                    config_fail(line_no, "activation must be 'relu' or 'gelu'");
            } else {
                config_fail(line_no, "unknown key '" + key + "' in [mlp]");
            }
        } else if (section == "dit") {
            DitConfig& d = cfg.methods.diffusion.dit;
            if (key == "patch")
                d.patch = u64();
            else if (key == "width")
                d.width = u64();
            else if (key == "blocks")
                d.blocks = u64();
            else if (key == "heads")
                d.heads = u64();
            else if (key == "ffn_hidden")
                d.ffn_hidden = u64();
            else if (key == "embed_dim")
                d.embed_dim = u64();
            else if (key == "pos_embedding")
                d.pos_embedding = detail::parse_config_bool(value, line_no);
            else
                config_fail(line_no, "unknown key '" + key + "' in [dit]");
        } else if (section == "iforest") {
            IforestConfig& f = cfg.methods.iforest;
            if (key == "trees")
                f.trees = u64();
            else if (key == "subsample")
                f.subsample = u64();
            else
                config_fail(line_no, "unknown key '" + key + "' in [iforest]");
        } else if (section == "ocsvm") {
            OcsvmConfig& o = cfg.methods.ocsvm;
            if (key == "nu")
                o.nu = f64();
            else if (key == "gamma")
                o.gamma = f64();
            else if (key == "features")
                o.features = u64();
            else if (key == "epochs")
                o.epochs = u64();
            else
                config_fail(line_no, "unknown key '" + key + "' in [ocsvm]");
        }
    }

    // cross-field validation
    for (const DataSpec& d : cfg.datasets) {
        if (d.generator.empty() == d.path.empty())
            throw ConfigError("dataset '" + d.name +
                              "': set exactly one of 'generator' or 'path'");
    }
    if (seeds_set && cfg.bench.seeds.empty()) throw ConfigError("[bench] seeds is empty");
    if (methods_set && cfg.bench.methods.empty()) throw ConfigError("[bench] methods is empty");
    return cfg;
}

inline FullConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline FullConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    return parse_config(is);
}

} // namespace diffad
