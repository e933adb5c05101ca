#pragma once
// benchmark harness: for every (dataset, method, seed) cell, split the data,
// fit on the train side, score the test side, and record the AUC. cell seeds
// are derived from the cell's identity so results never depend on run order.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "diffad/config.hpp"
#include "diffad/dataset.hpp"
#include "diffad/detector.hpp"
#include "diffad/metrics.hpp"
#include "diffad/rng.hpp"

namespace diffad {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

// every cell gets its own seed from its identity and the replication seed, so
// adding or removing methods never shifts anyone else's randomness
inline std::uint64_t cell_seed(std::string_view dataset, std::string_view method,
                               std::size_t rep, std::uint64_t rep_seed) {
    std::string id;
    id.reserve(dataset.size() + method.size() + 24);
    id += "ds=";
    id += dataset;
    id += ";method=";
    id += method;
    id += ";rep=";
    id += std::to_string(rep);
    return mix64(fnv1a64(id) ^ rep_seed);
}

// build the dataset a spec describes; generated data depends on the rep seed,
// file-backed data does not
inline Dataset materialize_dataset(const DataSpec& spec, std::uint64_t seed) {
    Dataset ds;
    if (!spec.path.empty()) {
        const bool binary = spec.path.size() >= 4 &&
                            spec.path.compare(spec.path.size() - 4, 4, ".bin") == 0;
        ds = binary ? load_bin(spec.path) : load_csv(spec.path);
    } else if (spec.generator == "blobs") {
        ds = gen_blobs(spec.n, spec.dim, spec.anomaly_frac, seed);
    } else if (spec.generator == "ring") {
        ds = gen_ring(spec.n, spec.anomaly_frac, seed);
    } else {
        throw ConfigError("dataset '" + spec.name + "' has no generator or path");
    }
    ds.name = spec.name;
    return ds;
}

struct CellOutcome {
    BenchmarkResult result; // auc meaningless when failed
    bool failed = false;
    std::string error;
    std::vector<RocPoint> roc; // empty when failed
};

struct BenchReport {
    std::vector<CellOutcome> cells; // in (dataset, method, seed) config order
    bool any_failed = false;
};

inline BenchReport run_bench(const FullConfig& cfg) {
    if (cfg.datasets.empty()) throw ConfigError("bench needs at least one dataset");
    if (cfg.bench.methods.empty()) throw ConfigError("bench needs at least one method");
    if (cfg.bench.seeds.empty()) throw ConfigError("bench needs at least one seed");

    BenchReport report;
    for (const DataSpec& spec : cfg.datasets) {
        // one split per replication, shared by every method for fairness
        const std::size_t reps = cfg.bench.seeds.size();
        std::vector<SplitResult> splits(reps);
        std::vector<std::string> prep_error(reps);
        for (std::size_t rep = 0; rep < reps; ++rep) {
            try {
                const Dataset ds = materialize_dataset(spec, cfg.bench.seeds[rep]);
                SplitSpec sp = cfg.split;
                sp.seed = cfg.bench.seeds[rep];
                splits[rep] = split(ds, sp);
            } catch (const std::exception& e) {
                prep_error[rep] = e.what();
            }
        }

        for (const MethodKind kind : cfg.bench.methods) {
            for (std::size_t rep = 0; rep < reps; ++rep) {
                CellOutcome cell;
                cell.result.method = std::string(method_name(kind));
                cell.result.dataset = spec.name;
                cell.result.seed = cfg.bench.seeds[rep];
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    if (!prep_error[rep].empty())
                        throw ContractError("dataset preparation failed: " + prep_error[rep]);
                    const std::uint64_t seed =
                        cell_seed(spec.name, method_name(kind), rep, cfg.bench.seeds[rep]);
                    auto det = make_detector(kind, cfg.methods);
                    det->fit(splits[rep].train.X, seed);
                    LabeledScores ls;
                    ls.scores = det->score(splits[rep].test.X, seed);
                    ls.labels = splits[rep].test.labels;
                    cell.result.auc = auc_roc(ls);
                    cell.roc = roc_points(ls);
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.error = e.what();
                    report.any_failed = true;
                }
                cell.result.seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                report.cells.push_back(std::move(cell));
            }
        }
    }
    return report;
}

inline std::string format_bench_csv(const BenchReport& report) {
    std::string out = "method,dataset,seed,auc,seconds\n";
    char buf[160];
    for (const CellOutcome& cell : report.cells) {
        if (cell.failed) {
            std::snprintf(buf, sizeof buf, "%s,%s,%llu,error,%.3f\n",
                          cell.result.method.c_str(), cell.result.dataset.c_str(),
                          static_cast<unsigned long long>(cell.result.seed),
                          cell.result.seconds);
        } else {
            std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.17g,%.3f\n",
                          cell.result.method.c_str(), cell.result.dataset.c_str(),
                          static_cast<unsigned long long>(cell.result.seed), cell.result.auc,
                          cell.result.seconds);
        }
        out += buf;
    }
    return out;
}

// markdown table in the usual benchmark layout: datasets as rows, methods as
// columns, AUC as "percent ± std", the best method per dataset in bold
inline std::string format_bench_markdown(const BenchReport& report,
                                         const std::vector<MethodKind>& methods,
                                         const std::vector<DataSpec>& datasets) {
    std::vector<BenchmarkResult> ok;
    for (const CellOutcome& cell : report.cells)
        if (!cell.failed) ok.push_back(cell.result);
    const std::vector<AggregateRow> rows = aggregate(ok);

    auto find_row = [&](const std::string& ds, std::string_view m) -> const AggregateRow* {
        for (const AggregateRow& r : rows)
            if (r.dataset == ds && r.method == m) return &r;
        return nullptr;
    };

    std::string out = "AUC-ROC in % (mean ± population std over seeds)\n\n| dataset |";
    for (const MethodKind m : methods) {
        out += ' ';
        out += method_name(m);
        out += " |";
    }
    out += "\n|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) out += "---|";
    out += '\n';

    char buf[96];
    for (const DataSpec& spec : datasets) {
        double best = -1.0;
        for (const MethodKind m : methods)
            if (const AggregateRow* r = find_row(spec.name, method_name(m)))
                best = std::max(best, r->mean_auc);
        out += "| " + spec.name + " |";
        for (const MethodKind m : methods) {
            const AggregateRow* r = find_row(spec.name, method_name(m));
            if (r == nullptr) {
                out += " error |";
                continue;
            }
            const bool is_best = r->mean_auc == best;
            std::snprintf(buf, sizeof buf, " %s%.2f ± %.2f%s |", is_best ? "**" : "",
                          100.0 * r->mean_auc, 100.0 * r->std_auc, is_best ? "**" : "");
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// per-cell ROC point CSVs for external plotting
inline void write_roc_csvs(const BenchReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const CellOutcome& cell : report.cells) {
        if (cell.failed) continue;
        const std::string path = dir + "/" + cell.result.dataset + "_" + cell.result.method +
                                 "_" + std::to_string(cell.result.seed) + ".csv";
        std::ofstream os(path);
        if (!os) throw IoError("cannot open '" + path + "' for writing");
        os << "fpr,tpr\n";
        char buf[80];
        for (const RocPoint& p : cell.roc) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.tpr);
            os << buf;
        }
        if (!os) throw IoError("failed writing '" + path + "'");
    }
}

} // namespace diffad
