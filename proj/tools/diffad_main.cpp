// diffad: train diffusion models on normal data, score anomalies by how badly
// the model reconstructs them, and benchmark against classical baselines.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "diffad/diffad.hpp"

namespace {

using namespace diffad;

// exit codes: 0 ok, 1 partial bench failure, 2 usage, 3 i/o, 4 numeric, 5 contract

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << content;
    if (!os) throw IoError("short write to '" + path + "'");
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Dataset load_dataset_any(const std::string& path) {
    return ends_with(path, ".bin") ? load_bin(path) : load_csv(path);
}

// ----------------------------------------------------------------------------
// subcommands
// ----------------------------------------------------------------------------

struct GenDataArgs {
    std::string generator;
    std::size_t n = 2000;
    std::size_t dim = 2;
    double anomaly_frac = 0.1;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    Dataset ds;
    if (a.generator == "blobs") {
        ds = gen_blobs(a.n, a.dim, a.anomaly_frac, a.seed);
    } else if (a.generator == "ring") {
        ds = gen_ring(a.n, a.anomaly_frac, a.seed);
    } else {
        throw ConfigError("unknown generator '" + a.generator + "' (valid: blobs, ring)");
    }
    if (ends_with(a.out, ".csv")) {
        save_csv(a.out, ds);
    } else if (ends_with(a.out, ".bin")) {
        save_bin(a.out, ds);
    } else {
        throw ConfigError("--out must end in .csv or .bin, got '" + a.out + "'");
    }
    std::fprintf(stderr, "wrote %zu rows (%zu anomalies) to %s\n", ds.n(),
                 static_cast<std::size_t>(std::count(ds.labels.begin(), ds.labels.end(), 1)),
                 a.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string model_out;
};

int cmd_train(const TrainArgs& a) {
    const FullConfig cfg = load_config(a.config);
    const Dataset ds = load_dataset_any(a.data);
    auto det = make_detector(cfg.train_method, cfg.methods);
    det->fit(ds.X, cfg.methods.diffusion.train.seed);
    if (const auto* dm = dynamic_cast<const DiffusionMethod*>(det.get())) {
        const std::vector<double>& trace = dm->loss_trace();
        for (std::size_t e = 0; e < trace.size(); ++e)
            std::printf("%zu,%.17g\n", e + 1, trace[e]);
    }
    save_model_file(a.model_out, *det);
    std::fprintf(stderr, "trained %s on %zu rows, saved to %s\n",
                 std::string(det->name()).c_str(), ds.n(), a.model_out.c_str());
    return 0;
}

struct ScoreArgs {
    std::string model;
    std::string data;
    std::string out;
    std::uint64_t seed = 1;
};

int cmd_score(const ScoreArgs& a) {
    const std::unique_ptr<Detector> det = load_model_file(a.model);
    const Dataset ds = load_dataset_any(a.data);
    const std::vector<double> scores = det->score(ds.X, a.seed);
    std::string csv = "row,score\n";
    char buf[64];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, scores[i]);
        csv += buf;
    }
    write_text_file(a.out, csv);
    std::fprintf(stderr, "scored %zu rows with %s\n", scores.size(),
                 std::string(det->name()).c_str());
    return 0;
}

struct SampleArgs {
    std::string model;
    std::size_t n = 100;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_sample(const SampleArgs& a) {
    const std::unique_ptr<Detector> det = load_model_file(a.model);
    const auto* dm = dynamic_cast<const DiffusionMethod*>(det.get());
    if (dm == nullptr)
        throw ContractError("model '" + a.model + "' is not a diffusion detector; cannot sample");
    RngStream rng(a.seed);
    const Tensor x = dm->detector().sample(a.n, rng);
    std::string csv;
    char buf[64];
    for (std::size_t j = 0; j < x.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%sf%zu", j ? "," : "", j);
        csv += buf;
    }
    csv += '\n';
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%s%.17g", j ? "," : "", x(i, j));
            csv += buf;
        }
        csv += '\n';
    }
    write_text_file(a.out, csv);
    std::fprintf(stderr, "sampled %zu rows to %s\n", x.rows(), a.out.c_str());
    return 0;
}

struct BenchArgs {
    std::string config;
    std::string out_csv;
    std::string out_md;
};

int cmd_bench(const BenchArgs& a) {
    const FullConfig cfg = load_config(a.config);
    const BenchReport report = run_bench(cfg);
    write_text_file(a.out_csv, format_bench_csv(report));
    const std::string md = format_bench_markdown(report, cfg.bench.methods, cfg.datasets);
    write_text_file(a.out_md, md);
    if (!cfg.bench.roc_dir.empty()) write_roc_csvs(report, cfg.bench.roc_dir);
    std::cout << md;
    if (report.any_failed) {
        std::size_t bad = 0;
        for (const CellOutcome& c : report.cells) bad += c.failed ? 1 : 0;
        std::fprintf(stderr, "%zu of %zu cells failed; see %s\n", bad, report.cells.size(),
                     a.out_csv.c_str());
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-based anomaly detection benchmark"};
    app.require_subcommand(1);

    GenDataArgs gd;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--generator", gd.generator, "blobs or ring")->required();
    gen->add_option("--n", gd.n, "total rows");
    gen->add_option("--dim", gd.dim, "feature count (blobs only)");
    gen->add_option("--anomaly-frac", gd.anomaly_frac, "fraction of anomalous rows");
    gen->add_option("--seed", gd.seed, "rng seed");
    gen->add_option("--out", gd.out, "output path (.csv or .bin)")->required();

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "fit a detector on a dataset");
    train->add_option("--config", tr.config, "config file")->required();
    train->add_option("--data", tr.data, "training data (.csv or .bin)")->required();
    train->add_option("--model-out", tr.model_out, "where to write the model")->required();

    ScoreArgs sc;
    CLI::App* score = app.add_subcommand("score", "score rows with a trained model");
    score->add_option("--model", sc.model, "model file")->required();
    score->add_option("--data", sc.data, "data to score (.csv or .bin)")->required();
    score->add_option("--out", sc.out, "scores CSV path")->required();
    score->add_option("--seed", sc.seed, "scoring rng seed");

    SampleArgs sa;
    CLI::App* sample = app.add_subcommand("sample", "draw samples from a diffusion model");
    sample->add_option("--model", sa.model, "model file")->required();
    sample->add_option("--n", sa.n, "sample count");
    sample->add_option("--seed", sa.seed, "rng seed");
    sample->add_option("--out", sa.out, "samples CSV path")->required();

    BenchArgs be;
    CLI::App* bench = app.add_subcommand("bench", "run the method x dataset x seed grid");
    bench->add_option("--config", be.config, "config file")->required();
    bench->add_option("--out-csv", be.out_csv, "per-cell results CSV")->required();
    bench->add_option("--out-md", be.out_md, "aggregate markdown table")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // help exits clean; anything else is a usage error
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd);
        if (train->parsed()) return cmd_train(tr);
        if (score->parsed()) return cmd_score(sc);
        if (sample->parsed()) return cmd_sample(sa);
        if (bench->parsed()) return cmd_bench(be);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    }
    return 2; // no subcommand matched; require_subcommand should prevent this
}
