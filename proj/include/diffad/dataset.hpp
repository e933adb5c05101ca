#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "diffad/error.hpp"
#include "diffad/io.hpp"
#include "diffad/rng.hpp"
#include "diffad/tensor.hpp"

namespace diffad {

// A feature matrix with optional binary row labels (0 = normal, 1 = anomaly)
// and, for synthetic data, a human-readable provenance string recording the
// generator and its parameters.
struct Dataset {
    Tensor X;
    std::vector<std::uint8_t> labels; // empty = absent
    std::string name;
    std::string provenance;

    bool has_labels() const { return !labels.empty(); }
    std::size_t n() const { return X.rows(); }
    std::size_t d() const { return X.cols(); }
};

namespace detail {

// Floor of frac*n, nudged so that products that are mathematically integral
// don't fall one short due to rounding (e.g. 1000 * 0.3).
inline std::size_t floor_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

inline Dataset assemble(std::vector<std::vector<double>> rows, std::vector<std::uint8_t> labels,
                        std::size_t d, RngStream& shuffle_rng) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    Dataset ds;
    ds.X = Tensor({rows.size(), d});
    ds.labels.resize(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) ds.X(i, j) = rows[order[i]][j];
        ds.labels[i] = labels[order[i]];
    }
    return ds;
}

} // namespace detail

// ============================================================================
// Synthetic generators
// ============================================================================

// Normal rows ~ N(0, I_d); anomalies uniform in [-6,6]^d, rejected until they
// land farther than 4 from the origin. Exactly floor(n * anomaly_frac)
// anomalies; rows shuffled.
inline Dataset gen_blobs(std::size_t n, std::size_t d, double anomaly_frac, std::uint64_t seed) {
    if (n == 0 || d == 0) throw ContractError("gen_blobs: n and d must be positive");
    if (!(anomaly_frac > 0.0 && anomaly_frac < 0.5)) {
        throw ContractError("gen_blobs: anomaly_frac must be in (0, 0.5)");
    }
    const std::size_t n_anom = detail::floor_count(anomaly_frac, n);
    const std::size_t n_norm = n - n_anom;

    RngStream norm_rng = RngStream::substream(seed, 0);
    RngStream anom_rng = RngStream::substream(seed, 1);
    RngStream shuf_rng = RngStream::substream(seed, 2);

    std::vector<std::vector<double>> rows;
    std::vector<std::uint8_t> labels;
    rows.reserve(n);
    labels.reserve(n);
    for (std::size_t i = 0; i < n_norm; ++i) {
        std::vector<double> x(d);
        for (auto& v : x) v = norm_rng.gaussian();
        rows.push_back(std::move(x));
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_anom; ++i) {
        std::vector<double> x(d);
        double r2;
        do {
            r2 = 0.0;
            for (auto& v : x) {
                v = -6.0 + 12.0 * anom_rng.uniform();
                r2 += v * v;
            }
        } while (r2 <= 16.0);
        rows.push_back(std::move(x));
        labels.push_back(1);
    }

    Dataset ds = detail::assemble(std::move(rows), std::move(labels), d, shuf_rng);
    ds.name = "blobs";
    ds.provenance = "generator=blobs n=" + std::to_string(n) + " d=" + std::to_string(d) +
                    " anomaly_frac=" + std::to_string(anomaly_frac) +
                    " seed=" + std::to_string(seed);
    return ds;
}

// 2-D ring: normal rows at radius ~ U[0.8, 1.2] with uniform angle. Anomalies
// are half uniform-in-disk (radius <= 0.6, hence inside the ring where every
// per-coordinate marginal looks normal) and half uniform in [-2,2]^2 with the
// annulus radius in [0.7, 1.3] rejected.
inline Dataset gen_ring(std::size_t n, double anomaly_frac, std::uint64_t seed) {
    if (n == 0) throw ContractError("gen_ring: n must be positive");
    if (!(anomaly_frac > 0.0 && anomaly_frac < 0.5)) {
        throw ContractError("gen_ring: anomaly_frac must be in (0, 0.5)");
    }
    const std::size_t n_anom = detail::floor_count(anomaly_frac, n);
    const std::size_t n_norm = n - n_anom;
    const std::size_t n_disk = n_anom / 2;
    const std::size_t n_square = n_anom - n_disk;

    RngStream norm_rng = RngStream::substream(seed, 0);
    RngStream anom_rng = RngStream::substream(seed, 1);
    RngStream shuf_rng = RngStream::substream(seed, 2);
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<std::vector<double>> rows;
    std::vector<std::uint8_t> labels;
    rows.reserve(n);
    labels.reserve(n);
    for (std::size_t i = 0; i < n_norm; ++i) {
        const double r = 0.8 + 0.4 * norm_rng.uniform();
        const double th = two_pi * norm_rng.uniform();
        rows.push_back({r * std::cos(th), r * std::sin(th)});
        labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_disk; ++i) {
        const double r = 0.6 * std::sqrt(anom_rng.uniform());
        const double th = two_pi * anom_rng.uniform();
        rows.push_back({r * std::cos(th), r * std::sin(th)});
        labels.push_back(1);
    }
    for (std::size_t i = 0; i < n_square; ++i) {
        double x, y, r2;
        do {
            x = -2.0 + 4.0 * anom_rng.uniform();
            y = -2.0 + 4.0 * anom_rng.uniform();
            r2 = x * x + y * y;
        } while (r2 >= 0.49 && r2 <= 1.69);
        rows.push_back({x, y});
        labels.push_back(1);
    }

    Dataset ds = detail::assemble(std::move(rows), std::move(labels), 2, shuf_rng);
    ds.name = "ring";
    ds.provenance = "generator=ring n=" + std::to_string(n) +
                    " anomaly_frac=" + std::to_string(anomaly_frac) +
                    " seed=" + std::to_string(seed);
    return ds;
}

// ============================================================================
// CSV
// ============================================================================

// Header f0,...,f{d-1}[,label]; values printed with 17 significant digits so
// doubles survive the round trip.
inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    for (std::size_t j = 0; j < ds.d(); ++j) os << (j ? ",f" : "f") << j;
    if (ds.has_labels()) os << ",label";
    os << "\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
            if (j) os << ",";
            os << buf;
        }
        if (ds.has_labels()) os << "," << static_cast<int>(ds.labels[i]);
        os << "\n";
    }
    if (!os) throw IoError("write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw ParseError("non-numeric cell '" + s + "' at line " + std::to_string(line_no));
    }
    if (!std::isfinite(v)) {
        throw ParseError("non-finite value at line " + std::to_string(line_no));
    }
    return v;
}

} // namespace detail

inline Dataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = detail::split_fields(line);
    bool has_label = false;
    std::size_t d = header.size();
    if (!header.empty() && header.back() == "label") {
        has_label = true;
        d = header.size() - 1;
    }
    if (d == 0) throw ParseError("no feature columns at line 1");
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            throw ParseError("unexpected column '" + header[j] + "' at line 1");
        }
    }

    std::vector<double> data;
    std::vector<std::uint8_t> labels;
    std::size_t n = 0, line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (is.peek() == EOF) break;
            throw ParseError("empty row at line " + std::to_string(line_no));
        }
        const std::vector<std::string> fields = detail::split_fields(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()) + " at line " +
                             std::to_string(line_no));
        }
        for (std::size_t j = 0; j < d; ++j) data.push_back(detail::parse_double(fields[j], line_no));
        if (has_label) {
            const double lv = detail::parse_double(fields[d], line_no);
            if (lv != 0.0 && lv != 1.0) {
                throw ParseError("label must be 0 or 1 at line " + std::to_string(line_no));
            }
            labels.push_back(static_cast<std::uint8_t>(lv));
        }
        ++n;
    }
    if (n == 0) throw ParseError("no data rows in " + path);

    Dataset ds;
    ds.X = Tensor({n, d}, std::move(data));
    ds.labels = std::move(labels);
    ds.name = std::filesystem::path(path).stem().string();
    return ds;
}

// ============================================================================
// ADT1 binary
// ============================================================================

// magic "ADT1", u8 version=1, u8 has_labels, u8 ndim=2, u64 dims, f64 payload
// (little-endian), u8 labels when present, then a length-prefixed UTF-8
// provenance trailer. Round trips are byte-identical.
inline void save_bin(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    io::write_magic(os, "ADT1");
    io::write_u8(os, 1);
    io::write_u8(os, ds.has_labels() ? 1 : 0);
    io::write_u8(os, 2);
    io::write_u64(os, ds.n());
    io::write_u64(os, ds.d());
    for (double v : ds.X.data()) io::write_f64(os, v);
    if (ds.has_labels()) {
        for (std::uint8_t l : ds.labels) io::write_u8(os, l);
    }
    io::write_str(os, ds.provenance);
}

inline Dataset load_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    io::expect_magic(is, "ADT1");
    const std::uint8_t version = io::read_u8(is, "version");
    if (version != 1) throw FormatError("unsupported dataset version " + std::to_string(version));
    const std::uint8_t has_labels = io::read_u8(is, "label flag");
    const std::uint8_t ndim = io::read_u8(is, "rank");
    if (ndim != 2) throw FormatError("dataset tensor must be 2-D");
    const std::uint64_t n = io::read_u64(is, "row count");
    const std::uint64_t d = io::read_u64(is, "column count");
    if (n == 0 || d == 0) throw FormatError("empty dataset dimensions");
    if (n * d > (1ull << 40)) throw FormatError("implausible dataset dimensions");

    Dataset ds;
    std::vector<double> data(n * d);
    for (auto& v : data) v = io::read_f64(is, "features");
    ds.X = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(d)}, std::move(data));
    if (!ds.X.all_finite()) throw FormatError("non-finite feature in " + path);
    if (has_labels) {
        ds.labels.resize(n);
        for (auto& l : ds.labels) {
            l = io::read_u8(is, "labels");
            if (l > 1) throw FormatError("label out of {0,1} in " + path);
        }
    }
    ds.provenance = io::read_str(is, "provenance");
    io::expect_eof(is);
    ds.name = std::filesystem::path(path).stem().string();
    return ds;
}

// ============================================================================
// One-class split
// ============================================================================

struct SplitSpec {
    double train_fraction = 0.5; // fraction of normal rows used for training
    double contamination = 0.0;  // fraction of anomaly rows admitted into training
    std::uint64_t seed = 1;
};

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Training set = sampled normals plus contamination anomalies; everything
// else goes to test. Deterministic per seed; train/test row index sets are
// disjoint by construction and re-checked on every call.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    if (!ds.has_labels()) throw SplitError("split requires labels");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
        throw SplitError("train_fraction must be in (0, 1]");
    }
    if (!(spec.contamination >= 0.0 && spec.contamination <= 0.5)) {
        throw SplitError("contamination must be in [0, 0.5]");
    }

    std::vector<std::size_t> norm_idx, anom_idx;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        (ds.labels[i] == 0 ? norm_idx : anom_idx).push_back(i);
    }
    RngStream norm_rng = RngStream::substream(spec.seed, 0);
    RngStream anom_rng = RngStream::substream(spec.seed, 1);
    norm_rng.shuffle(norm_idx);
    anom_rng.shuffle(anom_idx);

    const std::size_t nt = detail::floor_count(spec.train_fraction, norm_idx.size());
    const std::size_t na = detail::floor_count(spec.contamination, anom_idx.size());
    if (nt == 0) throw SplitError("not enough normal rows for the requested train fraction");

    std::vector<std::size_t> train_idx(norm_idx.begin(), norm_idx.begin() + nt);
    train_idx.insert(train_idx.end(), anom_idx.begin(), anom_idx.begin() + na);
    std::vector<std::size_t> test_idx(norm_idx.begin() + nt, norm_idx.end());
    test_idx.insert(test_idx.end(), anom_idx.begin() + na, anom_idx.end());
    if (test_idx.empty()) throw SplitError("split leaves no test rows");

    std::vector<char> seen(ds.n(), 0);
    for (std::size_t i : train_idx) seen[i] = 1;
    for (std::size_t i : test_idx) {
        if (seen[i]) throw ContractError("split produced overlapping row sets");
        seen[i] = 2;
    }

    auto take = [&](const std::vector<std::size_t>& idx, const char* suffix) {
        Dataset out;
        out.X = Tensor({idx.size(), ds.d()});
        out.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < ds.d(); ++j) out.X(i, j) = ds.X(idx[i], j);
            out.labels[i] = ds.labels[idx[i]];
        }
        out.name = ds.name.empty() ? suffix : ds.name + "-" + suffix;
        out.provenance = ds.provenance;
        return out;
    };
    return SplitResult{take(train_idx, "train"), take(test_idx, "test")};
}

} // namespace diffad
