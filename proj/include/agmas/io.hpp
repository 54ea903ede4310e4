// File formats: MatrixMarket (array + coordinate) for dense symmetric
// matrices, single-column CSV vectors, sample-per-row CSV datasets and flat
// key=value records (configs, certificates, manifests). All floats are 64-bit
// and printed with 17 significant digits.
#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "agmas/core.hpp"
#include "agmas/dense.hpp"

namespace agmas {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// MatrixMarket
// ---------------------------------------------------------------------------

inline void write_matrix_market(const std::string& path, const DenseMatrix& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "%%MatrixMarket matrix array real symmetric\n";
    out << m.n << " " << m.n << "\n";
    // column-major lower triangle, per the array-format convention
    for (std::size_t j = 0; j < m.n; ++j)
        for (std::size_t i = j; i < m.n; ++i) out << format_double(m(i, j)) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline DenseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string banner, object, fmt, field, symmetry;
    hs >> banner >> object >> fmt >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix")
        throw IoError("not a MatrixMarket file: " + path);
    if (field != "real") throw IoError("only real matrices supported: " + path);
    const bool symmetric = symmetry == "symmetric";
    if (!symmetric && symmetry != "general")
        throw IoError("unsupported symmetry '" + symmetry + "': " + path);

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream sz(line);

    if (fmt == "array") {
        std::size_t rows = 0, cols = 0;
        sz >> rows >> cols;
        if (rows != cols || rows == 0) throw IoError("square matrix expected: " + path);
        DenseMatrix m(rows);
        if (symmetric) {
            for (std::size_t j = 0; j < cols; ++j)
                for (std::size_t i = j; i < rows; ++i) {
                    double v;
                    if (!(in >> v)) throw IoError("truncated array data: " + path);
                    m(i, j) = v;
                    m(j, i) = v;
                }
        } else {
            for (std::size_t j = 0; j < cols; ++j)
                for (std::size_t i = 0; i < rows; ++i) {
                    double v;
                    if (!(in >> v)) throw IoError("truncated array data: " + path);
                    m(i, j) = v;
                }
        }
        return m;
    }
    if (fmt == "coordinate") {
        std::size_t rows = 0, cols = 0, nnz = 0;
        sz >> rows >> cols >> nnz;
        if (rows != cols || rows == 0) throw IoError("square matrix expected: " + path);
        DenseMatrix m(rows);
        for (std::size_t k = 0; k < nnz; ++k) {
            std::size_t i, j;
            double v;
            if (!(in >> i >> j >> v)) throw IoError("truncated coordinate data: " + path);
            if (i < 1 || j < 1 || i > rows || j > cols)
                throw IoError("coordinate out of range: " + path);
            m(i - 1, j - 1) = v;
            if (symmetric) m(j - 1, i - 1) = v;
        }
        return m;
    }
    throw IoError("unsupported MatrixMarket format '" + fmt + "': " + path);
}

// ---------------------------------------------------------------------------
// CSV vectors and datasets
// ---------------------------------------------------------------------------

inline void write_vector_csv(const std::string& path, const Vec& v) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (double x : v) out << format_double(x) << "\n";
}

inline Vec read_vector_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    Vec v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.push_back(std::stod(line));
    }
    return v;
}

// One sample per row, comma separated, last column is the target.
inline void write_table_csv(const std::string& path, const std::vector<Vec>& rows,
                            const Vec& targets) {
    if (rows.size() != targets.size()) throw ContractError("write_table_csv: size mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (double x : rows[i]) out << format_double(x) << ",";
        out << format_double(targets[i]) << "\n";
    }
}

inline void read_table_csv(const std::string& path, std::vector<Vec>& rows, Vec& targets) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    rows.clear();
    targets.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Vec fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(std::stod(cell));
        if (fields.size() < 2) throw IoError("row with fewer than 2 columns: " + path);
        targets.push_back(fields.back());
        fields.pop_back();
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw IoError("empty table: " + path);
    for (const Vec& r : rows)
        if (r.size() != rows.front().size()) throw IoError("ragged rows: " + path);
}

// ---------------------------------------------------------------------------
// key=value records
// ---------------------------------------------------------------------------

struct KvRecord {
    // insertion-ordered
    std::vector<std::pair<std::string, std::string>> items;

    void set(const std::string& key, const std::string& value) {
        for (auto& kv : items)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        items.emplace_back(key, value);
    }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

    bool has(const std::string& key) const {
        for (const auto& kv : items)
            if (kv.first == key) return true;
        return false;
    }
    const std::string& get(const std::string& key) const {
        for (const auto& kv : items)
            if (kv.first == key) return kv.second;
        throw IoError("missing key: " + key);
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        for (const auto& kv : items)
            if (kv.first == key) return kv.second;
        return fallback;
    }
    double get_double(const std::string& key) const { return std::stod(get(key)); }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    long long get_int(const std::string& key) const { return std::stoll(get(key)); }
    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
};

inline void write_kv(const std::string& path, const KvRecord& rec) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& kv : rec.items) out << kv.first << "=" << kv.second << "\n";
}

inline KvRecord parse_kv_text(const std::string& text) {
    KvRecord rec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        // strip comments and whitespace
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::size_t a = 0, b = line.size();
        while (a < b && std::isspace(static_cast<unsigned char>(line[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(line[b - 1]))) --b;
        line = line.substr(a, b - a);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed key=value line: " + line);
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        std::size_t v = 0;
        while (v < value.size() && std::isspace(static_cast<unsigned char>(value[v]))) ++v;
        rec.set(key, value.substr(v));
    }
    return rec;
}

inline KvRecord read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_kv_text(buf.str());
}

}  // namespace agmas
