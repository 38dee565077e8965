#pragma once

// Deterministic artifact writers: CSV time series with a documented header
// row, JSON manifests, coordinate-format operator dumps. All floating-point
// output is printed with %.17g so identical runs are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spingauge/dynamics.hpp"
#include "json.hpp"

namespace spingauge {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
    }

    void header(const std::vector<std::string>& cols) {
        for (size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
        out_ << "\n";
    }

    void row(const std::vector<double>& vals) {
        for (size_t i = 0; i < vals.size(); ++i) out_ << (i ? "," : "") << fmt_double(vals[i]);
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline std::vector<std::string> observable_columns(const ObservableRecord& rec) {
    std::vector<std::string> cols{"time"};
    for (size_t i = 0; i < rec.link_flux.size(); ++i) cols.push_back("flux_link" + std::to_string(i));
    for (size_t i = 0; i < rec.vertex_charge.size(); ++i)
        cols.push_back("charge_v" + std::to_string(i));
    cols.push_back("electric_energy");
    for (size_t i = 0; i < rec.plaquette_flux.size(); ++i)
        cols.push_back("plaquette" + std::to_string(i));
    for (const auto& [name, _] : rec.sector_probabilities) cols.push_back("prob_" + name);
    return cols;
}

inline std::vector<double> observable_values(const ObservableRecord& rec) {
    std::vector<double> v{rec.time};
    v.insert(v.end(), rec.link_flux.begin(), rec.link_flux.end());
    v.insert(v.end(), rec.vertex_charge.begin(), rec.vertex_charge.end());
    v.push_back(rec.electric_energy);
    v.insert(v.end(), rec.plaquette_flux.begin(), rec.plaquette_flux.end());
    for (const auto& [_, p] : rec.sector_probabilities) v.push_back(p);
    return v;
}

inline void write_observable_csv(const std::filesystem::path& path,
                                 const std::vector<ObservableRecord>& series) {
    CsvWriter w(path);
    if (series.empty()) return;
    w.header(observable_columns(series.front()));
    for (const auto& rec : series) w.row(observable_values(rec));
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << j.dump(2) << "\n";
}

/// Coordinate-format text dump (row, col, re, im), column-major entry order,
/// for cross-validation against independent tools.
inline void write_operator_coordinate_text(const std::filesystem::path& path,
                                           const SparseOperator& op) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "# dim " << op.dim() << "\n# basis " << op.basis_tag << "\n";
    for (int k = 0; k < op.mat.outerSize(); ++k)
        for (SpMat::InnerIterator it(op.mat, k); it; ++it)
            out << it.row() << " " << it.col() << " " << fmt_double(it.value().real()) << " "
                << fmt_double(it.value().imag()) << "\n";
}

} // namespace spingauge
