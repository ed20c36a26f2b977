#pragma once

// Dataset CSV files (header x1..xd,y), their JSON metadata sidecar and the
// fitted-model JSON format.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "kernel.hpp"
#include "penalty.hpp"
#include "solvers.hpp"

namespace lqreg::io {

using nlohmann::json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
            cell.pop_back();
        }
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') {
            ++start;
        }
        out.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw InputError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
    }
    return v;
}

} // namespace detail

/// Raw table read from a dataset CSV: inputs and, when a y column exists, outputs.
struct CsvTable {
    Points X;
    std::optional<Vector> y;
};

/// Reads a CSV with columns x1..xd and optionally y (any column order).
inline CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw InputError("'" + path.string() + "' is empty");
    }
    const auto header = detail::split_csv_line(line);
    std::vector<int> x_col;
    int y_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name == "y") {
            y_col = static_cast<int>(c);
        } else if (name.size() > 1 && name[0] == 'x') {
            int k = 0;
            auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
            if (ec != std::errc() || ptr != name.data() + name.size() || k < 1) {
                throw InputError("unexpected column '" + name + "'");
            }
            if (static_cast<std::size_t>(k) > x_col.size()) {
                x_col.resize(static_cast<std::size_t>(k), -1);
            }
            x_col[static_cast<std::size_t>(k - 1)] = static_cast<int>(c);
        } else {
            throw InputError("unexpected column '" + name + "'");
        }
    }
    if (x_col.empty()) {
        throw InputError("'" + path.string() + "' has no x1..xd columns");
    }
    for (std::size_t k = 0; k < x_col.size(); ++k) {
        if (x_col[k] < 0) {
            throw InputError("missing column x" + std::to_string(k + 1));
        }
    }

    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        for (int c : x_col) {
            row.push_back(detail::parse_double(cells[static_cast<std::size_t>(c)], line_no));
        }
        rows.push_back(std::move(row));
        if (y_col >= 0) {
            ys.push_back(detail::parse_double(cells[static_cast<std::size_t>(y_col)], line_no));
        }
    }
    CsvTable table;
    table.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(x_col.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < x_col.size(); ++k) {
            table.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
    }
    if (y_col >= 0) {
        table.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    }
    return table;
}

/// Metadata sidecar: "data.csv" -> "data.meta.json".
inline std::filesystem::path metadata_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".meta.json");
    return p;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("'" + path.string() + "': " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw InputError("write to '" + path.string() + "' failed");
    }
}

/// Reads a dataset. M comes from the argument if given, else from the metadata sidecar.
inline Dataset read_dataset(const std::filesystem::path& csv, std::optional<double> M, bool check_domain = true) {
    auto table = read_csv_table(csv);
    if (!table.y) {
        throw InputError("'" + csv.string() + "' has no y column");
    }
    if (!M) {
        const auto meta_file = metadata_path(csv);
        if (!std::filesystem::exists(meta_file)) {
            throw InputError("output bound M not given and no metadata file '" + meta_file.string() + "'");
        }
        const auto meta = read_json_file(meta_file);
        if (!meta.contains("M")) {
            throw InputError("metadata '" + meta_file.string() + "' has no M field");
        }
        M = meta.at("M").get<double>();
        if (meta.contains("d") && meta.at("d").get<int>() != table.X.cols()) {
            throw InputError("metadata dimension d disagrees with the CSV columns");
        }
    }
    Dataset data{std::move(table.X), std::move(*table.y), *M};
    data.validate(check_domain);
    return data;
}

inline std::string format_double(double v) {
    // Shortest representation that round-trips.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string dataset_csv(const Dataset& data) {
    std::string out;
    for (Eigen::Index k = 0; k < data.X.cols(); ++k) {
        out += "x" + std::to_string(k + 1) + ",";
    }
    out += "y\n";
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
        for (Eigen::Index k = 0; k < data.X.cols(); ++k) {
            out += format_double(data.X(i, k)) + ",";
        }
        out += format_double(data.y[i]) + "\n";
    }
    return out;
}

/// Writes the CSV and its metadata sidecar; extra fields are merged into the metadata.
inline void write_dataset(const std::filesystem::path& csv, const Dataset& data, const json& extra = json::object()) {
    write_text_file(csv, dataset_csv(data));
    json meta = extra;
    meta["M"] = data.M;
    meta["d"] = data.dim();
    meta["m"] = data.size();
    write_text_file(metadata_path(csv), meta.dump(2) + "\n");
}

/// Fitted model plus the penalty and solver metadata it came from.
struct ModelFile {
    CoefficientModel model;
    double q;
    double lambda;
    double M;
    json solver;
};

inline json model_to_json(const ModelFile& mf) {
    json centers = json::array();
    for (Eigen::Index i = 0; i < mf.model.centers.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < mf.model.centers.cols(); ++k) {
            row.push_back(mf.model.centers(i, k));
        }
        centers.push_back(std::move(row));
    }
    json coeffs = json::array();
    for (Eigen::Index i = 0; i < mf.model.coeffs.size(); ++i) {
        coeffs.push_back(mf.model.coeffs[i]);
    }
    return json{{"sigma", mf.model.params.sigma}, {"centers", std::move(centers)}, {"coeffs", std::move(coeffs)},
                {"q", mf.q}, {"lambda", mf.lambda}, {"M", mf.M}, {"solver", mf.solver}};
}

inline json solver_metadata(const FitResult& fit) {
    json j{{"method", std::string(to_string(fit.method))},
           {"iterations", fit.iterations},
           {"converged", fit.converged},
           {"optimality", std::string(to_string(fit.optimality))},
           {"final_objective", fit.objective_trace.empty() ? json(nullptr) : json(fit.objective_trace.back())}};
    j["kkt_residual"] = fit.kkt_residual ? json(*fit.kkt_residual) : json(nullptr);
    return j;
}

inline ModelFile model_from_json(const json& j) {
    try {
        const auto& centers = j.at("centers");
        const auto& coeffs = j.at("coeffs");
        const auto m = static_cast<Eigen::Index>(centers.size());
        const auto d = m > 0 ? static_cast<Eigen::Index>(centers.at(0).size()) : 0;
        Points C(m, d);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& row = centers.at(static_cast<std::size_t>(i));
            if (static_cast<Eigen::Index>(row.size()) != d) {
                throw InputError("model centers have inconsistent dimensions");
            }
            for (Eigen::Index k = 0; k < d; ++k) {
                C(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
            }
        }
        Vector a(static_cast<Eigen::Index>(coeffs.size()));
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a[i] = coeffs.at(static_cast<std::size_t>(i)).get<double>();
        }
        return ModelFile{CoefficientModel(KernelParams(j.at("sigma").get<double>()), std::move(C), std::move(a)),
                         j.at("q").get<double>(), j.at("lambda").get<double>(), j.value("M", 1.0),
                         j.value("solver", json::object())};
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed model file: ") + e.what());
    }
}

} // namespace lqreg::io
