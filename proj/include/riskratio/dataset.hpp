#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "riskratio/core.hpp"
#include "riskratio/internal_variability.hpp"

namespace riskratio {

enum class Scenario { factual, counterfactual };

inline const char* scenario_name(Scenario s) {
    return s == Scenario::factual ? "factual" : "counterfactual";
}

// One ensemble member value. `year` is present only for multi-year series;
// single-period ensembles omit the column entirely.
struct IngestRecord {
    Scenario scenario = Scenario::factual;
    std::optional<int> year;
    int member = 0;
    double value = 0.0;

    bool operator==(const IngestRecord&) const = default;
};

// Parsed input file: the records in file order, plus whether the optional
// year column was present (it must then be populated on every row).
struct Dataset {
    bool has_years = false;
    std::vector<IngestRecord> records;

    bool operator==(const Dataset&) const = default;
};

namespace data_detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline int parse_int(const std::string& tok, const std::string& what, int line_no) {
    if (tok.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": empty " + what);
    }
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": " + what +
                         " is not an integer: " + tok);
    }
    return static_cast<int>(v);
}

inline double parse_value(const std::string& tok, int line_no) {
    if (tok.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": empty value");
    }
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": value is not a number: " + tok);
    }
    if (!std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": values must be finite");
    }
    return v;
}

} // namespace data_detail

// Read a header-bearing comma-separated file with columns scenario, year
// (optional), member, value in any column order. (scenario, year, member)
// must be unique and values finite.
inline Dataset parse_dataset(std::istream& in) {
    std::string line;
    int line_no = 0;
    // Header.
    if (!std::getline(in, line)) throw ParseError("empty input: missing header line");
    ++line_no;
    const auto names = data_detail::split_fields(line);
    int col_scenario = -1, col_year = -1, col_member = -1, col_value = -1;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const int idx = static_cast<int>(i);
        if (names[i] == "scenario") {
            col_scenario = idx;
        } else if (names[i] == "year") {
            col_year = idx;
        } else if (names[i] == "member") {
            col_member = idx;
        } else if (names[i] == "value") {
            col_value = idx;
        } else {
            throw ParseError("unrecognized column: " + names[i]);
        }
    }
    if (col_scenario < 0 || col_member < 0 || col_value < 0) {
        throw ParseError("missing required column: need scenario, member, value"
                         " (year optional)");
    }
    const std::size_t n_cols = names.size();

    Dataset out;
    out.has_years = col_year >= 0;
    std::set<std::tuple<int, int, int>> seen; // (scenario, year-or-min, member)
    while (std::getline(in, line)) {
        ++line_no;
        if (data_detail::trim(line).empty()) continue;
        const auto fields = data_detail::split_fields(line);
        if (fields.size() != n_cols) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(n_cols) + " fields, got " +
                             std::to_string(fields.size()));
        }
        IngestRecord rec;
        const std::string& sc = fields[static_cast<std::size_t>(col_scenario)];
        if (sc == "factual") {
            rec.scenario = Scenario::factual;
        } else if (sc == "counterfactual") {
            rec.scenario = Scenario::counterfactual;
        } else {
            throw ParseError("line " + std::to_string(line_no) +
                             ": scenario must be factual or counterfactual, got " + sc);
        }
        if (out.has_years) {
            rec.year = data_detail::parse_int(fields[static_cast<std::size_t>(col_year)],
                                              "year", line_no);
        }
        rec.member = data_detail::parse_int(fields[static_cast<std::size_t>(col_member)],
                                            "member", line_no);
        rec.value = data_detail::parse_value(fields[static_cast<std::size_t>(col_value)],
                                             line_no);
        const auto key = std::make_tuple(static_cast<int>(rec.scenario),
                                         rec.year.value_or(std::numeric_limits<int>::min()),
                                         rec.member);
        if (!seen.insert(key).second) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": duplicate (scenario, year, member) record");
        }
        out.records.push_back(rec);
    }
    if (out.records.empty()) throw ParseError("input has a header but no records");
    return out;
}

// Write the canonical column order; %.17g keeps values bit-exact through a
// parse round trip.
inline void serialize_dataset(const Dataset& data, std::ostream& out) {
    out << (data.has_years ? "scenario,year,member,value\n" : "scenario,member,value\n");
    char buf[40];
    for (const auto& rec : data.records) {
        out << scenario_name(rec.scenario) << ',';
        if (data.has_years) out << rec.year.value() << ',';
        std::snprintf(buf, sizeof buf, "%.17g", rec.value);
        out << rec.member << ',' << buf << '\n';
    }
    if (!out) throw std::runtime_error("dataset write failed");
}

// All of one scenario's values, in file order.
inline RawSample scenario_sample(const Dataset& data, Scenario which) {
    std::vector<double> values;
    for (const auto& rec : data.records) {
        if (rec.scenario == which) values.push_back(rec.value);
    }
    if (values.empty()) {
        throw std::invalid_argument(std::string("no records for scenario ") +
                                    scenario_name(which));
    }
    return RawSample(std::move(values));
}

// One scenario rearranged as a year-by-member series: years ascending,
// members ascending within a year, and every year must carry the same
// number of members.
inline EnsembleSeries scenario_series(const Dataset& data, Scenario which) {
    if (!data.has_years) {
        throw std::invalid_argument("the input has no year column; a multi-year series "
                                    "needs one");
    }
    std::map<int, std::vector<std::pair<int, double>>> by_year;
    for (const auto& rec : data.records) {
        if (rec.scenario == which) {
            by_year[rec.year.value()].emplace_back(rec.member, rec.value);
        }
    }
    if (by_year.empty()) {
        throw std::invalid_argument(std::string("no records for scenario ") +
                                    scenario_name(which));
    }
    std::vector<int> years;
    std::vector<std::vector<double>> values;
    std::size_t n_w = by_year.begin()->second.size();
    for (auto& [year, members] : by_year) {
        if (members.size() != n_w) {
            throw std::invalid_argument(
                "scenario " + std::string(scenario_name(which)) + " has " +
                std::to_string(members.size()) + " members in year " + std::to_string(year) +
                " but " + std::to_string(n_w) + " elsewhere");
        }
        std::sort(members.begin(), members.end());
        years.push_back(year);
        std::vector<double> row;
        row.reserve(n_w);
        for (const auto& [member, value] : members) row.push_back(value);
        values.push_back(std::move(row));
    }
    return EnsembleSeries(std::move(years), static_cast<int>(n_w), std::move(values));
}

// Anomaly preprocessing relative to an explicit reference: subtract the
// reference mean (absolute anomalies) or divide by it (relative anomalies).
enum class AnomalyMode { subtract, divide };

inline double dataset_mean(const Dataset& data) {
    double sum = 0.0;
    for (const auto& rec : data.records) sum += rec.value;
    return sum / static_cast<double>(data.records.size());
}

inline void apply_anomaly(Dataset& data, AnomalyMode mode, double reference_mean) {
    if (!std::isfinite(reference_mean)) {
        throw std::domain_error("anomaly reference mean must be finite");
    }
    if (mode == AnomalyMode::divide && reference_mean == 0.0) {
        throw std::domain_error("cannot take relative anomalies against a zero mean");
    }
    for (auto& rec : data.records) {
        rec.value = mode == AnomalyMode::subtract ? rec.value - reference_mean
                                                  : rec.value / reference_mean;
    }
}

} // namespace riskratio
