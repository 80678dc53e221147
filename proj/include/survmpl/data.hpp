#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace survmpl {

enum class CensorKind { Event, Left, Right, Interval };

inline const char* censor_kind_name(CensorKind k) {
    switch (k) {
        case CensorKind::Event: return "event";
        case CensorKind::Left: return "left";
        case CensorKind::Right: return "right";
        case CensorKind::Interval: return "interval";
    }
    return "?";
}

// One subject: the observed time window [t_left, t_right] plus covariates.
//   Event:    t_left == t_right, finite and > 0
//   Left:     t_left == 0, t_right finite          (failure before t_right)
//   Right:    t_right == +inf, t_left finite       (failure after t_left)
//   Interval: 0 < t_left < t_right < +inf
struct Observation {
    double t_left = 0.0;
    double t_right = 0.0;
    CensorKind kind = CensorKind::Event;
    Eigen::VectorXd covariates;
};

// Classify a raw (t_left, t_right) pair. Endpoints equal within relative
// tolerance 1e-12 are treated as an event time (floating-point ingestion).
inline CensorKind classify_censoring(double t_left, double t_right) {
    const double inf = std::numeric_limits<double>::infinity();
    if (std::isnan(t_left) || std::isnan(t_right))
        throw std::invalid_argument("classify_censoring: NaN endpoint");
    if (t_left < 0.0)
        throw std::invalid_argument("classify_censoring: negative left endpoint");
    if (t_left == inf)
        throw std::invalid_argument("classify_censoring: infinite left endpoint");
    const bool tie = std::isfinite(t_right) &&
                     std::abs(t_right - t_left) <= 1e-12 * std::max(std::abs(t_left), std::abs(t_right));
    if (!tie && t_right < t_left)
        throw std::invalid_argument("classify_censoring: t_right < t_left");
    if (tie) {
        if (t_left <= 0.0)
            throw std::invalid_argument("classify_censoring: event time must be positive");
        return CensorKind::Event;
    }
    if (t_right == inf) return CensorKind::Right;
    if (t_left == 0.0) return CensorKind::Left;
    return CensorKind::Interval;
}

// Immutable collection of observations sharing a covariate layout. Safe to
// share read-only across threads once constructed.
class Dataset {
public:
    Dataset(std::vector<Observation> observations, std::vector<std::string> covariate_names = {})
        : obs_(std::move(observations)), names_(std::move(covariate_names)) {
        if (obs_.empty()) throw std::invalid_argument("Dataset: no observations");
        p_ = static_cast<std::size_t>(obs_.front().covariates.size());
        bool any_non_right = false;
        for (std::size_t i = 0; i < obs_.size(); ++i) {
            const auto& o = obs_[i];
            if (static_cast<std::size_t>(o.covariates.size()) != p_)
                throw std::invalid_argument("Dataset: covariate length mismatch at row " + std::to_string(i + 1));
            // re-derive the kind so invariants cannot be bypassed by construction
            CensorKind k = classify_censoring(o.t_left, o.t_right);
            if (k != o.kind)
                throw std::invalid_argument("Dataset: censoring kind inconsistent with endpoints at row " +
                                            std::to_string(i + 1));
            if (o.kind != CensorKind::Right) any_non_right = true;
        }
        if (!any_non_right)
            throw std::invalid_argument("Dataset: all observations right-censored; hazard unidentifiable");
        if (names_.empty()) {
            names_.reserve(p_);
            for (std::size_t j = 0; j < p_; ++j) names_.push_back("x" + std::to_string(j + 1));
        } else if (names_.size() != p_) {
            throw std::invalid_argument("Dataset: covariate_names length mismatch");
        }
    }

    std::size_t n() const { return obs_.size(); }
    std::size_t p() const { return p_; }
    const std::vector<Observation>& observations() const { return obs_; }
    const Observation& operator[](std::size_t i) const { return obs_[i]; }
    const std::vector<std::string>& covariate_names() const { return names_; }

private:
    std::vector<Observation> obs_;
    std::vector<std::string> names_;
    std::size_t p_ = 0;
};

// All strictly positive finite endpoints, sorted, duplicates kept (an event
// time counts once). This is the pool knots and bandwidths are anchored on;
// the artificial 0 of left censoring and the +inf of right censoring carry
// no information about where the hazard needs resolution.
inline std::vector<double> endpoint_pool(const Dataset& data) {
    std::vector<double> pool;
    pool.reserve(2 * data.n());
    for (const auto& o : data.observations()) {
        switch (o.kind) {
            case CensorKind::Event: pool.push_back(o.t_left); break;
            case CensorKind::Left:
                if (o.t_right > 0.0) pool.push_back(o.t_right);
                break;
            case CensorKind::Right:
                if (o.t_left > 0.0) pool.push_back(o.t_left);
                break;
            case CensorKind::Interval:
                if (o.t_left > 0.0) pool.push_back(o.t_left);
                pool.push_back(o.t_right);
                break;
        }
    }
    std::sort(pool.begin(), pool.end());
    if (pool.empty()) throw std::invalid_argument("endpoint_pool: no positive finite endpoints");
    return pool;
}

// (a, b) = range of strictly positive finite observed endpoints.
inline std::pair<double, double> time_support(const Dataset& data) {
    auto pool = endpoint_pool(data);
    return {pool.front(), pool.back()};
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_time_cell(const std::string& raw, bool allow_inf, std::size_t row) {
    std::string s = trim(raw);
    if (allow_inf && (s.empty() || s == "inf" || s == "Inf" || s == "INF"))
        return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("load_dataset: malformed numeric cell '" + s + "' at data row " +
                                    std::to_string(row));
    }
}

inline double parse_num_cell(const std::string& raw, std::size_t row) {
    return parse_time_cell(raw, false, row);
}

} // namespace detail

// Column mapping for delimited text input. If covariate_cols is empty, every
// column other than the two time columns is taken as a covariate, in file
// order.
struct DataSchema {
    std::string t_left_col = "t_left";
    std::string t_right_col = "t_right";
    std::vector<std::string> covariate_cols;
};

// Read a delimited (comma or tab, auto-detected from the header) text stream
// with a header row. "inf"/"Inf"/"INF" or an empty right-endpoint cell encode
// +infinity. Row order is preserved.
inline Dataset load_dataset(std::istream& in, const DataSchema& schema = {}) {
    std::string header;
    if (!std::getline(in, header)) throw std::invalid_argument("load_dataset: empty input");
    const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
    auto cols = detail::split_line(header, delim);
    for (auto& c : cols) c = detail::trim(c);

    auto find_col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(cols.begin(), cols.end(), name);
        if (it == cols.end())
            throw std::invalid_argument("load_dataset: missing column '" + name + "'");
        return static_cast<std::size_t>(it - cols.begin());
    };

    const std::size_t il = find_col(schema.t_left_col);
    const std::size_t ir = find_col(schema.t_right_col);
    std::vector<std::size_t> icov;
    std::vector<std::string> names;
    if (schema.covariate_cols.empty()) {
        for (std::size_t j = 0; j < cols.size(); ++j)
            if (j != il && j != ir) {
                icov.push_back(j);
                names.push_back(cols[j]);
            }
    } else {
        for (const auto& name : schema.covariate_cols) {
            icov.push_back(find_col(name));
            names.push_back(name);
        }
    }

    std::vector<Observation> obs;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        auto cells = detail::split_line(line, delim);
        if (cells.size() != cols.size())
            throw std::invalid_argument("load_dataset: wrong cell count at data row " + std::to_string(row));
        Observation o;
        o.t_left = detail::parse_time_cell(cells[il], false, row);
        o.t_right = detail::parse_time_cell(cells[ir], true, row);
        try {
            o.kind = classify_censoring(o.t_left, o.t_right);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " at data row " + std::to_string(row));
        }
        if (o.kind == CensorKind::Event) o.t_right = o.t_left; // collapse tolerated ties exactly
        o.covariates.resize(static_cast<Eigen::Index>(icov.size()));
        for (std::size_t j = 0; j < icov.size(); ++j)
            o.covariates[static_cast<Eigen::Index>(j)] = detail::parse_num_cell(cells[icov[j]], row);
        obs.push_back(std::move(o));
    }
    if (obs.empty()) throw std::invalid_argument("load_dataset: zero usable rows");
    return Dataset(std::move(obs), std::move(names));
}

// Write a dataset back out as CSV; load_dataset(serialize(d)) == d.
inline void serialize(const Dataset& data, std::ostream& out) {
    out << "t_left,t_right";
    for (const auto& name : data.covariate_names()) out << ',' << name;
    out << '\n';
    out.precision(17);
    for (const auto& o : data.observations()) {
        out << o.t_left << ',';
        if (o.kind == CensorKind::Right)
            out << "inf";
        else
            out << o.t_right;
        for (Eigen::Index j = 0; j < o.covariates.size(); ++j) out << ',' << o.covariates[j];
        out << '\n';
    }
}

} // namespace survmpl
