#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/family.hpp"
#include "gplm/profile.hpp"
#include "gplm/simulation.hpp"

namespace gplm::io {

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt3(double v) {
    if (std::isnan(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& column) {
    if (s == "nan") return NAN;
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw ValidationError("line " + std::to_string(line) + ": column '" + column + "' is not a number: '" + s +
                              "'");
    return v;
}

}  // namespace detail

/// Reads a CSV with header y,x1,...,xp,t. Blank lines are skipped.
inline Dataset read_data_csv(std::istream& in, const Family& fam) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!detail::trim(line).empty()) {
            header = detail::split(line);
            break;
        }
    }
    if (header.empty()) throw ValidationError("no observations (empty input)");
    if (header.size() < 3 || header.front() != "y" || header.back() != "t")
        throw ValidationError("header must be y,x1,...,xp,t");
    const std::size_t p = header.size() - 2;
    for (std::size_t j = 0; j < p; ++j)
        if (header[j + 1] != "x" + std::to_string(j + 1))
            throw ValidationError("header column " + std::to_string(j + 2) + " must be x" + std::to_string(j + 1));

    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(line);
        if (cells.size() != header.size())
            throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
        std::vector<double> r(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            r[k] = detail::parse_number(cells[k], lineno, header[k]);
            if (!std::isfinite(r[k]))
                throw ValidationError("line " + std::to_string(lineno) + ": non-finite value in column '" +
                                      header[k] + "'");
        }
        rows.push_back(std::move(r));
        lines.push_back(lineno);
    }
    if (rows.empty()) throw ValidationError("no observations");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Dataset d;
    d.y.resize(n);
    d.x.resize(n, static_cast<Eigen::Index>(p));
    d.t.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        if (!fam.in_support(r[0]))
            throw ValidationError("line " + std::to_string(lines[static_cast<std::size_t>(i)]) + " (row " +
                                  std::to_string(i + 1) + "): response " + fmt(r[0]) + " outside the support of " +
                                  fam.name());
        d.y(i) = r[0];
        for (std::size_t j = 0; j < p; ++j) d.x(i, static_cast<Eigen::Index>(j)) = r[j + 1];
        d.t(i) = r[p + 1];
    }
    d.check_shape();
    return d;
}

inline void write_data_csv(std::ostream& out, const Dataset& d) {
    out << "y";
    for (Eigen::Index j = 0; j < d.p(); ++j) out << ",x" << j + 1;
    out << ",t\n";
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out << fmt(d.y(i));
        for (Eigen::Index j = 0; j < d.p(); ++j) out << ',' << fmt(d.x(i, j));
        out << ',' << fmt(d.t(i)) << '\n';
    }
}

/// FitResult in long form: field,i,j,t,value.
inline void write_fit_csv(std::ostream& out, const FitResult& f) {
    out << "field,i,j,t,value\n";
    out << "loss,,,," << f.loss << '\n';
    out << "kernel,,,," << f.kernel << '\n';
    out << "h,,,," << fmt(f.h) << '\n';
    out << "objective,,,," << fmt(f.objective) << '\n';
    out << "objective_evaluations,,,," << f.objective_evaluations << '\n';
    out << "boundary_local_fits,,,," << f.boundary_local_fits << '\n';
    out << "beta_on_boundary,,,," << (f.beta_on_boundary ? 1 : 0) << '\n';
    for (Eigen::Index j = 0; j < f.beta.size(); ++j) out << "beta," << j + 1 << ",,," << fmt(f.beta(j)) << '\n';
    for (Eigen::Index j = 0; j < f.se.size(); ++j) out << "se," << j + 1 << ",,," << fmt(f.se(j)) << '\n';
    if (f.cov)
        for (Eigen::Index a = 0; a < f.cov->rows(); ++a)
            for (Eigen::Index b = 0; b < f.cov->cols(); ++b)
                out << "cov," << a + 1 << ',' << b + 1 << ",," << fmt((*f.cov)(a, b)) << '\n';
    for (Eigen::Index i = 0; i < f.eta_at.size(); ++i)
        out << "eta," << i + 1 << ",," << fmt(f.t(i)) << ',' << fmt(f.eta_at(i)) << '\n';
    for (const auto& w : f.warnings) {
        std::string clean = w;
        for (char& c : clean)
            if (c == ',' || c == '\n') c = ';';
        out << "warning,,,," << clean << '\n';
    }
}

inline FitResult read_fit_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line) || detail::trim(line) != "field,i,j,t,value")
        throw ValidationError("fit file must start with field,i,j,t,value");
    ++lineno;
    FitResult f;
    std::map<Eigen::Index, double> beta, se, eta, tt;
    std::map<std::pair<Eigen::Index, Eigen::Index>, double> cov;
    auto index = [&](const std::string& s) {
        return static_cast<Eigen::Index>(detail::parse_number(s, lineno, "i")) - 1;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto c = detail::split(line);
        while (c.size() < 5) c.emplace_back();
        const std::string& field = c[0];
        const std::string& v = c[4];
        if (field == "loss") f.loss = v;
        else if (field == "kernel") f.kernel = v;
        else if (field == "h") f.h = detail::parse_number(v, lineno, "value");
        else if (field == "objective") f.objective = detail::parse_number(v, lineno, "value");
        else if (field == "objective_evaluations") f.objective_evaluations = std::stoi(v);
        else if (field == "boundary_local_fits") f.boundary_local_fits = std::stoi(v);
        else if (field == "beta_on_boundary") f.beta_on_boundary = v == "1";
        else if (field == "beta") beta[index(c[1])] = detail::parse_number(v, lineno, "value");
        else if (field == "se") se[index(c[1])] = detail::parse_number(v, lineno, "value");
        else if (field == "cov")
            cov[{index(c[1]), static_cast<Eigen::Index>(detail::parse_number(c[2], lineno, "j")) - 1}] =
                detail::parse_number(v, lineno, "value");
        else if (field == "eta") {
            const Eigen::Index i = index(c[1]);
            tt[i] = detail::parse_number(c[3], lineno, "t");
            eta[i] = detail::parse_number(v, lineno, "value");
        } else if (field == "warning") f.warnings.push_back(v);
        else throw ValidationError("line " + std::to_string(lineno) + ": unknown field '" + field + "'");
    }
    auto to_vec = [](const std::map<Eigen::Index, double>& m) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(m.size()));
        Eigen::Index k = 0;
        for (const auto& [i, x] : m) {
            if (i != k) throw ValidationError("fit file has a gap in its indices");
            v(k++) = x;
        }
        return v;
    };
    f.beta = to_vec(beta);
    f.se = to_vec(se);
    f.eta_at = to_vec(eta);
    f.t = to_vec(tt);
    if (!cov.empty()) {
        const Eigen::Index p = f.beta.size();
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
        for (const auto& [ij, x] : cov) {
            if (ij.first < 0 || ij.first >= p || ij.second < 0 || ij.second >= p)
                throw ValidationError("covariance index out of range");
            C(ij.first, ij.second) = x;
        }
        f.cov = C;
    }
    return f;
}

inline std::string study_label(const StudySpec& s) { return std::to_string(static_cast<int>(s.study)); }

/// Per-replication records: study,contamination,estimator,h,rep,beta_hat,mse_eta.
inline void write_raw_csv(std::ostream& out, const McSummary& mc) {
    out << "study,contamination,estimator,h,rep,beta_hat,mse_eta\n";
    const std::string cont = contamination_name(mc.study.contamination, mc.study.k_outliers);
    for (const auto& r : mc.records)
        out << study_label(mc.study) << ',' << cont << ',' << r.estimator << ',' << fmt(r.h) << ',' << r.rep << ','
            << (r.ok ? fmt(r.beta_hat) : "nan") << ',' << (r.ok ? fmt(r.mse_eta) : "nan") << '\n';
}

/// Summary rows: bias, SD, MSE(beta_hat), MSE(eta_hat) per estimator and h.
inline void write_summary_csv(std::ostream& out, const McSummary& mc) {
    out << "study,contamination,estimator,h,replications,failures,bias,sd,mse_beta,mse_eta\n";
    const std::string cont = contamination_name(mc.study.contamination, mc.study.k_outliers);
    for (const auto& r : mc.rows)
        out << study_label(mc.study) << ',' << cont << ',' << r.estimator << ',' << fmt(r.h) << ',' << r.replications
            << ',' << r.failures << ',' << fmt(r.bias) << ',' << fmt(r.sd) << ',' << fmt(r.mse_beta) << ','
            << fmt(r.mse_eta) << '\n';
}

inline void print_summary(std::ostream& out, const McSummary& mc) {
    out << "study " << study_label(mc.study) << ", contamination "
        << contamination_name(mc.study.contamination, mc.study.k_outliers) << "\n";
    out << "estimator      bias      SD     MSE(b)  MSE(eta)  fails\n";
    for (const auto& r : mc.rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-9s %8s %7s %8s %9s %6d\n",
                      (r.estimator + "(" + fmt3(r.h).substr(0, 4) + ")").c_str(), fmt3(r.bias).c_str(),
                      fmt3(r.sd).c_str(), fmt3(r.mse_beta).c_str(), fmt3(r.mse_eta).c_str(), r.failures);
        out << buf;
    }
}

}  // namespace gplm::io
