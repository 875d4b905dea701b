#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/family.hpp"
#include "gplm/inference.hpp"
#include "gplm/kernel.hpp"
#include "gplm/loss.hpp"
#include "gplm/profile.hpp"
#include "gplm/rng.hpp"
#include "gplm/scores.hpp"

namespace gplm {

enum class Study { S1 = 1, S2 = 2, S3 = 3 };
enum class Contamination { None, S2Outliers, C1, C2, C3 };

inline std::string contamination_name(Contamination c, int k = 0) {
    switch (c) {
        case Contamination::None: return "none";
        case Contamination::S2Outliers: return "outliers" + std::to_string(k);
        case Contamination::C1: return "C1";
        case Contamination::C2: return "C2";
        case Contamination::C3: return "C3";
    }
    return "";
}

struct StudySpec {
    Study study = Study::S1;
    int n = 100;
    Contamination contamination = Contamination::None;
    int k_outliers = 0;
    std::uint64_t seed = 1;
    double study2_t_variance = 1.0 / 6.0;

    void validate() const {
        if (n < 1) throw DomainError("sample size must be positive");
        switch (contamination) {
            case Contamination::None: break;
            case Contamination::S2Outliers:
                if (study != Study::S2) throw DomainError("outlier replacement applies to study 2 only");
                if (k_outliers < 0 || k_outliers > 3) throw DomainError("study 2 takes 0 to 3 outliers");
                if (n < k_outliers) throw DomainError("sample smaller than the number of outliers");
                break;
            case Contamination::C1:
            case Contamination::C2:
            case Contamination::C3:
                if (study != Study::S3) throw DomainError("contaminations C1-C3 apply to study 3 only");
                break;
        }
        if (!(study2_t_variance > 0.0)) throw DomainError("study 2 t variance must be positive");
    }
};

namespace detail {
inline double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }
// Substream ids: base draw and contamination draws are independent, so the
// clean and contaminated versions of a replication share the base sample.
constexpr std::uint64_t kBaseStream = 0;
constexpr std::uint64_t kContaminationStream = 1;
}  // namespace detail

/// Study 1: x ~ U(-1, 1), t uniform on {0.1, ..., 1.0},
/// y ~ Bi(10, H(3x + exp(2t) - 4)).
inline Dataset gen_study1(int n, std::uint64_t seed) {
    if (n < 1) throw DomainError("sample size must be positive");
    rng::Stream rs = rng::Stream(seed, 1).substream(detail::kBaseStream);
    Dataset d;
    d.y.resize(n);
    d.x.resize(n, 1);
    d.t.resize(n);
    Truth tr{Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        const double x = rs.uniform(-1.0, 1.0);
        const double t = 0.1 * static_cast<double>(1 + rs.below(10));
        const double eta = std::exp(2.0 * t) - 4.0;
        d.x(i, 0) = x;
        d.t(i) = t;
        d.y(i) = rs.binomial(10, detail::expit(3.0 * x + eta));
        tr.eta(i) = eta;
    }
    d.truth = std::move(tr);
    return d;
}

/// Study 2: x ~ N(0, 1), t ~ N(1/2, t_variance), y ~ Bi(10, H(2x + 0.2)); the
/// first k rows are then replaced by (x, y) = (10, 0), (-10, 10), (-10, 10)
/// with t kept.
inline Dataset gen_study2(int n, std::uint64_t seed, int k_outliers = 0, double t_variance = 1.0 / 6.0) {
    StudySpec spec{Study::S2, n, k_outliers > 0 ? Contamination::S2Outliers : Contamination::None, k_outliers, seed,
                   t_variance};
    spec.validate();
    rng::Stream rs = rng::Stream(seed, 2).substream(detail::kBaseStream);
    Dataset d;
    d.y.resize(n);
    d.x.resize(n, 1);
    d.t.resize(n);
    const double sd_t = std::sqrt(t_variance);
    for (int i = 0; i < n; ++i) {
        const double x = rs.normal();
        const double t = rs.normal(0.5, sd_t);
        d.x(i, 0) = x;
        d.t(i) = t;
        d.y(i) = rs.binomial(10, detail::expit(2.0 * x + 0.2));
    }
    static constexpr double out_x[3] = {10.0, -10.0, -10.0};
    static constexpr double out_y[3] = {0.0, 10.0, 10.0};
    for (int i = 0; i < k_outliers; ++i) {
        d.x(i, 0) = out_x[i];
        d.y(i) = out_y[i];
    }
    d.truth = Truth{Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(n, 0.2)};
    return d;
}

/// Study-3 regression function 2 sin(4 pi t).
inline double study3_eta(double t) { return 2.0 * std::sin(4.0 * std::numbers::pi * t); }

/// Study 3: (x, t) bivariate normal with means (0, 1/2), sd (1, 1/6),
/// correlation 1/sqrt(3), truncated to t in [1/4, 3/4] by rejection;
/// y = 1 iff 2x + 2 sin(4 pi t) + e >= 0 with e standard logistic. The
/// contaminations act on this base draw. `regenerations`, when given,
/// receives the number of redraws needed for C2.
inline Dataset gen_study3(int n, std::uint64_t seed, Contamination c = Contamination::None,
                          int* regenerations = nullptr) {
    StudySpec spec{Study::S3, n, c, 0, seed, 1.0 / 6.0};
    spec.validate();
    const double rho = 1.0 / std::sqrt(3.0);
    const double sd_t = 1.0 / 6.0;
    for (std::uint64_t attempt = 0;; ++attempt) {
        rng::Stream root(seed, 3);
        rng::Stream rs = root.substream(detail::kBaseStream + 2 * attempt);
        rng::Stream cs = root.substream(detail::kContaminationStream + 2 * attempt);
        Dataset d;
        d.y.resize(n);
        d.x.resize(n, 1);
        d.t.resize(n);
        Truth tr{Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd(n)};
        Eigen::VectorXd mean(n);
        for (int i = 0; i < n; ++i) {
            double x;
            double t;
            do {
                const double z1 = rs.normal();
                const double z2 = rs.normal();
                x = z1;
                t = 0.5 + sd_t * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
            } while (t < 0.25 || t > 0.75);
            const double eta = study3_eta(t);
            d.x(i, 0) = x;
            d.t(i) = t;
            d.y(i) = (2.0 * x + eta + rs.logistic() >= 0.0) ? 1.0 : 0.0;
            tr.eta(i) = eta;
            mean(i) = detail::expit(2.0 * x + eta);
        }
        d.truth = std::move(tr);
        switch (c) {
            case Contamination::None:
            case Contamination::S2Outliers: break;
            case Contamination::C1:
                for (int i = 0; i < n; ++i) {
                    const double u = cs.uniform();
                    if (u > 0.9) d.y(i) = cs.binomial(1, 0.5);
                }
                break;
            case Contamination::C2: {
                std::vector<int> idx;
                for (int i = 0; i < n; ++i)
                    if (mean(i) > 0.99) idx.push_back(i);
                if (idx.size() < 10) {
                    if (regenerations) ++*regenerations;
                    continue;
                }
                std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return mean(a) > mean(b); });
                idx.resize(10);
                std::sort(idx.begin(), idx.end());
                for (int i : idx) d.y(i) = cs.binomial(1, 0.5);
                break;
            }
            case Contamination::C3:
                for (int i = 0; i < n; ++i) {
                    const double u = cs.uniform();
                    if (u > 0.9) {
                        d.x(i, 0) = cs.normal(10.0, 1.0);
                        d.y(i) = cs.binomial(1, 0.05);
                    }
                }
                break;
        }
        return d;
    }
}

inline Dataset generate(const StudySpec& spec) {
    spec.validate();
    switch (spec.study) {
        case Study::S1: return gen_study1(spec.n, spec.seed);
        case Study::S2: return gen_study2(spec.n, spec.seed, spec.k_outliers, spec.study2_t_variance);
        case Study::S3: return gen_study3(spec.n, spec.seed, spec.contamination);
    }
    throw DomainError("unknown study");
}

/// A named loss whose weights may depend on the data (median centering).
struct EstimatorSpec {
    std::string label;
    std::function<LossSpec(const Dataset&)> make;
};

/// The three estimators compared in the studies: QAL with unit weights, RQL
/// with Huber(1.2) and MOD with Croux-Haesbroeck(0.5), the last two with
/// median-centred Cauchy weights w1 = w2.
inline std::vector<EstimatorSpec> standard_estimators(const Family& fam, double huber_c = 1.2, double ch_c = 0.5) {
    const Link link(fam.canonical_link());
    std::vector<EstimatorSpec> out;
    out.push_back({"QAL", [fam, link](const Dataset&) { return LossSpec::classical_quasi(fam, link); }});
    const LossSpec rql = LossSpec::robust_quasi(fam, link, PsiHuber(huber_c));
    out.push_back({"RQL", [rql](const Dataset& d) {
                       const WeightFn w = WeightFn::median_cauchy_from(d.x);
                       return rql.with_weights(w, w);
                   }});
    const LossSpec mod = LossSpec::modified_likelihood(fam, link, ScorePhi::croux_haesbroeck(ch_c));
    out.push_back({"MOD", [mod](const Dataset& d) {
                       const WeightFn w = WeightFn::median_cauchy_from(d.x);
                       return mod.with_weights(w, w);
                   }});
    return out;
}

inline Family study_family(Study s) { return s == Study::S3 ? Family::binomial(1) : Family::binomial(10); }

/// One estimator on one replication.
struct RepRecord {
    int rep = 0;
    std::string estimator;
    double h = 0.0;
    bool ok = false;
    double beta_hat = NAN;
    double mse_eta = NAN;
    double se = NAN;  ///< sandwich SE, when requested
    std::string error;
};

struct SummaryRow {
    std::string estimator;
    double h = 0.0;
    int replications = 0;
    int failures = 0;
    double bias = NAN;
    double sd = NAN;
    double mse_beta = NAN;
    double mse_eta = NAN;
};

struct McSummary {
    StudySpec study;
    std::vector<SummaryRow> rows;
    std::vector<RepRecord> records;  ///< sorted by (estimator order, rep)
    bool run_failed = false;
};

/// bias, SD (denominator R - 1), MSE of beta_hat and mean MSE(eta_hat).
inline SummaryRow metrics(const std::vector<double>& beta_hat, const std::vector<double>& mse_eta, double beta0) {
    SummaryRow r;
    const auto R = static_cast<double>(beta_hat.size());
    r.replications = static_cast<int>(beta_hat.size());
    if (beta_hat.empty()) return r;
    const double mean = std::accumulate(beta_hat.begin(), beta_hat.end(), 0.0) / R;
    r.bias = mean - beta0;
    double ss = 0.0;
    double sq = 0.0;
    for (double b : beta_hat) {
        ss += (b - mean) * (b - mean);
        sq += (b - beta0) * (b - beta0);
    }
    r.sd = beta_hat.size() >= 2 ? std::sqrt(ss / (R - 1.0)) : NAN;
    r.mse_beta = sq / R;
    r.mse_eta = mse_eta.empty() ? NAN : std::accumulate(mse_eta.begin(), mse_eta.end(), 0.0) /
                                            static_cast<double>(mse_eta.size());
    return r;
}

/// n^{-1} sum (eta_hat(t_i) - eta_0(t_i))^2.
inline double mse_eta(const Eigen::VectorXd& eta_hat, const Eigen::VectorXd& eta0) {
    return (eta_hat - eta0).squaredNorm() / static_cast<double>(eta0.size());
}

/// Seed of replication `rep` derived from the master seed.
inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
    return rng::Stream(master, 0x5245505345454453ULL).substream(static_cast<std::uint64_t>(rep)).key();
}

struct McOptions {
    int replications = 100;
    std::vector<double> bandwidths{0.2};
    KernelShape kernel = KernelShape::Triangular;
    BetaSearchSpec beta_search;
    ScalarSearchSpec search;
    int jobs = 1;
    bool with_se = false;
};

/// Fits every estimator at every bandwidth on R replications of the study.
/// Replication r uses the dataset generated from replication_seed(seed, r),
/// so all estimators see the same data and results do not depend on `jobs`.
inline McSummary run_monte_carlo(const StudySpec& study, const std::vector<EstimatorSpec>& estimators,
                                 const McOptions& opt) {
    study.validate();
    if (opt.replications < 1) throw DomainError("replications must be positive");
    if (opt.jobs < 1) throw DomainError("jobs must be positive");
    if (estimators.empty()) throw DomainError("no estimators given");
    if (opt.bandwidths.empty()) throw DomainError("no bandwidths given");
    const std::size_t per_rep = estimators.size() * opt.bandwidths.size();
    std::vector<RepRecord> recs(per_rep * static_cast<std::size_t>(opt.replications));

    auto run_rep = [&](int rep) {
        StudySpec s = study;
        s.seed = replication_seed(study.seed, rep);
        const Dataset d = generate(s);
        for (std::size_t e = 0; e < estimators.size(); ++e) {
            const LossSpec loss = estimators[e].make(d);
            for (std::size_t b = 0; b < opt.bandwidths.size(); ++b) {
                RepRecord& r = recs[static_cast<std::size_t>(rep) * per_rep + e * opt.bandwidths.size() + b];
                r.rep = rep;
                r.estimator = estimators[e].label;
                r.h = opt.bandwidths[b];
                try {
                    const ProfileProblem prob(d, loss, KernelSpec(opt.kernel, opt.bandwidths[b]), opt.search);
                    const FitResult fit = fit_beta(prob, opt.beta_search);
                    r.beta_hat = fit.beta(0);
                    r.mse_eta = mse_eta(fit.eta_at, d.truth->eta);
                    if (opt.with_se) r.se = sandwich(prob, fit.beta).se()(0);
                    r.ok = true;
                } catch (const Error& ex) {
                    r.ok = false;
                    r.error = ex.what();
                }
            }
        }
    };

    const int jobs = std::min(opt.jobs, opt.replications);
    if (jobs == 1) {
        for (int rep = 0; rep < opt.replications; ++rep) run_rep(rep);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                for (int rep = w; rep < opt.replications; rep += jobs) run_rep(rep);
            });
        for (auto& th : pool) th.join();
    }

    McSummary out;
    out.study = study;
    const double beta0 = study.study == Study::S1 ? 3.0 : 2.0;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        for (std::size_t b = 0; b < opt.bandwidths.size(); ++b) {
            std::vector<double> bh;
            std::vector<double> me;
            int failures = 0;
            for (int rep = 0; rep < opt.replications; ++rep) {
                const RepRecord& r = recs[static_cast<std::size_t>(rep) * per_rep + e * opt.bandwidths.size() + b];
                if (!r.ok) {
                    ++failures;
                    continue;
                }
                bh.push_back(r.beta_hat);
                me.push_back(r.mse_eta);
            }
            SummaryRow row = metrics(bh, me, beta0);
            row.estimator = estimators[e].label;
            row.h = opt.bandwidths[b];
            row.failures = failures;
            row.replications = opt.replications;
            if (failures * 10 > opt.replications) out.run_failed = true;
            out.rows.push_back(row);
        }
    }
    for (std::size_t e = 0; e < estimators.size(); ++e)
        for (std::size_t b = 0; b < opt.bandwidths.size(); ++b)
            for (int rep = 0; rep < opt.replications; ++rep)
                out.records.push_back(recs[static_cast<std::size_t>(rep) * per_rep + e * opt.bandwidths.size() + b]);
    return out;
}

}  // namespace gplm
