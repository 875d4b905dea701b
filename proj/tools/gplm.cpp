// Command-line front end: fit, cv, test and simulate.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gplm/gplm.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

struct ModelOptions {
    std::string input;
    std::string loss = "mod";
    std::string family = "binomial";
    int trials = 1;
    std::string link;
    std::string kernel = "triangular";
    std::string weights = "median-cauchy";
    std::string score = "ch";
    double huber_c = 1.2;
    double phi_c = 0.5;
    double h = 0.2;
    double grid_step = 0.05;
    double grid_center = 0.0;
    double grid_halfwidth = 5.0;
    bool refine = false;
    std::string out;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

gplm::Family make_family(const ModelOptions& o) {
    if (o.family == "binomial") return gplm::Family::binomial(o.trials);
    if (o.family == "poisson") return gplm::Family::poisson();
    throw UsageError("unknown family '" + o.family + "' (valid: binomial, poisson)");
}

gplm::Link make_link(const ModelOptions& o, const gplm::Family& fam) {
    if (o.link.empty()) return gplm::Link(fam.canonical_link());
    if (o.link == "logit") return gplm::Link::logit();
    if (o.link == "log") return gplm::Link::log();
    throw UsageError("unknown link '" + o.link + "' (valid: logit, log)");
}

gplm::KernelShape make_kernel_shape(const std::string& k) {
    if (k == "triangular") return gplm::KernelShape::Triangular;
    if (k == "epanechnikov") return gplm::KernelShape::Epanechnikov;
    if (k == "gaussian") return gplm::KernelShape::Gaussian;
    throw UsageError("unknown kernel '" + k + "' (valid: triangular, epanechnikov, gaussian)");
}

gplm::LossSpec make_loss(const ModelOptions& o, const gplm::Dataset& d) {
    const gplm::Family fam = make_family(o);
    const gplm::Link link = make_link(o, fam);
    gplm::WeightFn w = gplm::WeightFn::unit();
    if (o.weights == "median-cauchy") {
        w = gplm::WeightFn::median_cauchy_from(d.x);
    } else if (o.weights != "unit") {
        throw UsageError("unknown weights '" + o.weights + "' (valid: unit, median-cauchy)");
    }
    if (o.loss == "qal") return gplm::LossSpec::classical_quasi(fam, link);
    if (o.loss == "rql") return gplm::LossSpec::robust_quasi(fam, link, gplm::PsiHuber(o.huber_c), w, w);
    if (o.loss == "mod") {
        gplm::ScorePhi phi = gplm::ScorePhi::croux_haesbroeck(o.phi_c);
        if (o.score == "by") {
            phi = gplm::ScorePhi::bianco_yohai(o.phi_c);
        } else if (o.score != "ch") {
            throw UsageError("unknown score '" + o.score + "' (valid: ch, by)");
        }
        return gplm::LossSpec::modified_likelihood(fam, link, phi, w, w);
    }
    throw UsageError("unknown loss '" + o.loss + "' (valid: qal, rql, mod)");
}

gplm::BetaSearchSpec make_beta_search(const ModelOptions& o) {
    gplm::BetaSearchSpec s;
    s.mode = o.refine ? gplm::BetaSearchSpec::Mode::GridThenRefine : gplm::BetaSearchSpec::Mode::Grid;
    s.step = o.grid_step;
    s.center = o.grid_center;
    s.halfwidth = o.grid_halfwidth;
    s.refine_tol = std::min(1e-4, o.grid_step / 10.0);
    s.validate();
    return s;
}

gplm::Dataset load(const ModelOptions& o) {
    std::ifstream in(o.input);
    if (!in) throw gplm::ValidationError("cannot open input file '" + o.input + "'");
    return gplm::io::read_data_csv(in, make_family(o));
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("GPLM_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw UsageError("GPLM_SEED must be a non-negative integer");
        return v;
    }
    return 1;
}

template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) throw gplm::ValidationError("cannot open output file '" + path + "'");
    fn(out);
}

void print_fit(std::ostream& os, const gplm::FitResult& f) {
    os << "loss " << f.loss << ", kernel " << f.kernel << ", h = " << gplm::io::fmt3(f.h) << "\n";
    for (Eigen::Index j = 0; j < f.beta.size(); ++j) {
        os << "beta" << j + 1 << " = " << gplm::io::fmt(f.beta(j));
        if (j < f.se.size()) os << "  (se " << gplm::io::fmt(f.se(j)) << ")";
        os << "\n";
    }
    os << "objective F_n = " << gplm::io::fmt(f.objective) << "\n";
    for (const auto& w : f.warnings) os << "warning: " << w << "\n";
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
    cmd->add_option("input,--input", o.input, "CSV file with header y,x1,...,xp,t")->required();
    cmd->add_option("--loss", o.loss, "qal, rql or mod")->capture_default_str();
    cmd->add_option("--family", o.family, "binomial or poisson")->capture_default_str();
    cmd->add_option("--trials", o.trials, "binomial trials m")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--link", o.link, "logit or log (default: canonical)");
    cmd->add_option("--kernel", o.kernel, "triangular, epanechnikov or gaussian")->capture_default_str();
    cmd->add_option("--weights", o.weights, "unit or median-cauchy")->capture_default_str();
    cmd->add_option("--score", o.score, "ch or by (mod only)")->capture_default_str();
    cmd->add_option("--huber-c", o.huber_c, "Huber tuning constant")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--phi-c", o.phi_c, "score tuning constant")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--grid-step", o.grid_step, "beta grid step")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--grid-center", o.grid_center, "beta grid center")->capture_default_str();
    cmd->add_option("--grid-halfwidth", o.grid_halfwidth, "beta grid half-width")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--refine", o.refine, "polish the grid minimum by golden section");
    cmd->add_option("--out", o.out, "output CSV path (default: standard output)");
}

int run_fit(const ModelOptions& o, const std::vector<double>& cv, double alpha, std::uint64_t seed) {
    const gplm::Dataset d = load(o);
    const gplm::LossSpec loss = make_loss(o, d);
    const gplm::KernelShape shape = make_kernel_shape(o.kernel);
    double h = o.h;
    if (!cv.empty()) {
        gplm::CvSpec spec;
        spec.candidate_h = cv;
        spec.alpha = alpha;
        spec.seed = seed;
        spec.refit = false;
        h = gplm::robust_cv(d, loss, shape, spec, make_beta_search(o)).selected_h;
        std::cout << "selected h = " << gplm::io::fmt(h) << "\n";
    }
    const gplm::ProfileProblem prob(d, loss, gplm::KernelSpec(shape, h));
    gplm::FitResult fit = gplm::fit_beta(prob, make_beta_search(o));
    gplm::attach_covariance(fit, gplm::sandwich(prob, fit.beta));
    print_fit(std::cout, fit);
    if (!o.out.empty()) with_output(o.out, [&](std::ostream& os) { gplm::io::write_fit_csv(os, fit); });
    return kOk;
}

int run_cv(const ModelOptions& o, std::vector<double> cv, double alpha, int splits, std::uint64_t seed) {
    const gplm::Dataset d = load(o);
    const gplm::LossSpec loss = make_loss(o, d);
    gplm::CvSpec spec;
    if (!cv.empty()) spec.candidate_h = std::move(cv);
    spec.alpha = alpha;
    spec.splits = splits;
    spec.seed = seed;
    spec.refit = false;
    const gplm::CvResult r = gplm::robust_cv(d, loss, make_kernel_shape(o.kernel), spec, make_beta_search(o));
    with_output(o.out, [&](std::ostream& os) {
        os << "h,validation_loss,selected\n";
        for (std::size_t k = 0; k < spec.candidate_h.size(); ++k)
            os << gplm::io::fmt(spec.candidate_h[k]) << ',' << gplm::io::fmt(r.losses[k]) << ','
               << (spec.candidate_h[k] == r.selected_h ? 1 : 0) << '\n';
    });
    for (const auto& note : r.notes) std::cerr << "note: " << note << "\n";
    if (!o.out.empty()) std::cout << "selected h = " << gplm::io::fmt(r.selected_h) << "\n";
    return kOk;
}

int run_test(const ModelOptions& o, const std::vector<int>& restrict1, const std::vector<double>& null_vals,
             const std::string& method, int draws, std::uint64_t seed) {
    const gplm::Dataset d = load(o);
    const gplm::LossSpec loss = make_loss(o, d);
    const gplm::ProfileProblem prob(d, loss, gplm::KernelSpec(make_kernel_shape(o.kernel), o.h));
    std::vector<Eigen::Index> r;
    for (int j : restrict1) {
        if (j < 1 || j > prob.p()) throw UsageError("--restrict index " + std::to_string(j) + " out of range");
        r.push_back(j - 1);
    }
    Eigen::VectorXd null = Eigen::VectorXd::Zero(prob.p());
    if (!null_vals.empty()) {
        if (null_vals.size() != r.size()) throw UsageError("--null needs one value per restricted coefficient");
        for (std::size_t k = 0; k < r.size(); ++k) null(r[k]) = null_vals[k];
    }
    const gplm::BetaSearchSpec bs = make_beta_search(o);
    if (method != "wald" && method != "lambda" && method != "both")
        throw UsageError("unknown method '" + method + "' (valid: wald, lambda, both)");
    std::vector<std::pair<std::string, gplm::TestResult>> results;
    const gplm::FitResult fit = gplm::fit_beta(prob, bs);
    if (method != "lambda") {
        const gplm::SandwichEstimate s = gplm::sandwich(prob, fit.beta);
        results.emplace_back("wald", gplm::wald_test(fit, s, r, null));
    }
    if (method != "wald") {
        gplm::LambdaSpec ls;
        ls.search = bs;
        ls.seed = seed;
        ls.draws = draws;
        results.emplace_back("lambda", gplm::lambda_test(prob, r, ls, null, fit));
    }
    with_output(o.out, [&](std::ostream& os) {
        os << "method,statistic,df,p_value\n";
        for (const auto& [name, t] : results)
            os << name << ',' << gplm::io::fmt(t.statistic) << ',' << t.df << ',' << gplm::io::fmt(t.p_value) << '\n';
    });
    return kOk;
}

struct SimOptions {
    int study = 1;
    std::string contamination = "none";
    int outliers = 0;
    std::optional<int> reps;
    std::optional<int> n;
    std::vector<double> h;
    std::optional<double> grid_step;
    std::optional<double> grid_center;
    std::optional<double> grid_halfwidth;
    int jobs = 1;
    std::string raw;
    std::string out;
    double t_variance = 1.0 / 6.0;
};

int run_simulate(const SimOptions& o, std::uint64_t seed) {
    gplm::StudySpec spec;
    if (o.study < 1 || o.study > 3) throw UsageError("--study must be 1, 2 or 3");
    spec.study = static_cast<gplm::Study>(o.study);
    spec.seed = seed;
    spec.study2_t_variance = o.t_variance;
    spec.n = o.n ? *o.n : (spec.study == gplm::Study::S3 ? 200 : 100);
    if (o.contamination == "none") {
        spec.contamination = gplm::Contamination::None;
    } else if (o.contamination == "c1") {
        spec.contamination = gplm::Contamination::C1;
    } else if (o.contamination == "c2") {
        spec.contamination = gplm::Contamination::C2;
    } else if (o.contamination == "c3") {
        spec.contamination = gplm::Contamination::C3;
    } else {
        throw UsageError("unknown contamination '" + o.contamination + "' (valid: none, c1, c2, c3)");
    }
    if (o.outliers != 0) {
        if (spec.study != gplm::Study::S2) throw UsageError("--outliers applies to study 2 only");
        if (spec.contamination != gplm::Contamination::None)
            throw UsageError("--outliers cannot be combined with --contamination");
        spec.contamination = gplm::Contamination::S2Outliers;
        spec.k_outliers = o.outliers;
    }
    try {
        spec.validate();
    } catch (const gplm::DomainError& e) {
        throw UsageError(e.what());
    }
    gplm::McOptions mc;
    mc.replications = o.reps ? *o.reps : (spec.study == gplm::Study::S2 ? 1 : 100);
    mc.bandwidths = o.h.empty() ? std::vector<double>{spec.study == gplm::Study::S1 ? 0.2 : 0.1} : o.h;
    const bool s2 = spec.study == gplm::Study::S2;
    const double step = o.grid_step ? *o.grid_step : (s2 ? 0.01 : 0.05);
    const double center = o.grid_center ? *o.grid_center : (s2 ? 1.5 : 0.0);
    const double halfwidth = o.grid_halfwidth ? *o.grid_halfwidth : (s2 ? 2.5 : 5.0);
    mc.beta_search = gplm::BetaSearchSpec::grid(step, center, halfwidth);
    mc.jobs = o.jobs;
    const gplm::McSummary res =
        gplm::run_monte_carlo(spec, gplm::standard_estimators(gplm::study_family(spec.study)), mc);
    if (!o.out.empty()) with_output(o.out, [&](std::ostream& os) { gplm::io::write_summary_csv(os, res); });
    if (!o.raw.empty()) with_output(o.raw, [&](std::ostream& os) { gplm::io::write_raw_csv(os, res); });
    gplm::io::print_summary(std::cout, res);
    if (res.run_failed) {
        std::cerr << "error: more than 10% of the fits failed\n";
        return kNumerical;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust estimation for generalized partially linear models"};
    app.set_help_flag("--help", "print this help message and exit");
    app.set_config("--config", "", "read options from an INI or TOML file");
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "random seed (fallback: GPLM_SEED, then 1)");

    ModelOptions fit_o, cv_o, test_o;
    std::vector<double> fit_cv, cv_cands;
    double fit_alpha = 0.2, cv_alpha = 0.2;
    int cv_splits = 1;

    auto* fit = app.add_subcommand("fit", "fit a model to a CSV file");
    add_model_options(fit, fit_o);
    fit->get_option("--out")->description("fit CSV path (default: summary only)");
    fit->add_option("--h", fit_o.h, "bandwidth")->capture_default_str()->check(CLI::PositiveNumber);
    fit->add_option("--cv", fit_cv, "candidate bandwidths; selects h by cross-validation")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    fit->add_option("--alpha", fit_alpha, "hold-out fraction for --cv")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    fit->add_option("--seed", seed, "random seed");

    auto* cv = app.add_subcommand("cv", "select the bandwidth by robust cross-validation");
    add_model_options(cv, cv_o);
    cv->add_option("--cv", cv_cands, "candidate bandwidths (default 0.1,0.15,0.2,0.25,0.3)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    cv->add_option("--alpha", cv_alpha, "hold-out fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    cv->add_option("--splits", cv_splits, "number of random splits")->capture_default_str()->check(CLI::PositiveNumber);
    cv->add_option("--seed", seed, "random seed");

    std::vector<int> restrict1{1};
    std::vector<double> null_vals;
    std::string method = "both";
    int draws = 100000;
    auto* test = app.add_subcommand("test", "Wald and Lambda tests of beta_(2) = null");
    add_model_options(test, test_o);
    test->add_option("--h", test_o.h, "bandwidth")->capture_default_str()->check(CLI::PositiveNumber);
    test->add_option("--restrict", restrict1, "1-based coefficient indices under test")->delimiter(',');
    test->add_option("--null", null_vals, "null values (default 0)")->delimiter(',');
    test->add_option("--method", method, "wald, lambda or both")->capture_default_str();
    test->add_option("--draws", draws, "Monte Carlo draws for the Lambda p-value")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    test->add_option("--seed", seed, "random seed");

    SimOptions sim_o;
    auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
    sim->add_option("--study", sim_o.study, "1, 2 or 3")->required();
    sim->add_option("--contamination", sim_o.contamination, "none, c1, c2 or c3 (study 3)")->capture_default_str();
    sim->add_option("--outliers", sim_o.outliers, "outliers replacing the first rows (study 2)")
        ->check(CLI::Range(0, 3));
    sim->add_option("--reps", sim_o.reps, "replications (default 100; 1 for study 2)")->check(CLI::PositiveNumber);
    sim->add_option("--n", sim_o.n, "sample size (default 100; 200 for study 3)")->check(CLI::PositiveNumber);
    sim->add_option("--h", sim_o.h, "bandwidth(s)")->delimiter(',')->check(CLI::PositiveNumber);
    sim->add_option("--grid-step", sim_o.grid_step, "beta grid step (default 0.05; 0.01 for study 2)")
        ->check(CLI::PositiveNumber);
    sim->add_option("--grid-center", sim_o.grid_center, "beta grid center (default 0; 1.5 for study 2)");
    sim->add_option("--grid-halfwidth", sim_o.grid_halfwidth, "beta grid half-width (default 5; 2.5 for study 2)")
        ->check(CLI::PositiveNumber);
    sim->add_option("--t-variance", sim_o.t_variance, "variance of t in study 2")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sim->add_option("--jobs", sim_o.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sim->add_option("--raw", sim_o.raw, "per-replication CSV path");
    sim->add_option("--out", sim_o.out, "summary CSV path");
    sim->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const std::uint64_t s = resolve_seed(seed);
        if (*fit) return run_fit(fit_o, fit_cv, fit_alpha, s);
        if (*cv) return run_cv(cv_o, cv_cands, cv_alpha, cv_splits, s);
        if (*test) return run_test(test_o, restrict1, null_vals, method, draws, s);
        if (*sim) return run_simulate(sim_o, s);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const gplm::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const gplm::DesignError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const gplm::DomainError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const gplm::Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    }
    return kUsage;
}
