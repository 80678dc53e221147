// survmpl command-line tool: fit proportional hazards models to partly
// interval-censored data, run simulation studies, and dump basis grids.
//
// Exit codes: 0 ok, 2 input error, 3 fit non-convergence, 4 inference failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <survmpl/survmpl.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitInference = 4;

struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// formatting: human output uses 6 significant digits, machine output full
// precision; snprintf keeps both locale-independent and byte-reproducible.

std::string g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string pad(const std::string& s, int width) {
    // keep at least one space so adjacent wide values never run together
    if (static_cast<int>(s.size()) >= width) return " " + s;
    return std::string(static_cast<std::size_t>(width) - s.size(), ' ') + s;
}

std::string padl(const std::string& s, int width) {
    if (static_cast<int>(s.size()) >= width) return s + " ";
    return s + std::string(static_cast<std::size_t>(width) - s.size(), ' ');
}

// 64-bit FNV-1a over the raw input bytes; stamped into reports so a result
// can be traced back to the exact file that produced it.
std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write file: " + path.string());
    out << content;
}

// ---------------------------------------------------------------------------
// option parsing helpers

struct BasisChoice {
    survmpl::BasisFamily family = survmpl::BasisFamily::MSpline;
    int order = 3;
    std::string token = "mspline";
};

// "mspline" (cubic), "mspline<k>" for order k, or "gaussian"
BasisChoice parse_basis_token(const std::string& tok) {
    BasisChoice c;
    c.token = tok;
    if (tok == "gaussian") {
        c.family = survmpl::BasisFamily::Gaussian;
        c.order = 0;
        return c;
    }
    if (tok.rfind("mspline", 0) == 0) {
        c.family = survmpl::BasisFamily::MSpline;
        const std::string rest = tok.substr(7);
        if (!rest.empty()) {
            try {
                std::size_t pos = 0;
                c.order = std::stoi(rest, &pos);
                if (pos != rest.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw CLI::ValidationError("--basis", "malformed basis token '" + tok + "'");
            }
            if (c.order < 1 || c.order > 6)
                throw CLI::ValidationError("--basis", "M-spline order must be in 1..6");
        }
        return c;
    }
    throw CLI::ValidationError("--basis", "unknown basis '" + tok + "' (use mspline[k] or gaussian)");
}

// "auto" or a nonnegative number
double parse_lambda(const std::string& tok, bool& is_auto) {
    if (tok == "auto") {
        is_auto = true;
        return 0.0;
    }
    is_auto = false;
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size() || !(v >= 0.0)) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw CLI::ValidationError("--lambda", "expected 'auto' or a nonnegative number");
    }
}

int parse_n_interior(const std::string& tok, std::size_t n) {
    if (tok == "auto") {
        // cube-root rule, clamped to a practical range
        const int k = static_cast<int>(std::llround(std::cbrt(static_cast<double>(n))));
        return std::min(std::max(k, 2), 10);
    }
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v < 1) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw CLI::ValidationError("--n-interior", "expected 'auto' or a positive integer");
    }
}

std::vector<double> parse_double_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(cell, &pos));
            if (pos != cell.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "malformed number '" + cell + "'");
        }
    }
    if (out.empty()) throw CLI::ValidationError(flag, "empty list");
    return out;
}

std::string family_name(survmpl::BasisFamily f) {
    return f == survmpl::BasisFamily::MSpline ? "mspline" : "gaussian";
}

// evenly spaced grid with both endpoints hit exactly
std::vector<double> make_grid(double lo, double hi, int points) {
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        g[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    g.front() = lo;
    g.back() = hi;
    return g;
}

// ---------------------------------------------------------------------------
// fit subcommand

struct FitArgs {
    std::string data_path;
    std::string t_left_col = "t_left";
    std::string t_right_col = "t_right";
    std::string covariates; // comma list; empty -> all non-time columns
    std::string basis = "mspline";
    std::string n_interior = "auto";
    std::string knots; // explicit full knot list, overrides n-interior
    double zeta1 = 0.35;
    double zeta2 = 0.40;
    std::string lambda = "auto";
    std::string profile; // covariate profile for the survival grid
    std::string out_dir;
    int grid_points = 200;
    int max_iter = 5000;
    double kkt_tol = 1e-6;
    bool emit_json = false;
};

int run_fit(const FitArgs& a) {
    using namespace survmpl;

    const std::string bytes = read_file(a.data_path);
    const std::string input_hash = hex64(fnv1a64(bytes));

    DataSchema schema;
    schema.t_left_col = a.t_left_col;
    schema.t_right_col = a.t_right_col;
    if (!a.covariates.empty()) {
        std::stringstream ss(a.covariates);
        std::string name;
        while (std::getline(ss, name, ',')) schema.covariate_cols.push_back(name);
    }
    std::istringstream in(bytes);
    const Dataset data = load_dataset(in, schema);

    std::array<int, 4> kind_counts{};
    for (const auto& o : data.observations()) kind_counts[static_cast<std::size_t>(o.kind)]++;

    const BasisChoice bc = parse_basis_token(a.basis);
    const auto pool = endpoint_pool(data);
    KnotSequence kn;
    int n_interior = 0;
    if (!a.knots.empty()) {
        auto kv = parse_double_list(a.knots, "--knots");
        std::sort(kv.begin(), kv.end());
        kn = KnotSequence(Eigen::Map<Eigen::VectorXd>(kv.data(), static_cast<Eigen::Index>(kv.size())));
        n_interior = static_cast<int>(kn.n_interior());
    } else {
        n_interior = parse_n_interior(a.n_interior, data.n());
        kn = quantile_knots(pool, n_interior);
    }
    const BasisSystem basis = bc.family == BasisFamily::MSpline
                                  ? BasisSystem::mspline(kn, bc.order)
                                  : BasisSystem::gaussian(kn, gaussian_scales(pool, kn, a.zeta1, a.zeta2));
    const Eigen::MatrixXd R = basis.penalty();

    bool lambda_auto = false;
    const double lambda_fixed = parse_lambda(a.lambda, lambda_auto);

    FitOptions fopts;
    fopts.max_outer_iter = a.max_iter;
    fopts.kkt_tol = a.kkt_tol;

    FitResult fr;
    Eigen::MatrixXd hessian_ll;
    double lambda = 0.0, nu = 0.0, sigma2 = std::numeric_limits<double>::infinity();
    int smooth_iterations = 0;
    bool smooth_stabilized = true;
    if (lambda_auto) {
        SmoothOptions sopts;
        sopts.fit_opts = fopts;
        const AutoFitResult ar = auto_fit(basis, data, sopts);
        fr = ar.fit;
        hessian_ll = ar.hessian_ll;
        lambda = ar.state.lambda;
        sigma2 = ar.state.sigma2;
        nu = ar.state.nu;
        smooth_iterations = ar.state.iteration;
        smooth_stabilized = ar.stabilized;
    } else {
        lambda = lambda_fixed;
        fr = fit(basis, data, R, lambda, fopts);
        Workspace w(basis, data);
        Parts parts;
        ModelState ll_state = fr.state;
        ll_state.lambda = 0.0;
        penalized_objective(ll_state, w, R, &parts);
        hessian_ll = hessian(ll_state, w, R, parts);
        sigma2 = lambda > 0.0 ? 0.5 / lambda : std::numeric_limits<double>::infinity();
        try {
            nu = model_df(-hessian_ll, R, sigma2, fr.active_set);
        } catch (const std::exception&) {
            nu = std::numeric_limits<double>::quiet_NaN(); // diagnostic only; covariance decides
        }
    }

    if (!fr.converged && !fr.stalled)
        throw NonConvergenceError("fit did not converge within " + std::to_string(a.max_iter) +
                                  " iterations (KKT residual " + g6(fr.kkt_residual) + ", tolerance " +
                                  g6(fr.kkt_tolerance) + "); increase --max-iter");

    const CovarianceReport cov =
        sandwich_covariance(hessian_ll, R, lambda, fr.active_set, static_cast<Eigen::Index>(data.n()));
    const auto rows = regression_summary(fr, cov, data.covariate_names());

    const auto grid = make_grid(basis.t_min(), basis.t_max(), a.grid_points);
    const auto hband = baseline_hazard_band(fr, cov, basis, grid);

    Eigen::VectorXd profile;
    std::vector<SurvivalBandPoint> sband;
    if (!a.profile.empty()) {
        const auto pv = parse_double_list(a.profile, "--covariate-profile");
        if (pv.size() != data.p())
            throw std::invalid_argument("--covariate-profile: expected " + std::to_string(data.p()) +
                                        " values, got " + std::to_string(pv.size()));
        profile = Eigen::Map<const Eigen::VectorXd>(pv.data(), static_cast<Eigen::Index>(pv.size()));
        sband = predict_survival_band(fr, cov, basis, profile, grid);
    }

    // --- human-readable report -------------------------------------------
    std::ostringstream rep;
    rep << "survmpl fit\n";
    rep << "  input: " << a.data_path << "  (fnv1a64 " << input_hash << ")\n";
    rep << "  observations: " << data.n() << "  (event " << kind_counts[0] << ", left " << kind_counts[1]
        << ", right " << kind_counts[2] << ", interval " << kind_counts[3] << ")\n";
    rep << "  covariates: " << data.p() << "\n";
    rep << "  basis: " << family_name(basis.family());
    if (basis.family() == BasisFamily::MSpline) rep << " order " << basis.order();
    rep << ", m = " << basis.m() << ", interior knots = " << n_interior << ", support [" << g6(basis.t_min())
        << ", " << g6(basis.t_max()) << "]\n";
    rep << "  lambda: " << g6(lambda) << (lambda_auto ? " (auto" : " (fixed");
    if (lambda_auto)
        rep << ", " << smooth_iterations + 1 << " smoothing iterations"
            << (smooth_stabilized ? "" : ", not stabilized");
    rep << "), df = " << g6(nu) << "\n";
    rep << "  fit: " << (fr.converged ? "converged" : "plateaued at working precision") << " after "
        << fr.iterations << " iterations, KKT residual " << g6(fr.kkt_residual) << " (tolerance "
        << g6(fr.kkt_tolerance) << "), log-likelihood " << g6(fr.objective + lambda * fr.state.theta.dot(R * fr.state.theta))
        << ", active constraints " << fr.active_set.size() << "\n";
    rep << "\n";

    if (!rows.empty()) {
        rep << padl("covariate", 16) << pad("estimate", 12) << pad("se", 12) << pad("z", 10)
            << pad("p-value", 12) << pad("HR", 10) << pad("HR lo", 10) << pad("HR hi", 10) << "\n";
        for (const auto& r : rows) {
            rep << padl(r.name, 16) << pad(g6(r.estimate), 12) << pad(g6(r.se), 12) << pad(g6(r.z), 10)
                << pad(g6(r.p_value), 12) << pad(g6(r.hazard_ratio), 10) << pad(g6(r.hr_low), 10)
                << pad(g6(r.hr_high), 10) << "\n";
        }
        rep << "\n";
    }

    rep << "baseline hazard (5-point summary of the " << a.grid_points << "-point grid):\n";
    rep << pad("t", 12) << pad("h0", 12) << pad("se", 12) << pad("lower", 12) << pad("upper", 12) << "\n";
    for (int k = 0; k < 5; ++k) {
        const auto& pt = hband[static_cast<std::size_t>((hband.size() - 1) * static_cast<std::size_t>(k) / 4)];
        rep << pad(g6(pt.t), 12) << pad(g6(pt.h0), 12) << pad(g6(pt.se), 12) << pad(g6(pt.lower), 12)
            << pad(g6(pt.upper), 12) << "\n";
    }
    if (!sband.empty()) {
        rep << "\nsurvival at profile (" << a.profile << "), 5-point summary:\n";
        rep << pad("t", 12) << pad("S", 12) << pad("lower", 12) << pad("upper", 12) << "\n";
        for (int k = 0; k < 5; ++k) {
            const auto& pt =
                sband[static_cast<std::size_t>((sband.size() - 1) * static_cast<std::size_t>(k) / 4)];
            rep << pad(g6(pt.t), 12) << pad(g6(pt.survival), 12) << pad(g6(pt.lower), 12)
                << pad(g6(pt.upper), 12) << "\n";
        }
    }

    // --- machine-readable report ------------------------------------------
    nlohmann::json j;
    j["tool"] = "survmpl";
    j["command"] = "fit";
    j["input"] = {{"fnv1a64", input_hash},
                  {"bytes", bytes.size()},
                  {"n", data.n()},
                  {"p", data.p()},
                  {"counts",
                   {{"event", kind_counts[0]},
                    {"left", kind_counts[1]},
                    {"right", kind_counts[2]},
                    {"interval", kind_counts[3]}}}};
    j["options"] = {{"basis", a.basis},       {"n_interior", n_interior},
                    {"knots_explicit", !a.knots.empty()},
                    {"lambda", a.lambda},     {"zeta1", a.zeta1},
                    {"zeta2", a.zeta2},       {"kkt_tol", a.kkt_tol},
                    {"max_iter", a.max_iter}, {"grid_points", a.grid_points}};
    {
        std::vector<double> kv(kn.knots.data(), kn.knots.data() + kn.knots.size());
        j["basis"] = {{"family", family_name(basis.family())},
                      {"order", basis.order()},
                      {"m", basis.m()},
                      {"t_min", basis.t_min()},
                      {"t_max", basis.t_max()},
                      {"knots", kv}};
    }
    j["smoothing"] = {{"lambda", lambda}, {"df", nu}, {"auto", lambda_auto}};
    if (std::isfinite(sigma2)) j["smoothing"]["sigma2"] = sigma2;
    if (lambda_auto) {
        j["smoothing"]["iterations"] = smooth_iterations + 1;
        j["smoothing"]["stabilized"] = smooth_stabilized;
    }
    j["fit"] = {{"converged", fr.converged},
                {"stalled", fr.stalled},
                {"iterations", fr.iterations},
                {"objective", fr.objective},
                {"kkt_residual", fr.kkt_residual},
                {"kkt_tolerance", fr.kkt_tolerance},
                {"active_set", fr.active_set},
                {"covariance_condition", cov.condition}};
    {
        std::vector<double> th(fr.state.theta.data(), fr.state.theta.data() + fr.state.theta.size());
        std::vector<double> st(cov.se_theta.data(), cov.se_theta.data() + cov.se_theta.size());
        j["theta"] = th;
        j["se_theta"] = st;
    }
    j["regression"] = nlohmann::json::array();
    for (const auto& r : rows)
        j["regression"].push_back({{"name", r.name},
                                   {"estimate", r.estimate},
                                   {"se", r.se},
                                   {"z", r.z},
                                   {"p_value", r.p_value},
                                   {"hazard_ratio", r.hazard_ratio},
                                   {"hr_low", r.hr_low},
                                   {"hr_high", r.hr_high}});

    // --- grid CSVs ----------------------------------------------------------
    std::ostringstream hz;
    hz << "t,h0,se,lower,upper\n";
    for (const auto& pt : hband)
        hz << g17(pt.t) << ',' << g17(pt.h0) << ',' << g17(pt.se) << ',' << g17(pt.lower) << ','
           << g17(pt.upper) << '\n';

    std::ostringstream sv;
    if (!sband.empty()) {
        sv << "t,survival,lower,upper,one_sided\n";
        for (const auto& pt : sband)
            sv << g17(pt.t) << ',' << g17(pt.survival) << ',' << g17(pt.lower) << ',' << g17(pt.upper)
               << ',' << (pt.one_sided ? 1 : 0) << '\n';
    }

    if (a.emit_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << rep.str();
    }
    if (!a.out_dir.empty()) {
        const std::filesystem::path dir(a.out_dir);
        std::filesystem::create_directories(dir);
        write_file(dir / "report.json", j.dump(2) + "\n");
        write_file(dir / "report.txt", rep.str());
        write_file(dir / "hazard_grid.csv", hz.str());
        if (!sband.empty()) write_file(dir / "survival_grid.csv", sv.str());
        std::cerr << "wrote " << (dir / "report.json").string() << ", " << (dir / "report.txt").string()
                  << ", " << (dir / "hazard_grid.csv").string();
        if (!sband.empty()) std::cerr << ", " << (dir / "survival_grid.csv").string();
        std::cerr << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate subcommand

struct SimArgs {
    int scenario = 0;
    int n = 200;
    double pi_event = 0.0;
    int reps = 200;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string basis = "mspline";
    int n_interior = 7;
    double zeta1 = 0.35;
    double zeta2 = 0.40;
    std::string lambda = "auto";
    std::string out_dir;
    bool per_rep = false;
};

int run_simulate(const SimArgs& a) {
    using namespace survmpl;

    const ScenarioConfig cfg = scenario(a.scenario, a.pi_event);
    const BasisChoice bc = parse_basis_token(a.basis);
    bool lambda_auto = false;
    const double lambda_fixed = parse_lambda(a.lambda, lambda_auto);

    FitSpec spec;
    spec.family = bc.family;
    spec.order = bc.order;
    spec.n_interior = a.n_interior;
    spec.zeta1 = a.zeta1;
    spec.zeta2 = a.zeta2;
    spec.auto_smooth = lambda_auto;
    spec.lambda_fixed = lambda_fixed;

    const SimSummary s = run_replications(cfg, a.n, a.reps, spec, a.seed, a.workers);

    // --- human-readable table ----------------------------------------------
    std::ostringstream rep;
    rep << "survmpl simulate: scenario " << a.scenario << ", n = " << a.n << ", pi_event = "
        << g6(a.pi_event) << ", reps = " << a.reps << ", seed = " << a.seed << "\n";
    rep << "  estimator: " << a.basis << ", interior knots = " << a.n_interior << ", lambda = " << a.lambda
        << "\n";
    rep << "  usable replications: " << s.n_usable << "/" << s.n_requested << "  (excluded "
        << s.n_excluded << ", covariance failures " << s.n_cov_failed << ")\n\n";

    rep << "regression coefficients:\n";
    rep << padl("covariate", 12) << pad("true", 10) << pad("bias", 12) << pad("MC sd", 12)
        << pad("mean SE", 12) << pad("coverage", 10) << "\n";
    for (std::size_t jix = 0; jix < s.beta.size(); ++jix) {
        const auto& b = s.beta[jix];
        rep << padl("x" + std::to_string(jix + 1), 12) << pad(g6(b.beta_true), 10) << pad(g6(b.bias), 12)
            << pad(g6(b.sd), 12) << pad(g6(b.mean_se), 12) << pad(g6(b.coverage), 10) << "\n";
    }

    rep << "\nbaseline hazard at true-time quantiles:\n";
    rep << padl("quantile", 12) << pad("t", 10) << pad("h0(t)", 10) << pad("bias", 12) << pad("MC sd", 12)
        << pad("mean SE", 12) << pad("coverage", 10) << "\n";
    const char* qnames[3] = {"25%", "50%", "75%"};
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& hp = s.hazard[k];
        rep << padl(qnames[k], 12) << pad(g6(hp.t), 10) << pad(g6(hp.h0_true), 10) << pad(g6(hp.bias), 12)
            << pad(g6(hp.sd), 12) << pad(g6(hp.mean_se), 12) << pad(g6(hp.coverage), 10) << "\n";
    }

    rep << "\nintegrated hazard discrepancy D on [0, t90 = " << g6(s.percentiles.t90)
        << "]: mean " << g6(s.D_mean) << ", sd " << g6(s.D_sd) << "\n";
    if (lambda_auto)
        rep << "smoothing: mean iterations " << g6(s.mean_smooth_iterations) << ", fraction <= 20 "
            << g6(s.frac_smooth_le_20) << ", stabilized " << g6(s.frac_stabilized) << "\n";

    std::cout << rep.str();
    std::cerr << "elapsed: " << g6(s.elapsed_seconds) << " s\n";

    // --- machine-readable outputs -------------------------------------------
    if (!a.out_dir.empty()) {
        const std::filesystem::path dir(a.out_dir);
        std::filesystem::create_directories(dir);

        nlohmann::json j;
        j["tool"] = "survmpl";
        j["command"] = "simulate";
        j["options"] = {{"scenario", a.scenario}, {"n", a.n},
                        {"pi_event", a.pi_event}, {"reps", a.reps},
                        {"seed", a.seed},         {"basis", a.basis},
                        {"n_interior", a.n_interior}, {"lambda", a.lambda},
                        {"zeta1", a.zeta1},       {"zeta2", a.zeta2}};
        j["usable"] = s.n_usable;
        j["excluded"] = s.n_excluded;
        j["cov_failed"] = s.n_cov_failed;
        j["percentiles"] = {{"t25", s.percentiles.t25},
                            {"t50", s.percentiles.t50},
                            {"t75", s.percentiles.t75},
                            {"t90", s.percentiles.t90}};
        j["beta"] = nlohmann::json::array();
        for (const auto& b : s.beta)
            j["beta"].push_back({{"true", b.beta_true},
                                 {"mean_est", b.mean_est},
                                 {"bias", b.bias},
                                 {"sd", b.sd},
                                 {"mean_se", b.mean_se},
                                 {"coverage", b.coverage}});
        j["hazard"] = nlohmann::json::array();
        for (const auto& hp : s.hazard)
            j["hazard"].push_back({{"t", hp.t},
                                   {"h0_true", hp.h0_true},
                                   {"bias", hp.bias},
                                   {"sd", hp.sd},
                                   {"mean_se", hp.mean_se},
                                   {"coverage", hp.coverage}});
        j["D"] = {{"mean", s.D_mean}, {"sd", s.D_sd}};
        j["smoothing"] = {{"mean_iterations", s.mean_smooth_iterations},
                          {"frac_le_20", s.frac_smooth_le_20},
                          {"frac_stabilized", s.frac_stabilized}};
        write_file(dir / "summary.json", j.dump(2) + "\n");

        std::ostringstream bcsv;
        bcsv << "covariate,true,mean_est,bias,sd,mean_se,coverage\n";
        for (std::size_t jix = 0; jix < s.beta.size(); ++jix) {
            const auto& b = s.beta[jix];
            bcsv << "x" << jix + 1 << ',' << g17(b.beta_true) << ',' << g17(b.mean_est) << ','
                 << g17(b.bias) << ',' << g17(b.sd) << ',' << g17(b.mean_se) << ',' << g17(b.coverage)
                 << '\n';
        }
        write_file(dir / "beta_summary.csv", bcsv.str());

        std::ostringstream hcsv;
        hcsv << "quantile,t,h0_true,bias,sd,mean_se,coverage\n";
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& hp = s.hazard[k];
            hcsv << qnames[k] << ',' << g17(hp.t) << ',' << g17(hp.h0_true) << ',' << g17(hp.bias) << ','
                 << g17(hp.sd) << ',' << g17(hp.mean_se) << ',' << g17(hp.coverage) << '\n';
        }
        write_file(dir / "hazard_summary.csv", hcsv.str());

        if (a.per_rep) {
            std::ostringstream rcsv;
            rcsv << "rep,usable,cov_ok,converged,stalled,iterations,smooth_iterations,lambda,D";
            for (std::size_t jix = 0; jix < s.beta.size(); ++jix)
                rcsv << ",beta" << jix + 1 << ",se" << jix + 1;
            rcsv << '\n';
            for (std::size_t r = 0; r < s.reps.size(); ++r) {
                const auto& o = s.reps[r];
                rcsv << r << ',' << (o.usable ? 1 : 0) << ',' << (o.cov_ok ? 1 : 0) << ','
                     << (o.fit_converged ? 1 : 0) << ',' << (o.fit_stalled ? 1 : 0) << ','
                     << o.fit_iterations << ',' << o.smooth_iterations << ',' << g17(o.lambda_final) << ','
                     << g17(o.dist_D);
                for (Eigen::Index jix = 0; jix < static_cast<Eigen::Index>(s.beta.size()); ++jix) {
                    const bool have = o.beta_hat.size() > jix;
                    rcsv << ',' << (have ? g17(o.beta_hat[jix]) : "nan") << ','
                         << (have && o.se_beta.size() > jix ? g17(o.se_beta[jix]) : "nan");
                }
                rcsv << '\n';
            }
            write_file(dir / "reps.csv", rcsv.str());
        }
        std::cerr << "wrote summaries under " << dir.string() << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bases subcommand

struct BasesArgs {
    std::string data_path;
    std::string knots;
    std::string basis = "mspline";
    std::string n_interior = "auto";
    double zeta1 = 0.35;
    double zeta2 = 0.40;
    int grid_points = 200;
};

int run_bases(const BasesArgs& a) {
    using namespace survmpl;
    if (a.data_path.empty() && a.knots.empty())
        throw std::invalid_argument("bases: need --data or --knots");

    const BasisChoice bc = parse_basis_token(a.basis);
    std::vector<double> pool;
    KnotSequence kn;
    if (!a.data_path.empty()) {
        const std::string bytes = read_file(a.data_path);
        std::istringstream in(bytes);
        const Dataset data = load_dataset(in);
        pool = endpoint_pool(data);
        if (!a.knots.empty()) {
            auto kv = parse_double_list(a.knots, "--knots");
            std::sort(kv.begin(), kv.end());
            kn = KnotSequence(Eigen::Map<Eigen::VectorXd>(kv.data(), static_cast<Eigen::Index>(kv.size())));
        } else {
            kn = quantile_knots(pool, parse_n_interior(a.n_interior, data.n()));
        }
    } else {
        auto kv = parse_double_list(a.knots, "--knots");
        std::sort(kv.begin(), kv.end());
        kn = KnotSequence(Eigen::Map<Eigen::VectorXd>(kv.data(), static_cast<Eigen::Index>(kv.size())));
        pool = kv; // scale quantiles fall back to the knots themselves
    }

    const BasisSystem basis = bc.family == BasisFamily::MSpline
                                  ? BasisSystem::mspline(kn, bc.order)
                                  : BasisSystem::gaussian(kn, gaussian_scales(pool, kn, a.zeta1, a.zeta2));

    const auto grid = make_grid(basis.t_min(), basis.t_max(), a.grid_points);
    std::cout << "t,u,psi,Psi\n";
    for (double t : grid) {
        const Eigen::VectorXd psi = basis.psi_vec(t);
        const Eigen::VectorXd Psi = basis.Psi_vec(t);
        for (Eigen::Index u = 0; u < basis.m(); ++u)
            std::cout << g17(t) << ',' << u + 1 << ',' << g17(psi[u]) << ',' << g17(Psi[u]) << '\n';
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"survmpl: penalized-likelihood proportional hazards for partly interval-censored data"};
    app.require_subcommand(1);

    FitArgs fa;
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to a delimited data file");
    fit_cmd->add_option("--data", fa.data_path, "CSV/TSV file with header")->required();
    fit_cmd->add_option("--t-left", fa.t_left_col, "left-endpoint column name");
    fit_cmd->add_option("--t-right", fa.t_right_col, "right-endpoint column name (inf/empty = +infinity)");
    fit_cmd->add_option("--covariates", fa.covariates, "comma list of covariate columns (default: all others)");
    fit_cmd->add_option("--basis", fa.basis, "mspline[k] (order k, default 3) or gaussian");
    fit_cmd->add_option("--n-interior", fa.n_interior, "interior knot count or 'auto'");
    fit_cmd->add_option("--knots", fa.knots, "explicit comma list of all knots (overrides --n-interior)");
    fit_cmd->add_option("--zeta1", fa.zeta1, "Gaussian interior-scale quantile fraction");
    fit_cmd->add_option("--zeta2", fa.zeta2, "Gaussian boundary-scale quantile fraction");
    fit_cmd->add_option("--lambda", fa.lambda, "smoothing parameter or 'auto'");
    fit_cmd->add_option("--covariate-profile", fa.profile, "comma list; emits a survival grid for it");
    fit_cmd->add_option("--out-dir", fa.out_dir, "directory for report.json/report.txt and grid CSVs");
    fit_cmd->add_option("--grid-points", fa.grid_points, "grid resolution")->check(CLI::Range(2, 100000));
    fit_cmd->add_option("--max-iter", fa.max_iter, "iteration budget")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--kkt-tol", fa.kkt_tol, "KKT tolerance");
    fit_cmd->add_flag("--json", fa.emit_json, "print the machine-readable report to stdout");

    SimArgs sa;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo study on a scenario preset");
    sim_cmd->set_config("--config", "", "config file with these options (flags override)");
    sim_cmd->add_option("--scenario", sa.scenario, "scenario preset 1, 2, or 3")
        ->required()
        ->check(CLI::Range(1, 3));
    sim_cmd->add_option("--n", sa.n, "sample size per replication")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--pi-event", sa.pi_event, "event proportion")->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--reps", sa.reps, "replication count")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sa.seed, "RNG seed")->required();
    sim_cmd->add_option("--workers", sa.workers, "worker threads (results are worker-count invariant)")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--basis", sa.basis, "mspline[k] or gaussian");
    sim_cmd->add_option("--n-interior", sa.n_interior, "interior knot count")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--zeta1", sa.zeta1, "Gaussian interior-scale quantile fraction");
    sim_cmd->add_option("--zeta2", sa.zeta2, "Gaussian boundary-scale quantile fraction");
    sim_cmd->add_option("--lambda", sa.lambda, "smoothing parameter or 'auto'");
    sim_cmd->add_option("--out-dir", sa.out_dir, "directory for summary.json and CSVs");
    sim_cmd->add_flag("--per-rep", sa.per_rep, "also write per-replication outcomes (reps.csv)");

    BasesArgs ba;
    CLI::App* bases_cmd = app.add_subcommand("bases", "emit a (t, u, psi, Psi) basis grid as CSV");
    bases_cmd->add_option("--data", ba.data_path, "derive knots from this data file");
    bases_cmd->add_option("--knots", ba.knots, "explicit comma list of all knots");
    bases_cmd->add_option("--basis", ba.basis, "mspline[k] or gaussian");
    bases_cmd->add_option("--n-interior", ba.n_interior, "interior knot count or 'auto' (with --data)");
    bases_cmd->add_option("--zeta1", ba.zeta1, "Gaussian interior-scale quantile fraction");
    bases_cmd->add_option("--zeta2", ba.zeta2, "Gaussian boundary-scale quantile fraction");
    bases_cmd->add_option("--grid-points", ba.grid_points, "grid resolution")->check(CLI::Range(2, 100000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fa);
        if (sim_cmd->parsed()) return run_simulate(sa);
        if (bases_cmd->parsed()) return run_bases(ba);
        std::cerr << "no subcommand\n";
        return kExitInput;
    } catch (const NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNonConvergence;
    } catch (const survmpl::SingularCovarianceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInference;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
