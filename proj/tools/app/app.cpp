#include "app.hpp"

#include "rlq/bsde_engine.hpp"
#include "rlq/errors.hpp"
#include "rlq/riccati.hpp"
#include "rlq/robust_lq.hpp"
#include "rlq/scenario_io.hpp"
#include "rlq/scenario_model.hpp"
#include "rlq/sde_engine.hpp"
#include "rlq/smp_verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rlq::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Scenario failed validation; carries the report for stderr.
struct ValidationFailed {
    json report;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open scenario file " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json flags_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["seed"] = c.seed;
    j["paths"] = c.paths;
    j["steps"] = c.steps ? json(*c.steps) : json(nullptr);
    j["refine"] = c.refine;
    j["tol_gap"] = c.tol_gap ? json(*c.tol_gap) : json(nullptr);
    j["tol_psd"] = c.tol_psd;
    j["delta"] = c.delta;
    if (c.command == "sweep") j["lambda_step"] = c.lambda_step;
    if (c.command == "simulate") {
        j["control"] = c.control;
        j["lambda"] = c.lambda;
        j["dump_paths"] = c.dump_paths;
    }
    return j;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw InternalError("SHA-256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
    return hex.str();
}

void check_config(const RunConfig& c) {
    if (c.paths < 2) throw InputError("--paths must be at least 2");
    if (c.steps && *c.steps < 1) throw InputError("--steps must be at least 1");
    if (c.refine < 1) throw InputError("--refine must be at least 1");
    if (c.tol_gap && !(*c.tol_gap > 0.0)) throw InputError("--tol-gap must be positive");
    if (!(c.tol_psd > 0.0)) throw InputError("--tol-psd must be positive");
    if (!(c.delta > 0.0)) throw InputError("--delta must be positive");
    if (!(c.lambda_step > 0.0 && c.lambda_step <= 1.0)) throw InputError("--lambda-step must lie in (0, 1]");
    if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw InputError("--lambda must lie in [0, 1]");
    if (c.dump_paths < 0) throw InputError("--dump-paths must be non-negative");
    if (c.format == "both" && c.out.empty()) throw InputError("--format both needs --out");
}

json issues_json(const std::vector<ValidationIssue>& issues) {
    json arr = json::array();
    for (const auto& i : issues) {
        arr.push_back({{"check", i.check},
                       {"table", i.table},
                       {"scenario", i.scenario < 0 ? json(nullptr) : json(i.scenario + 1)},
                       {"step", i.step < 0 ? json(nullptr) : json(i.step)},
                       {"value", i.value},
                       {"message", i.message}});
    }
    return arr;
}

json report_json(const ValidationReport& r) {
    json j;
    j["ok"] = r.ok;
    j["margins"] = r.margins;
    if (!r.scenario_margins.empty()) j["scenario_margins"] = r.scenario_margins;
    j["issues"] = issues_json(r.issues);
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

constexpr double kVerifyTolGap = 1e-7;

struct Context {
    const RunConfig& config;
    std::string digest;
    ScenarioSet set;
    std::ostream& out;
};

json header(const Context& ctx) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = ctx.config.command;
    j["config_digest"] = ctx.digest;
    j["scenario"] = ctx.config.scenario.filename().string();
    j["config"] = flags_json(ctx.config);
    return j;
}

void write_text(const RunConfig& c, const std::string& name, const std::string& text) {
    fs::create_directories(c.out);
    std::ofstream f(c.out / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (c.out / name).string());
    f << text;
}

void emit_json(const Context& ctx, const json& report) {
    if (!ctx.config.wants_json()) return;
    const std::string text = report.dump(2) + "\n";
    ctx.out << text;
    if (!ctx.config.out.empty()) write_text(ctx.config, ctx.config.command + ".json", text);
}

/// CSV goes to the output directory; with no directory and csv-only output it
/// is printed instead.
void emit_csv(const Context& ctx, const std::string& name, const std::string& text) {
    if (!ctx.config.wants_csv()) return;
    if (!ctx.config.out.empty()) {
        write_text(ctx.config, name, text);
    } else if (!ctx.config.wants_json()) {
        ctx.out << text;
    }
}

json validation_json(const ScenarioSet& set, double delta) {
    json j;
    const ValidationReport structure = validate_structure(set);
    j["structure"] = report_json(structure);
    const ValidationReport convexity = validate_convexity(set, delta);
    j["convexity"] = report_json(convexity);
    const ValidationReport sufficient = check_sufficient_condition(set);
    j["sufficient_condition"] = report_json(sufficient);
    j["warnings"] = set.warnings;
    j["ok"] = structure.ok && convexity.ok;
    return j;
}

void require_valid(const Context& ctx) {
    json v = validation_json(ctx.set, ctx.config.delta);
    if (!v["ok"].get<bool>()) throw ValidationFailed{std::move(v)};
    if (ctx.set.size() != 2) throw UnsupportedError("this command needs exactly two scenarios");
}

PathEnsemble ensemble(const Context& ctx, std::int64_t paths) {
    PathEnsemble ens(ctx.set.grid, 1, paths, ctx.config.seed);
    try {
        ens.materialize();
    } catch (const CapacityError&) {
        // stays lazy: increments are regenerated on demand with identical values
    }
    return ens;
}

SolveOptions solve_options(const RunConfig& c) {
    SolveOptions o;
    o.tol_gap = c.tol_gap;
    o.riccati.refine = c.refine;
    return o;
}

json solution_json(const RobustSolution& sol) {
    json j;
    j["lambda_star"] = sol.lambda_star;
    j["branch"] = std::string(to_string(sol.branch));
    j["iterations"] = sol.iterations;
    j["bracket"] = {sol.bracket_low, sol.bracket_high};
    json costs = json::array();
    for (std::size_t th = 0; th < sol.costs.size(); ++th) {
        costs.push_back({{"theta", th + 1}, {"y0", sol.costs[th].y0}, {"stderr", sol.costs[th].std_error}});
    }
    j["costs"] = costs;
    j["robust_cost"] = sol.robust_cost;
    j["gap"] = sol.gap;
    j["tol_gap"] = sol.tol_gap;
    const auto& r = sol.riccati;
    j["riccati_diag"] = {{"refine", r.refine},
                         {"min_eig_P", *std::min_element(r.min_eig_P.begin(), r.min_eig_P.end())},
                         {"min_eig_R", *std::min_element(r.min_eig_R.begin(), r.min_eig_R.end())},
                         {"max_asymmetry", r.max_asymmetry}};
    return j;
}

std::string matrix_csv(const std::vector<Matrix>& table) {
    std::ostringstream s;
    s << std::setprecision(17);
    write_matrix_table_csv(table, s);
    return s.str();
}

int cmd_validate(Context& ctx) {
    json report = header(ctx);
    json v = validation_json(ctx.set, ctx.config.delta);
    const bool ok = v["ok"].get<bool>();
    report["n"] = ctx.set.n;
    report["k"] = ctx.set.k;
    report["scenarios"] = ctx.set.size();
    report["steps"] = ctx.set.grid.steps();
    report.update(v);
    emit_json(ctx, report);
    if (!ok) throw ValidationFailed{std::move(v)};
    return 0;
}

int cmd_solve(Context& ctx) {
    require_valid(ctx);
    const PathEnsemble ens = ensemble(ctx, ctx.config.paths);
    const RobustSolution sol = solve_robust(ctx.set, ens, solve_options(ctx.config));
    json report = header(ctx);
    report.update(solution_json(sol));
    emit_json(ctx, report);
    emit_csv(ctx, "riccati_P.csv", matrix_csv(sol.riccati.P));
    emit_csv(ctx, "riccati_K.csv", matrix_csv(sol.riccati.K));
    return 0;
}

json check(const std::string& name, bool pass, double value, double tolerance, const std::string& detail = {}) {
    json j{{"name", name}, {"pass", pass}, {"value", value}, {"tolerance", tolerance}};
    if (!detail.empty()) j["detail"] = detail;
    return j;
}

int cmd_verify(Context& ctx) {
    require_valid(ctx);
    const RunConfig& c = ctx.config;
    const ScenarioSet& set = ctx.set;
    const PathEnsemble ens = ensemble(ctx, c.paths);
    // g(lambda) is deterministic on a fixed ensemble, so unless told otherwise
    // the root is resolved far below the Monte Carlo error; the first-order
    // checks need ubar to be the minimizer on this ensemble, not near it.
    SolveOptions options = solve_options(c);
    if (!options.tol_gap) options.tol_gap = kVerifyTolGap;
    const RobustSolution sol = solve_robust(set, ens, options);
    // Duality and stationarity hold for any control; they run on a prefix.
    const PathEnsemble sub = ensemble(ctx, std::min<std::int64_t>(c.paths, 20000));

    json checks = json::array();
    const ValidationReport suff = check_sufficient_condition(set);
    checks.push_back(check("sufficient_condition", suff.ok,
                           std::min(suff.margins.at("hessian"), suff.margins.at("G")), -c.tol_psd));

    const AggregateMargin agg = check_aggregate_convexity(assemble_blocks(set, sol.lambda_star));
    checks.push_back(check("aggregate_convexity", agg.worst >= -c.tol_psd, agg.worst, -c.tol_psd));

    double min_p = std::numeric_limits<double>::infinity(), scale_p = 0.0;
    for (std::size_t i = 0; i < sol.riccati.P.size(); ++i) {
        min_p = std::min(min_p, sol.riccati.min_eig_P[i]);
        scale_p = std::max(scale_p, max_norm(sol.riccati.P[i]));
    }
    const double tol_p = c.tol_psd * (1.0 + scale_p);
    checks.push_back(check("riccati_psd", min_p >= -tol_p, min_p, -tol_p));

    const double y1 = sol.costs[0].y0, y2 = sol.costs[1].y0;
    bool branch_ok = false;
    switch (sol.branch) {
        case Branch::corner0: branch_ok = y1 <= y2 + sol.tol_gap; break;
        case Branch::corner1: branch_ok = y1 >= y2 - sol.tol_gap; break;
        case Branch::interior:
            branch_ok = std::abs(y1 - y2) <= sol.tol_gap && sol.lambda_star > 0.0 && sol.lambda_star < 1.0;
            break;
    }
    checks.push_back(check("branch_consistency", branch_ok, y1 - y2, sol.tol_gap, std::string(to_string(sol.branch))));

    const StatePaths paths = closed_loop_paths(set, sol.riccati, sub);
    const StationarityResidual st = stationarity_residual(set, sol.riccati, paths);
    checks.push_back(check("stationarity", st.max <= 1e-8, st.max, 1e-8));

    const ControlPath ubar = sol.control();
    const ControlPath dir = ControlPath::constant(set.grid.steps(), Vector::Ones(set.k));
    for (int th = 0; th < 2; ++th) {
        const DualityResult d = duality_gap(set, th, ubar, dir, sub);
        const double tol = std::max(3.0 * d.combined_std_error, 1e-9 * (1.0 + std::abs(d.lhs)));
        checks.push_back(check("duality_theta" + std::to_string(th + 1), d.gap <= tol, d.gap, tol));
    }

    const std::vector<double> rhos{1e-2, 1e-3};
    const double scale = 1.0 + std::abs(sol.robust_cost);
    for (const double sign : {1.0, -1.0}) {
        const ControlPath v = ControlPath::constant(set.grid.steps(), Vector::Constant(set.k, sign));
        const DirectionalDerivative dd = robust_directional_derivative(set, sol, v, rhos, ens);
        // The Riccati feedback is optimal in continuous time; on the Euler grid
        // the gradient at ubar is O(dt).
        const double tol = std::max({3.0 * dd.quotient_std_errors.back(), 1e-3 * scale, 2.0 * set.grid.dt() * scale});
        checks.push_back(check(sign > 0 ? "directional_derivative_plus" : "directional_derivative_minus",
                               dd.quotients.back() >= -tol, dd.quotients.back(), -tol));
    }

    bool all = true;
    for (const auto& ch : checks) all = all && ch["pass"].get<bool>();
    json report = header(ctx);
    report["solution"] = solution_json(sol);
    report["checks"] = checks;
    report["all_passed"] = all;
    emit_json(ctx, report);
    emit_csv(ctx, "riccati_P.csv", matrix_csv(sol.riccati.P));
    emit_csv(ctx, "riccati_K.csv", matrix_csv(sol.riccati.K));
    return all ? 0 : 1;
}

int cmd_sweep(Context& ctx) {
    require_valid(ctx);
    const PathEnsemble ens = ensemble(ctx, ctx.config.paths);
    RiccatiOptions ro;
    ro.refine = ctx.config.refine;
    const std::vector<double> grid = lambda_grid(ctx.config.lambda_step);
    const std::vector<SweepRow> rows = lambda_sweep(ctx.set, ens, grid, ro);

    std::ostringstream csv;
    csv << std::setprecision(17) << "lambda,y1,y2,J\n";
    for (const auto& r : rows) csv << r.lambda << ',' << r.y1 << ',' << r.y2 << ',' << r.J << '\n';

    const auto best_gap = std::min_element(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return std::abs(a.y1 - a.y2) < std::abs(b.y1 - b.y2);
    });
    const auto best_j =
        std::min_element(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.J < b.J; });
    json report = header(ctx);
    report["points"] = rows.size();
    report["argmin_abs_gap"] = {{"lambda", best_gap->lambda}, {"gap", best_gap->y1 - best_gap->y2}};
    report["min_J"] = {{"lambda", best_j->lambda}, {"J", best_j->J}};
    emit_json(ctx, report);
    emit_csv(ctx, "sweep.csv", csv.str());
    return 0;
}

int cmd_simulate(Context& ctx) {
    validate_structure(ctx.set);
    const RunConfig& c = ctx.config;
    const ScenarioSet& set = ctx.set;
    ControlPath law = ControlPath::zero(set.grid.steps(), set.k);
    if (c.control == "riccati") {
        RiccatiOptions ro;
        ro.refine = c.refine;
        const RiccatiSolution ric = solve_riccati(assemble_blocks(set, c.lambda), ro);
        law = ControlPath::feedback(ric.feedback_gain(), {}, "riccati");
    } else if (c.control != "zero") {
        throw InputError("--control must be zero or riccati");
    }
    const PathEnsemble ens(set.grid, 1, c.paths, c.seed);
    const auto samples = stacked_cost_samples(set, law, ens);
    json costs = json::array();
    std::vector<BsdeValue> values;
    for (std::size_t th = 0; th < samples.size(); ++th) {
        values.push_back(summarize(samples[th]));
        costs.push_back({{"theta", th + 1}, {"y0", values.back().y0}, {"stderr", values.back().std_error}});
    }
    const RobustCost rc = robust_cost(values);

    const int dump = static_cast<int>(std::min<std::int64_t>(c.dump_paths, c.paths));
    json report = header(ctx);
    report["control"] = c.control;
    report["costs"] = costs;
    report["robust_cost"] = rc.J;
    report["worst_scenario"] = rc.vertex + 1;
    if (dump > 0) {
        const StatePaths shown = simulate_stacked(set, law, PathEnsemble(set.grid, 1, dump, c.seed));
        report["dumped_paths"] = dump;
        report["sup_second_moment_dumped"] = sup_moment(shown, 2.0).mean;
        std::ostringstream csv;
        csv << std::setprecision(17);
        write_paths_csv(shown, csv);
        emit_json(ctx, report);
        emit_csv(ctx, "paths.csv", csv.str());
    } else {
        emit_json(ctx, report);
    }
    return 0;
}

int cmd_convergence(Context& ctx) {
    const RunConfig& c = ctx.config;
    json report = header(ctx);
    if (!c.scenario.empty()) {
        validate_structure(ctx.set);
        const BlockSystem blocks = ctx.set.size() == 2 ? assemble_blocks(ctx.set, 0.5) : assemble_single(ctx.set, 0);
        RiccatiOptions ro;
        ro.refine = 64;
        const RiccatiSolution ref = solve_riccati(blocks, ro);
        std::vector<double> hs, errs, log_h, log_e;
        for (const int r : {1, 2, 4, 8}) {
            ro.refine = r;
            const RiccatiSolution s = solve_riccati(blocks, ro);
            double e = 0.0;
            for (std::size_t i = 0; i < s.P.size(); ++i) e = std::max(e, max_norm(s.P[i] - ref.P[i]));
            hs.push_back(ctx.set.grid.dt() / r);
            errs.push_back(e);
            if (e > 1e-14) {
                log_h.push_back(std::log(hs.back()));
                log_e.push_back(std::log(e));
            }
        }
        json ric{{"h", hs}, {"errors", errs}};
        ric["order"] = log_h.size() >= 2 ? json(fit_slope(log_h, log_e)) : json(nullptr);
        ric["exact"] = log_h.size() < 2;
        report["riccati_rk4"] = ric;
    }
    ScalarLinearSde problem;
    problem.paths = std::min<std::int64_t>(c.paths, 20000);
    problem.seed = c.seed;
    const std::vector<int> levels{16, 32, 64, 128, 256};
    const ConvergenceFit fit = strong_convergence_order(problem, levels);
    report["euler_strong"] = {{"dt", fit.dts}, {"errors", fit.errors}, {"order", fit.order}, {"exact", fit.exact}};
    emit_json(ctx, report);
    return 0;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::input:
        case ErrorKind::parse:
        case ErrorKind::structural: return 2;
        default: return 1;
    }
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message, json extra = nullptr) {
    json j{{"error", {{"kind", kind}, {"message", message}}}};
    if (!extra.is_null()) j["error"]["details"] = std::move(extra);
    err << j.dump() << '\n';
}

}  // namespace

std::string config_digest(const RunConfig& config, const std::string& scenario_bytes) {
    return sha256_hex(scenario_bytes + '\n' + flags_json(config).dump());
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        check_config(config);
        std::string bytes;
        ScenarioSet set;
        if (!config.scenario.empty()) {
            bytes = read_file(config.scenario);
            set = load_scenario_file(config.scenario);
            if (config.steps && *config.steps != set.grid.steps()) set = with_steps(set, *config.steps);
        } else if (config.command != "convergence") {
            throw InputError("--scenario is required for " + config.command);
        }
        Context ctx{config, config_digest(config, bytes), std::move(set), out};
        if (config.command == "validate") return cmd_validate(ctx);
        if (config.command == "solve") return cmd_solve(ctx);
        if (config.command == "verify") return cmd_verify(ctx);
        if (config.command == "sweep") return cmd_sweep(ctx);
        if (config.command == "simulate") return cmd_simulate(ctx);
        if (config.command == "convergence") return cmd_convergence(ctx);
        throw InputError("unknown command " + config.command);
    } catch (const ValidationFailed& v) {
        print_error(err, "validation", "scenario failed validation", v.report);
        return 2;
    } catch (const ConvergenceError& e) {
        print_error(err, std::string(to_string(e.kind())), e.what(),
                    json{{"bracket", {e.lower(), e.upper()}}, {"gap", e.gap()}});
        return 1;
    } catch (const StructuralError& e) {
        print_error(err, std::string(to_string(e.kind())), e.what(),
                    json{{"table", e.table()}, {"step", e.step() < 0 ? json(nullptr) : json(e.step())}});
        return 2;
    } catch (const Error& e) {
        print_error(err, std::string(to_string(e.kind())), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust LQ control with two scenarios: solve, verify and simulate", "rlq"};
    app.require_subcommand(1);
    RunConfig c;
    std::optional<double> tol_gap;
    std::optional<int> steps;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"validate", "Check scenario structure and convexity"},
        {"solve", "Solve the robust problem by bisection on lambda"},
        {"verify", "Solve, then run the maximum-principle checks"},
        {"sweep", "Evaluate both scenario costs on a lambda grid"},
        {"simulate", "Simulate the stacked state under a fixed control"},
        {"convergence", "Order fits for the Riccati and SDE discretizations"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--scenario", c.scenario, "Scenario file")->required(name != "convergence");
        sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
        sub->add_option("--paths", c.paths, "Monte Carlo paths")->capture_default_str();
        sub->add_option("--steps", steps, "Override the number of time steps");
        sub->add_option("--refine", c.refine, "RK4 substeps per time step")->capture_default_str();
        sub->add_option("--tol-gap", tol_gap, "Equalization tolerance (default: 3 combined std errors)");
        sub->add_option("--tol-psd", c.tol_psd, "Semidefiniteness slack")->capture_default_str();
        sub->add_option("--delta", c.delta, "Coercivity constant for R")->capture_default_str();
        sub->add_option("--out", c.out, "Output directory");
        sub->add_option("--format", c.format, "json, csv or both")
            ->check(CLI::IsMember({"json", "csv", "both"}))
            ->capture_default_str();
        if (name == "sweep") sub->add_option("--lambda-step", c.lambda_step, "Grid spacing")->capture_default_str();
        if (name == "simulate") {
            sub->add_option("--control", c.control, "zero or riccati")
                ->check(CLI::IsMember({"zero", "riccati"}))
                ->capture_default_str();
            sub->add_option("--lambda", c.lambda, "Weight for the riccati control")->capture_default_str();
            sub->add_option("--dump-paths", c.dump_paths, "Paths written to paths.csv")->capture_default_str();
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return 2;
    }
    c.command = app.get_subcommands().front()->get_name();
    c.tol_gap = tol_gap;
    c.steps = steps;
    return run(c, out, err);
}

}  // namespace rlq::app
