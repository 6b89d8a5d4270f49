#include "schrodlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "schrodlab/errors.hpp"
#include "schrodlab/hash.hpp"
#include "schrodlab/heatctrl.hpp"
#include "schrodlab/io.hpp"
#include "schrodlab/lifting.hpp"
#include "schrodlab/specineq.hpp"

namespace schrodlab {

using nlohmann::json;

namespace {

// JSON has no infinity; non-finite values are written as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Context {
    const ExperimentConfig& config;
    Grid grid;
    CubeLattice lattice;
    BasisPtr basis;
    SensorSet sensor;
};

struct StageOutput {
    json summary = json::object();
    std::vector<std::pair<std::string, CsvTable>> tables;
    std::vector<std::pair<std::string, std::string>> texts;  // non-CSV files
};

// Every stage draws from its own stream so results do not depend on which
// stages run or in which order.
std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
    Fnv1a h;
    h.u64(seed).str(to_string(stage));
    return h.value();
}

json fit_json(const LinearFit& f) {
    return {{"slope", num(f.slope)}, {"intercept", num(f.intercept)}, {"stderr", num(f.slope_stderr)},
            {"r2", num(f.r2)},       {"n", f.n}};
}

CsvTable sweep_table(const std::vector<SweepSample>& samples) {
    CsvTable t{{"sweep_var", "n_modes", "lambda_min_gram", "worst_ratio", "log_worst_ratio", "excluded"}, {}};
    for (const SweepSample& s : samples)
        t.rows.push_back({s.var, static_cast<double>(s.n_modes), s.lambda_min_gram, s.ratio, std::log(s.ratio),
                          s.excluded ? 1.0 : 0.0});
    return t;
}

StageOutput run_eig(const Context& ctx) {
    StageOutput out;
    const EigenBasis& b = *ctx.basis;
    CsvTable t{{"index", "lambda"}, {}};
    for (Eigen::Index k = 0; k < b.size(); ++k) t.rows.push_back({static_cast<double>(k), b.eigenvalues()[k]});
    out.tables.emplace_back("eigenvalues.csv", std::move(t));
    const DiscreteOperator op = assemble(ctx.grid, ctx.config.potential);
    out.summary = {{"modes", b.size()},
                   {"cutoff", num(b.cutoff())},
                   {"lambda_min", b.size() ? num(b.eigenvalues()[0]) : json(nullptr)},
                   {"lambda_max", b.size() ? num(b.eigenvalues()[b.size() - 1]) : json(nullptr)},
                   {"potential_min", num(op.min_potential())},
                   {"max_relative_residual", num(max_relative_residual(op, b))},
                   {"grid_hash", b.grid().hash()},
                   {"potential_hash", b.potential_hash()}};
    return out;
}

StageOutput run_specineq(const Context& ctx) {
    StageOutput out;
    std::ostringstream rle;
    write_mask_rle(rle, ctx.sensor);
    out.texts.emplace_back("mask.rle", rle.str());

    const DensityReport dens = verify_density(ctx.sensor, ctx.lattice);
    CsvTable d{{"j0", "j1", "cells", "selected", "measured", "required", "pass"}, {}};
    for (const CubeDensity& c : dens.cubes)
        d.rows.push_back({static_cast<double>(c.j[0]), static_cast<double>(c.j[1]), static_cast<double>(c.cells),
                          static_cast<double>(c.selected), c.measured, c.required, c.pass ? 1.0 : 0.0});
    out.tables.emplace_back("density.csv", std::move(d));

    const double cutoff = ctx.basis->cutoff();
    const GramMatrix g = gram(ctx.basis, ctx.sensor, cutoff);
    const WorstCase w = worst_case(g);
    SweepSample s{cutoff, g.modes(), w.lambda_min, w.ratio, !w.finite()};
    out.tables.emplace_back("specineq.csv", sweep_table({s}));
    out.summary = {{"cutoff", num(cutoff)},
                   {"modes", g.modes()},
                   {"lambda_min_gram", num(w.lambda_min)},
                   {"worst_ratio", num(w.ratio)},
                   {"sensor_measure", num(ctx.sensor.measure())},
                   {"density_pass", dens.pass},
                   {"effective_delta", num(dens.effective_delta)},
                   {"flagged_cubes", ctx.sensor.flagged_cubes.size()}};
    return out;
}

StageOutput run_sweep(const Context& ctx) {
    if (!ctx.config.sweep) throw ConfigError("sweep", "section required by the sweep stage");
    const SweepConfig& sw = *ctx.config.sweep;
    const SensorConfig& sc = ctx.config.sensor;
    StageOutput out;
    json fit;
    if (sw.variable == SweepVariable::delta) {
        const double lambda = sw.lambda.value_or(ctx.basis->cutoff());
        const DeltaSweep ds = delta_sweep(ctx.basis, ctx.lattice, lambda, sw.values, sc.kind, sc.sigma,
                                          ctx.config.sensor_seed(), sc.pattern);
        out.tables.emplace_back("sweep.csv", sweep_table(ds.samples));
        fit = {{"variable", "delta"},      {"theta_hat", num(ds.fit.slope)}, {"stderr", num(ds.fit.slope_stderr)},
               {"r2", num(ds.fit.r2)},     {"theta_star", nullptr},          {"monotone", ds.monotone},
               {"lambda", num(lambda)},    {"fit", fit_json(ds.fit)}};
    } else {
        const ExponentFit ef = sw.variable == SweepVariable::lambda
                                   ? lambda_sweep(ctx.basis, ctx.sensor, sw.values, ctx.config.potential)
                                   : mu_sweep(ctx.basis, ctx.sensor, sw.values);
        out.tables.emplace_back("sweep.csv", sweep_table(ef.samples));
        fit = {{"variable", to_string(sw.variable)},
               {"theta_hat", num(ef.theta_hat())},
               {"stderr", num(ef.fit.slope_stderr)},
               {"r2", num(ef.fit.r2)},
               {"theta_star", ef.theta_star ? num(*ef.theta_star) : json(nullptr)},
               {"theta_star_sharp", ef.theta_star_sharp ? num(*ef.theta_star_sharp) : json(nullptr)},
               {"fit", fit_json(ef.fit)}};
    }
    out.texts.emplace_back("fit.json", fit.dump(2) + "\n");
    out.summary = fit;
    return out;
}

StageOutput run_lift(const Context& ctx) {
    const LiftConfig lc = ctx.config.lift.value_or(LiftConfig{});
    if (lc.lambda > ctx.basis->cutoff()) throw ConfigError("lift.lambda", "exceeds the basis cutoff");
    StageOutput out;
    std::mt19937_64 rng(stage_seed(ctx.config.seed, Stage::lift));
    CsvTable t{{"sample", "lambda", "rho", "lower", "middle", "upper", "lower_slack", "upper_slack", "holds",
                "lift_residual"},
               {}};
    int held = 0;
    double worst_lower = std::numeric_limits<double>::infinity();
    double worst_upper = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lc.samples; ++i) {
        const SpectralElement e = random_unit_element(ctx.basis, lc.lambda, rng);
        const LiftedField f = lift(e, lc.s_max, lc.s_points);
        const SandwichReport r = sandwich_check(f, lc.rho);
        held += r.holds();
        worst_lower = std::min(worst_lower, r.lower_slack());
        worst_upper = std::min(worst_upper, r.upper_slack());
        t.rows.push_back({static_cast<double>(i), r.lambda, r.rho, r.lower, r.middle, r.upper, r.lower_slack(),
                          r.upper_slack(), r.holds() ? 1.0 : 0.0, lift_residual(f)});
    }
    out.tables.emplace_back("lift_sandwich.csv", std::move(t));
    out.summary = {{"samples", lc.samples},
                   {"sandwich_held", held},
                   {"worst_lower_slack", num(worst_lower)},
                   {"worst_upper_slack", num(worst_upper)}};
    if (!lc.doubling_lambdas.empty()) {
        const DoublingCalibration cal =
            calibrate_doubling(ctx.basis, lc.doubling_lambdas, lc.rho, lc.calibration_samples, lc.validation_samples,
                               stage_seed(ctx.config.seed, Stage::lift) + 1, lc.s_points);
        CsvTable d{{"lambda", "decay_radius", "c1_needed", "c2_needed"}, {}};
        for (std::size_t i = 0; i < cal.lambdas.size(); ++i)
            d.rows.push_back({cal.lambdas[i], cal.decay_radii[i], cal.c1_by_lambda[i], cal.c2_by_lambda[i]});
        out.tables.emplace_back("lift_doubling.csv", std::move(d));
        out.summary["doubling"] = {{"c1", num(cal.c1)},
                                   {"c2", num(cal.c2)},
                                   {"validation_c1_ratio", num(cal.validation_c1_ratio)},
                                   {"validation_c2_ratio", num(cal.validation_c2_ratio)},
                                   {"stable", cal.stable()}};
    }
    return out;
}

HeatModel make_model(const Context& ctx, const HeatConfig& hc) {
    const double cutoff = hc.cutoff.value_or(ctx.basis->cutoff());
    if (cutoff > ctx.basis->cutoff()) throw ConfigError("heat.cutoff", "exceeds the basis cutoff");
    return heat_model(ctx.basis, ctx.sensor, cutoff);
}

StageOutput run_observability(const Context& ctx) {
    const HeatConfig hc = ctx.config.heat.value_or(HeatConfig{});
    const TimeSet J = hc.time_set();
    const double beta1 = hc.beta1.value_or(ctx.config.potential.beta1);
    const HeatModel model = make_model(ctx, hc);
    StageOutput out;
    const Observability obs = observability_constant(model, J);
    out.summary = {{"modes", model.modes}, {"T", J.T}, {"J_measure", J.measure()}, {"c_obs", num(obs.c_obs)}};

    const std::uint64_t seed = stage_seed(ctx.config.seed, Stage::observability);
    const double t = hc.t.value_or(J.T / 2.0);
    const InterpolationReport ip = interpolation_check(model, hc.samples, seed, t, hc.tau, beta1);
    CsvTable it{{"sample", "K"}, {}};
    for (std::size_t i = 0; i < ip.k_samples.size(); ++i) it.rows.push_back({static_cast<double>(i), ip.k_samples[i]});
    out.tables.emplace_back("interpolation.csv", std::move(it));
    out.summary["interpolation"] = {{"t", t},
                                    {"tau", hc.tau},
                                    {"k_min", num(ip.k_min)},
                                    {"trend", num(ip.trend)},
                                    {"sigma1", ip.exponents.sigma1},
                                    {"sigma2", ip.exponents.sigma2}};

    if (hc.density) {
        const DensityConfig& dc = *hc.density;
        const DensitySequence seq = density_sequence(dc.k, dc.k1, dc.alpha, dc.m_max);
        CsvTable dt{{"m", "lo", "hi", "measure", "required", "ok"}, {}};
        bool all_ok = true;
        for (const DensityCheck& c : validate_density(seq, J)) {
            dt.rows.push_back({static_cast<double>(c.m), c.lo, c.hi, c.measure, c.required, c.ok ? 1.0 : 0.0});
            all_ok = all_ok && c.ok;
        }
        out.tables.emplace_back("density_sequence.csv", std::move(dt));
        out.summary["density_sequence"] = {{"valid", all_ok}};
        if (all_ok && model.sensor.delta < 1.0) {
            std::mt19937_64 rng(seed + 1);
            const SpectralElement u0 = random_unit_element(ctx.basis, model.lambdas[model.modes - 1], rng);
            const TelescopingTrace tr = telescoping_trace(model, J, u0, seq, dc.a, beta1);
            CsvTable tt{{"m", "k_m", "k_m1", "prefactor", "norm", "difference", "integral", "margin"}, {}};
            for (const TelescopingTerm& term : tr.terms)
                tt.rows.push_back({static_cast<double>(term.m), term.km, term.km1, term.prefactor, term.norm,
                                   term.difference, term.integral, term.margin});
            out.tables.emplace_back("telescoping.csv", std::move(tt));
            out.summary["telescoping"] = {{"c_fit", num(tr.c_fit)},
                                          {"summed_lhs", num(tr.summed_lhs)},
                                          {"summed_rhs", num(tr.summed_rhs)},
                                          {"holds", tr.holds}};
        }
    }

    if (ctx.config.sweep && ctx.config.sweep->variable == SweepVariable::delta) {
        const SensorConfig& sc = ctx.config.sensor;
        const ObservabilitySweep sw =
            observability_sweep(ctx.basis, ctx.lattice, sc.kind, sc.sigma, ctx.config.sensor_seed(), sc.pattern,
                                ctx.config.sweep->values, model.lambdas[model.modes - 1], J, beta1);
        CsvTable st{{"delta", "sigma", "C_obs", "excluded"}, {}};
        for (const ObservabilitySample& s : sw.samples)
            st.rows.push_back({s.delta, s.sigma, s.c_obs, s.excluded ? 1.0 : 0.0});
        out.tables.emplace_back("observability_sweep.csv", std::move(st));
        out.summary["delta_sweep"] = {{"predicted_slope", num(sw.predicted_slope)},
                                      {"fit", sw.fit ? fit_json(*sw.fit) : json(nullptr)}};
    }
    return out;
}

StageOutput run_control(const Context& ctx) {
    const HeatConfig hc = ctx.config.heat.value_or(HeatConfig{});
    const ControlConfig cc = ctx.config.control.value_or(ControlConfig{});
    const TimeSet J = hc.time_set();
    const HeatModel model = make_model(ctx, hc);
    SpectralElement u0;
    if (cc.initial == InitialDatum::ground) {
        u0 = model.element(Eigen::VectorXd::Unit(model.modes, 0));
    } else {
        std::mt19937_64 rng(stage_seed(ctx.config.seed, Stage::control));
        u0 = random_unit_element(ctx.basis, model.lambdas[model.modes - 1], rng);
    }
    const ControlResult r = hum_control(model, J, u0, {cc.epsilon, cc.max_iter, cc.tol});
    StageOutput out;
    CsvTable s{{"t", "grid_index", "value"}, {}};
    s.rows.reserve(r.times.size() * r.support.size());
    for (std::size_t j = 0; j < r.times.size(); ++j)
        for (std::size_t i = 0; i < r.support.size(); ++i)
            s.rows.push_back({r.times[j], static_cast<double>(r.support[i]),
                              r.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
    out.tables.emplace_back("control_samples.csv", std::move(s));
    CsvTable h{{"iteration", "relative_residual"}, {}};
    for (std::size_t i = 0; i < r.residual_history.size(); ++i)
        h.rows.push_back({static_cast<double>(i + 1), r.residual_history[i]});
    out.tables.emplace_back("control_residuals.csv", std::move(h));
    out.summary = {{"modes", model.modes},
                   {"epsilon", r.epsilon},
                   {"iterations", r.iterations},
                   {"u0_norm", num(r.u0_norm)},
                   {"free_norm", num(r.free_norm)},
                   {"terminal_residual", num(r.terminal_residual)},
                   {"model_residual", num(r.model_residual)},
                   {"cost", num(r.cost)},
                   {"cost_upper", num(r.cost_upper)},
                   {"cost_lower", num(r.cost_lower)},
                   {"bounds_hold", r.bounds_hold()},
                   {"support_nodes", r.support.size()},
                   {"time_nodes", r.times.size()}};
    out.texts.emplace_back("control.json", out.summary.dump(2) + "\n");
    return out;
}

StageOutput run_stage(Stage stage, const Context& ctx) {
    switch (stage) {
        case Stage::eig: return run_eig(ctx);
        case Stage::specineq: return run_specineq(ctx);
        case Stage::sweep: return run_sweep(ctx);
        case Stage::lift: return run_lift(ctx);
        case Stage::observability: return run_observability(ctx);
        case Stage::control: return run_control(ctx);
    }
    throw std::logic_error("unknown stage");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::eig: return "eig";
        case Stage::specineq: return "specineq";
        case Stage::sweep: return "sweep";
        case Stage::lift: return "lift";
        case Stage::observability: return "observability";
        case Stage::control: return "control";
    }
    return "unknown";
}

Stage stage_from_string(const std::string& name) {
    if (name == "eig") return Stage::eig;
    if (name == "specineq") return Stage::specineq;
    if (name == "sweep") return Stage::sweep;
    if (name == "lift" || name == "lift-check") return Stage::lift;
    if (name == "observability") return Stage::observability;
    if (name == "control") return Stage::control;
    throw std::invalid_argument("unknown stage '" + name + "'");
}

std::vector<Stage> configured_stages(const ExperimentConfig& c) {
    std::vector<Stage> s{Stage::eig, Stage::specineq};
    if (c.sweep) s.push_back(Stage::sweep);
    if (c.lift) s.push_back(Stage::lift);
    if (c.heat) s.push_back(Stage::observability);
    if (c.control) s.push_back(Stage::control);
    return s;
}

ExperimentReport run_experiment(const ExperimentConfig& input, const std::vector<Stage>& stages,
                                const RunOptions& options) {
    using clock = std::chrono::steady_clock;
    if (options.threads < 1) throw std::invalid_argument("threads must be >= 1");
    ExperimentConfig config = input;
    if (options.seed) config.seed = *options.seed;

    ExperimentReport rep;
    rep.output_dir = options.output_dir.value_or(config.output.dir);
    std::filesystem::create_directories(rep.output_dir);
    const auto context_error = [&](const std::string& stage, const std::exception& e) {
        return std::runtime_error("experiment '" + config.name + "', stage " + stage + ": " + e.what());
    };

    // Eigenbasis, shared by every stage.
    const auto t0 = clock::now();
    const Grid grid = Grid::build(config.domain.dim, config.domain.half_width, config.domain.points_per_axis);
    json cache_log = {{"enabled", options.use_cache}};
    BasisPtr basis;
    try {
        const DiscreteOperator op = assemble(grid, config.potential);
        EigenOptions eo;
        eo.method = config.basis.method;
        if (options.use_cache) {
            const std::filesystem::path dir =
                options.cache_dir.value_or(cache_dir_from_env().value_or(rep.output_dir / "cache"));
            const CacheLookup look = cached_eigensolve(dir, op, config.basis.request(), eo);
            basis = look.basis;
            cache_log["hit"] = look.hit;
            cache_log["file"] = look.file.string();
            if (look.replaced) cache_log["replaced"] = *look.replaced;
        } else {
            basis = eigensolve(op, config.basis.request(), eo);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw context_error("eig", e);
    }
    if (basis->size() == 0) throw std::runtime_error("experiment '" + config.name + "': the basis has no modes");
    const double basis_seconds = std::chrono::duration<double>(clock::now() - t0).count();

    const CubeLattice lattice = cube_lattice(grid, config.sensor.L);
    SensorSet sensor;
    try {
        sensor = make_sensor(grid, lattice, config.sensor.kind, config.sensor.delta, config.sensor.sigma,
                             config.sensor_seed(), config.sensor.pattern);
    } catch (const std::exception& e) {
        throw context_error("sensor", e);
    }
    const Context ctx{config, grid, lattice, basis, sensor};

    // Stages are independent given the basis.
    std::vector<Stage> todo;
    for (Stage s : stages)
        if (std::find(todo.begin(), todo.end(), s) == todo.end()) todo.push_back(s);
    std::vector<StageOutput> outputs(todo.size());
    std::vector<double> seconds(todo.size(), 0.0);
    std::vector<std::exception_ptr> errors(todo.size());
    const auto work = [&](std::size_t i) {
        const auto start = clock::now();
        try {
            outputs[i] = run_stage(todo[i], ctx);
        } catch (...) {
            errors[i] = std::current_exception();
        }
        seconds[i] = std::chrono::duration<double>(clock::now() - start).count();
    };
    if (options.threads == 1 || todo.size() < 2) {
        for (std::size_t i = 0; i < todo.size(); ++i) work(i);
    } else {
        std::size_t next = 0;
        while (next < todo.size()) {
            std::vector<std::future<void>> batch;
            for (int k = 0; k < options.threads && next < todo.size(); ++k, ++next)
                batch.push_back(std::async(std::launch::async, work, next));
            for (auto& f : batch) f.get();
        }
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw context_error(to_string(todo[i]), e);
        }
    }

    // Serialized writes.
    json echo = to_json(input);
    echo["seed"] = config.seed;
    rep.report = {{"config", echo}, {"stages", json::object()}};
    for (std::size_t i = 0; i < todo.size(); ++i) {
        const StageOutput& o = outputs[i];
        rep.report["stages"][to_string(todo[i])] = o.summary;
        if (config.output.csv())
            for (const auto& [name, table] : o.tables) {
                write_csv(rep.output_dir / name, table);
                rep.files.push_back(name);
            }
        for (const auto& [name, text] : o.texts) {
            const bool is_json = name.size() > 5 && name.substr(name.size() - 5) == ".json";
            if (is_json && !config.output.json()) continue;
            write_text(rep.output_dir / name, text);
            rep.files.push_back(name);
        }
    }
    rep.report["files"] = rep.files;
    json timings = {{"basis", basis_seconds}};
    for (std::size_t i = 0; i < todo.size(); ++i) timings[to_string(todo[i])] = seconds[i];
    rep.run_log = {{"timings_seconds", timings}, {"cache", cache_log}, {"threads", options.threads}};
    if (config.output.json()) {
        write_text(rep.output_dir / "report.json", rep.report.dump(2) + "\n");
        write_text(rep.output_dir / "run_log.json", rep.run_log.dump(2) + "\n");
    }
    return rep;
}

}  // namespace schrodlab
