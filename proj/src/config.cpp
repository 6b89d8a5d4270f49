#include "schrodlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>

#include "schrodlab/errors.hpp"

namespace schrodlab {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads the fields of one JSON object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    std::string path(const std::string& key) const { return join(path_, key); }
    const json& at(const std::string& key) const { return j_.at(key); }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        return as_number(at(key), path(key));
    }
    std::optional<double> number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_number(at(key), path(key));
    }
    long long integer(const std::string& key, long long fallback) {
        if (!has(key)) return fallback;
        return as_integer(at(key), path(key));
    }
    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        if (!at(key).is_string()) throw ConfigError(path(key), "must be a string");
        return at(key).get<std::string>();
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) return fallback;
        const json& a = at(key);
        if (!a.is_array()) throw ConfigError(path(key), "must be an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], path(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
    }

    static double as_number(const json& v, const std::string& p) {
        if (!v.is_number()) throw ConfigError(p, "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(p, "must be finite");
        return d;
    }
    static long long as_integer(const json& v, const std::string& p) {
        if (v.is_number_integer()) {
            if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<long long>::max()))
                throw ConfigError(p, "integer out of range");
            return v.get<long long>();
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
        }
        throw ConfigError(p, "must be an integer");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& reason) {
    if (!ok) throw ConfigError(path, reason);
}

template <class F>
auto enum_field(Section& s, const std::string& key, const std::string& fallback, F parse) {
    const std::string name = s.string(key, fallback);
    try {
        return parse(name);
    } catch (const std::invalid_argument&) {
        throw ConfigError(s.path(key), "unknown value '" + name + "'");
    }
}

EigenMethod eigen_method_from_string(const std::string& name) {
    if (name == "automatic") return EigenMethod::automatic;
    if (name == "dense") return EigenMethod::dense;
    if (name == "lanczos") return EigenMethod::lanczos;
    throw std::invalid_argument(name);
}

SweepVariable sweep_variable_from_string(const std::string& name) {
    if (name == "lambda") return SweepVariable::lambda;
    if (name == "mu") return SweepVariable::mu;
    if (name == "delta") return SweepVariable::delta;
    throw std::invalid_argument(name);
}

InitialDatum initial_from_string(const std::string& name) {
    if (name == "random") return InitialDatum::random;
    if (name == "ground") return InitialDatum::ground;
    throw std::invalid_argument(name);
}

DomainConfig parse_domain(const json& j) {
    Section s(j, "domain");
    DomainConfig d;
    d.dim = static_cast<int>(s.integer("dim", d.dim));
    require(d.dim == 1 || d.dim == 2, "domain.dim", "must be 1 or 2");
    d.half_width = s.number("half_width", d.half_width);
    require(d.half_width > 0.0, "domain.half_width", "must be positive");
    const long long n = s.integer("points_per_axis", d.points_per_axis);
    require(n >= 3 && n <= 1'000'000, "domain.points_per_axis", "must lie in [3, 1000000]");
    d.points_per_axis = static_cast<int>(n);
    s.finish();
    return d;
}

Potential parse_potential(const json& j) {
    Section s(j, "potential");
    const PotentialKind kind = enum_field(s, "kind", "polynomial_radial", potential_kind_from_string);
    Potential p;
    const double beta1 = s.number("beta1", 2.0);
    require(beta1 > 0.0, "potential.beta1", "must be positive");
    std::optional<json> params;
    if (s.has("params")) params = s.at("params");
    double depth = 2.0;
    double width = 1.0;
    std::vector<double> coefficients;
    std::vector<double> table;
    if (params) {
        Section ps(*params, "potential.params");
        depth = ps.number("depth", depth);
        width = ps.number("width", width);
        require(width > 0.0, "potential.params.width", "must be positive");
        coefficients = ps.numbers("coefficients", {});
        for (std::size_t i = 0; i < coefficients.size(); ++i)
            require(coefficients[i] >= 0.0, "potential.params.coefficients[" + std::to_string(i) + "]",
                    "must be nonnegative");
        table = ps.numbers("table", {});
        ps.finish();
    }
    switch (kind) {
        case PotentialKind::polynomial_radial:
        case PotentialKind::polynomial_aniso:
        case PotentialKind::tabulated:
            p = Potential::polynomial_radial(beta1);
            break;
        case PotentialKind::bounded_well:
            p = Potential::bounded_well(depth, width);
            p.beta1 = beta1;
            p.beta2 = beta1;
            break;
    }
    p.kind = kind;
    if (kind == PotentialKind::polynomial_aniso) p.coefficients = coefficients;
    if (kind == PotentialKind::tabulated) {
        require(!table.empty(), "potential.params.table", "required for a tabulated potential");
        p.table = table;
    }
    p.beta2 = s.number("beta2", p.beta2);
    require(p.beta2 > 0.0, "potential.beta2", "must be positive");
    p.c1 = s.number("c1", p.c1);
    require(p.c1 > 0.0, "potential.c1", "must be positive");
    p.c2 = s.number("c2", p.c2);
    require(p.c2 > 0.0, "potential.c2", "must be positive");
    p.C0 = s.number("C0", p.C0);
    require(p.C0 >= 0.0, "potential.C0", "must be nonnegative");
    p.R = s.number("R", p.R);
    require(p.R >= 0.0, "potential.R", "must be nonnegative");
    s.finish();
    return p;
}

BasisConfig parse_basis(const json& j) {
    Section s(j, "basis");
    BasisConfig b;
    b.lambda_max = s.number("lambda_max");
    if (s.has("count")) {
        const long long c = Section::as_integer(s.at("count"), "basis.count");
        require(c >= 1 && c <= 1'000'000, "basis.count", "must lie in [1, 1000000]");
        b.count = static_cast<int>(c);
    }
    require(!(b.lambda_max && b.count), "basis", "give lambda_max or count, not both");
    b.method = enum_field(s, "method", "automatic", eigen_method_from_string);
    s.finish();
    return b;
}

SensorConfig parse_sensor(const json& j) {
    Section s(j, "sensor");
    SensorConfig c;
    c.kind = enum_field(s, "kind", to_string(c.kind), sensor_kind_from_string);
    c.delta = s.number("delta", c.delta);
    require(c.delta > 0.0 && c.delta <= 1.0, "sensor.delta", "must lie in (0, 1]");
    c.sigma = s.number("sigma", c.sigma);
    require(c.sigma >= 0.0 && c.sigma < 1.0, "sensor.sigma", "must lie in [0, 1)");
    c.L = s.number("L", c.L);
    require(c.L > 0.0, "sensor.L", "must be positive");
    if (s.has("seed")) {
        const long long v = Section::as_integer(s.at("seed"), "sensor.seed");
        require(v >= 0, "sensor.seed", "must be nonnegative");
        c.seed = static_cast<std::uint64_t>(v);
    }
    c.pattern = enum_field(s, "pattern", to_string(c.pattern), thick_pattern_from_string);
    s.finish();
    return c;
}

SweepConfig parse_sweep(const json& j) {
    Section s(j, "sweep");
    SweepConfig c;
    c.variable = enum_field(s, "variable", "lambda", sweep_variable_from_string);
    c.values = s.numbers("values", {});
    require(!c.values.empty(), "sweep.values", "must be a nonempty array");
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        const std::string p = "sweep.values[" + std::to_string(i) + "]";
        require(c.values[i] > 0.0, p, "must be positive");
        if (c.variable == SweepVariable::delta) require(c.values[i] <= 1.0, p, "a delta must lie in (0, 1]");
    }
    if (c.variable != SweepVariable::delta) require(c.values.size() >= 4, "sweep.values", "needs at least 4 values");
    if (c.variable == SweepVariable::lambda) {
        const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
        require(*hi >= 10.0 * *lo, "sweep.values", "lambda values must span at least a decade");
    }
    c.lambda = s.number("lambda");
    if (c.lambda) require(*c.lambda > 0.0, "sweep.lambda", "must be positive");
    s.finish();
    return c;
}

LiftConfig parse_lift(const json& j) {
    Section s(j, "lift");
    LiftConfig c;
    c.rho = s.number("rho", c.rho);
    require(c.rho > 0.0, "lift.rho", "must be positive");
    c.s_max = s.number("s_max", c.s_max);
    require(c.s_max >= c.rho, "lift.s_max", "must be at least rho");
    const long long pts = s.integer("s_points", c.s_points);
    require(pts >= 3 && pts % 2 == 1 && pts <= 100001, "lift.s_points", "must be odd and in [3, 100001]");
    c.s_points = static_cast<int>(pts);
    const double steps = c.rho * (c.s_points - 1) / (2.0 * c.s_max);
    require(std::abs(steps - std::round(steps)) <= 1e-6, "lift.s_points",
            "the s spacing 2 s_max / (s_points - 1) must divide rho");
    c.lambda = s.number("lambda", c.lambda);
    c.samples = static_cast<int>(s.integer("samples", c.samples));
    require(c.samples >= 1, "lift.samples", "must be >= 1");
    c.doubling_lambdas = s.numbers("doubling_lambdas", {});
    if (!c.doubling_lambdas.empty()) {
        require(c.s_max >= 4.0 * c.rho, "lift.s_max", "must be at least 4 rho for the doubling calibration");
        // The calibration lifts onto [-4 rho, 4 rho] and integrates over rho / 2.
        require((c.s_points - 1) % 16 == 0, "lift.s_points", "s_points - 1 must be a multiple of 16 for the doubling calibration");
    }
    c.calibration_samples = static_cast<int>(s.integer("calibration_samples", c.calibration_samples));
    require(c.calibration_samples >= 1, "lift.calibration_samples", "must be >= 1");
    c.validation_samples = static_cast<int>(s.integer("validation_samples", c.validation_samples));
    require(c.validation_samples >= 1, "lift.validation_samples", "must be >= 1");
    s.finish();
    return c;
}

DensityConfig parse_density(const json& j) {
    Section s(j, "heat.density");
    DensityConfig c;
    c.k = s.number("k", c.k);
    c.k1 = s.number("k1", c.k1);
    require(c.k < c.k1, "heat.density.k1", "must exceed k");
    c.alpha = s.number("alpha", c.alpha);
    require(c.alpha > 1.0, "heat.density.alpha", "must exceed 1");
    const long long m = s.integer("m_max", c.m_max);
    require(m >= 1 && m <= 60, "heat.density.m_max", "must lie in [1, 60]");
    c.m_max = static_cast<int>(m);
    c.a = s.number("a", c.a);
    require(c.a > 0.0, "heat.density.a", "must be positive");
    s.finish();
    return c;
}

HeatConfig parse_heat(const json& j) {
    Section s(j, "heat");
    HeatConfig c;
    c.T = s.number("T", c.T);
    require(c.T > 0.0, "heat.T", "must be positive");
    if (s.has("J_intervals")) {
        const json& a = s.at("J_intervals");
        require(a.is_array(), "heat.J_intervals", "must be an array of [a, b] pairs");
        c.J.clear();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string p = "heat.J_intervals[" + std::to_string(i) + "]";
            require(a[i].is_array() && a[i].size() == 2, p, "must be an [a, b] pair");
            c.J.push_back({Section::as_number(a[i][0], p + "[0]"), Section::as_number(a[i][1], p + "[1]")});
        }
    }
    c.nodes_per_interval = static_cast<int>(s.integer("nodes_per_interval", c.nodes_per_interval));
    try {
        (void)TimeSet::make(c.T, c.J, c.nodes_per_interval);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("heat.J_intervals", e.what());
    }
    c.tau = s.number("tau", c.tau);
    require(c.tau > 0.0 && c.tau < 1.0, "heat.tau", "must lie in (0, 1)");
    c.t = s.number("t");
    if (c.t) require(*c.t > 0.0, "heat.t", "must be positive");
    c.beta1 = s.number("beta1");
    if (c.beta1) require(*c.beta1 > 0.0, "heat.beta1", "must be positive");
    c.cutoff = s.number("cutoff");
    c.samples = static_cast<int>(s.integer("samples", c.samples));
    require(c.samples >= 1, "heat.samples", "must be >= 1");
    if (s.has("density")) {
        c.density = parse_density(s.at("density"));
        require(c.density->k1 <= c.T, "heat.density.k1", "must not exceed heat.T");
    }
    s.finish();
    return c;
}

ControlConfig parse_control(const json& j) {
    Section s(j, "control");
    ControlConfig c;
    c.epsilon = s.number("epsilon", c.epsilon);
    require(c.epsilon > 0.0, "control.epsilon", "must be positive");
    const long long it = s.integer("max_iter", c.max_iter);
    require(it >= 1 && it <= 1'000'000, "control.max_iter", "must lie in [1, 1000000]");
    c.max_iter = static_cast<int>(it);
    c.tol = s.number("tol", c.tol);
    require(c.tol > 0.0, "control.tol", "must be positive");
    c.initial = enum_field(s, "initial", "random", initial_from_string);
    s.finish();
    return c;
}

OutputConfig parse_output(const json& j) {
    Section s(j, "output");
    OutputConfig c;
    c.dir = s.string("dir", c.dir.string());
    require(!c.dir.empty(), "output.dir", "must not be empty");
    if (s.has("formats")) {
        const json& a = s.at("formats");
        require(a.is_array(), "output.formats", "must be an array of strings");
        c.formats.clear();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string p = "output.formats[" + std::to_string(i) + "]";
            require(a[i].is_string(), p, "must be a string");
            const std::string f = a[i].get<std::string>();
            require(f == "csv" || f == "json", p, "must be \"csv\" or \"json\"");
            c.formats.push_back(f);
        }
    }
    s.finish();
    return c;
}

}  // namespace

EigenRequest BasisConfig::request() const {
    if (count) return EigenRequest::lowest(*count);
    return EigenRequest::below(lambda_max.value_or(60.0));
}

TimeSet HeatConfig::time_set() const { return TimeSet::make(T, J, nodes_per_interval); }

bool OutputConfig::csv() const { return std::find(formats.begin(), formats.end(), "csv") != formats.end(); }
bool OutputConfig::json() const { return std::find(formats.begin(), formats.end(), "json") != formats.end(); }

std::string to_string(SweepVariable v) {
    switch (v) {
        case SweepVariable::lambda: return "lambda";
        case SweepVariable::mu: return "mu";
        case SweepVariable::delta: return "delta";
    }
    return "lambda";
}

std::string to_string(InitialDatum v) { return v == InitialDatum::ground ? "ground" : "random"; }

std::string to_string(EigenMethod m) {
    switch (m) {
        case EigenMethod::automatic: return "automatic";
        case EigenMethod::dense: return "dense";
        case EigenMethod::lanczos: return "lanczos";
    }
    return "automatic";
}

ExperimentConfig parse_config(const json& doc) {
    Section s(doc, "");
    ExperimentConfig c;
    c.name = s.string("name", c.name);
    if (s.has("seed")) {
        const long long v = Section::as_integer(s.at("seed"), "seed");
        require(v >= 0, "seed", "must be nonnegative");
        c.seed = static_cast<std::uint64_t>(v);
    }
    if (s.has("domain")) c.domain = parse_domain(s.at("domain"));
    if (s.has("potential")) c.potential = parse_potential(s.at("potential"));
    if (s.has("basis")) c.basis = parse_basis(s.at("basis"));
    if (s.has("sensor")) c.sensor = parse_sensor(s.at("sensor"));
    if (s.has("sweep")) c.sweep = parse_sweep(s.at("sweep"));
    if (s.has("lift")) c.lift = parse_lift(s.at("lift"));
    if (s.has("heat")) c.heat = parse_heat(s.at("heat"));
    if (s.has("control")) c.control = parse_control(s.at("control"));
    if (s.has("output")) c.output = parse_output(s.at("output"));
    s.finish();

    // Cross-field checks.
    try {
        (void)Grid::build(c.domain.dim, c.domain.half_width, c.domain.points_per_axis);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("domain", e.what());
    }
    try {
        (void)cube_lattice(Grid::build(c.domain.dim, c.domain.half_width, c.domain.points_per_axis), c.sensor.L);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("sensor.L", e.what());
    }
    if (c.potential.kind == PotentialKind::tabulated) {
        const std::size_t nodes = static_cast<std::size_t>(std::pow(c.domain.points_per_axis, c.domain.dim));
        require(c.potential.table.size() == nodes, "potential.params.table",
                "needs one value per grid node (" + std::to_string(nodes) + ")");
    }
    if (c.potential.kind == PotentialKind::polynomial_aniso && !c.potential.coefficients.empty())
        require(c.potential.coefficients.size() == static_cast<std::size_t>(c.domain.dim),
                "potential.params.coefficients", "needs one value per axis");
    if (c.sweep && c.sweep->variable == SweepVariable::mu)
        require(c.sensor.kind == SensorKind::thick_periodic, "sweep.variable", "a mu sweep needs a thick sensor");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("(file)", "cannot read " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("(file)", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["domain"] = {{"dim", c.domain.dim}, {"half_width", c.domain.half_width}, {"points_per_axis", c.domain.points_per_axis}};
    const Potential& p = c.potential;
    json pot = {{"kind", to_string(p.kind)}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"c1", p.c1},
                {"c2", p.c2},           {"C0", p.C0},       {"R", p.R}};
    json params = json::object();
    if (p.kind == PotentialKind::bounded_well) params = {{"depth", p.depth}, {"width", p.width}};
    if (p.kind == PotentialKind::polynomial_aniso) params["coefficients"] = p.coefficients;
    if (p.kind == PotentialKind::tabulated) params["table"] = p.table;
    pot["params"] = params;
    j["potential"] = pot;
    json basis = {{"method", to_string(c.basis.method)}};
    if (c.basis.count)
        basis["count"] = *c.basis.count;
    else
        basis["lambda_max"] = c.basis.lambda_max.value_or(60.0);
    j["basis"] = basis;
    json sensor = {{"kind", to_string(c.sensor.kind)}, {"delta", c.sensor.delta}, {"sigma", c.sensor.sigma},
                   {"L", c.sensor.L},                  {"pattern", to_string(c.sensor.pattern)}};
    if (c.sensor.seed) sensor["seed"] = *c.sensor.seed;
    j["sensor"] = sensor;
    if (c.sweep) {
        json sw = {{"variable", to_string(c.sweep->variable)}, {"values", c.sweep->values}};
        if (c.sweep->lambda) sw["lambda"] = *c.sweep->lambda;
        j["sweep"] = sw;
    }
    if (c.lift) {
        const LiftConfig& l = *c.lift;
        j["lift"] = {{"rho", l.rho},
                     {"s_max", l.s_max},
                     {"s_points", l.s_points},
                     {"lambda", l.lambda},
                     {"samples", l.samples},
                     {"doubling_lambdas", l.doubling_lambdas},
                     {"calibration_samples", l.calibration_samples},
                     {"validation_samples", l.validation_samples}};
    }
    if (c.heat) {
        const HeatConfig& h = *c.heat;
        json iv = json::array();
        for (const Interval& i : h.J) iv.push_back({i.a, i.b});
        json heat = {{"T", h.T}, {"J_intervals", iv}, {"nodes_per_interval", h.nodes_per_interval},
                     {"tau", h.tau}, {"samples", h.samples}};
        if (h.t) heat["t"] = *h.t;
        if (h.beta1) heat["beta1"] = *h.beta1;
        if (h.cutoff) heat["cutoff"] = *h.cutoff;
        if (h.density)
            heat["density"] = {{"k", h.density->k},         {"k1", h.density->k1}, {"alpha", h.density->alpha},
                               {"m_max", h.density->m_max}, {"a", h.density->a}};
        j["heat"] = heat;
    }
    if (c.control) {
        j["control"] = {{"epsilon", c.control->epsilon},
                        {"max_iter", c.control->max_iter},
                        {"tol", c.control->tol},
                        {"initial", to_string(c.control->initial)}};
    }
    j["output"] = {{"dir", c.output.dir.string()}, {"formats", c.output.formats}};
    return j;
}

}  // namespace schrodlab
