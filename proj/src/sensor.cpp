#include "schrodlab/sensor.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "schrodlab/hash.hpp"

namespace schrodlab {

std::string to_string(SensorKind kind) {
    switch (kind) {
        case SensorKind::decaying_balls: return "decaying_balls";
        case SensorKind::density_random: return "density_random";
        case SensorKind::thick_periodic: return "thick_periodic";
    }
    return "unknown";
}

std::string to_string(ThickPattern pattern) {
    return pattern == ThickPattern::left_slab ? "left_slab" : "alternating";
}

SensorKind sensor_kind_from_string(const std::string& name) {
    if (name == "decaying_balls") return SensorKind::decaying_balls;
    if (name == "density_random") return SensorKind::density_random;
    if (name == "thick_periodic") return SensorKind::thick_periodic;
    throw std::invalid_argument("unknown sensor kind '" + name + "'");
}

ThickPattern thick_pattern_from_string(const std::string& name) {
    if (name == "left_slab") return ThickPattern::left_slab;
    if (name == "alternating") return ThickPattern::alternating;
    throw std::invalid_argument("unknown thick pattern '" + name + "'");
}

std::size_t SensorSet::count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double density_exponent(const Cube& cube, int dim, double sigma) {
    const double r = cube.index_norm(dim);
    return r == 0.0 ? 1.0 : 1.0 + std::pow(r, sigma);
}

namespace {

void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
}

void check_sigma(double sigma) {
    if (!(sigma >= 0.0 && sigma < 1.0)) throw std::invalid_argument("sigma must lie in [0, 1)");
}

SensorSet blank(const Grid& grid, const CubeLattice& lattice, SensorKind kind, double delta, double sigma) {
    SensorSet s;
    s.grid = grid;
    s.mask.assign(grid.size(), 0);
    s.kind = kind;
    s.delta = delta;
    s.sigma = sigma;
    s.side = lattice.side();
    return s;
}

void check_lattice(const Grid& grid, const CubeLattice& lattice) {
    if (lattice.owner().size() != grid.size()) throw std::invalid_argument("cube lattice was built for another grid");
}

}  // namespace

SensorSet decaying_ball_set(const Grid& grid, const CubeLattice& lattice, double delta, double sigma) {
    check_delta(delta);
    check_sigma(sigma);
    check_lattice(grid, lattice);
    SensorSet s = blank(grid, lattice, SensorKind::decaying_balls, delta, sigma);
    const double tol = 1e-9 * grid.spacing();
    for (const Cube& c : lattice.cubes()) {
        const double radius = std::pow(delta, density_exponent(c, grid.dim(), sigma)) * lattice.side();
        bool any = false;
        std::size_t nearest = c.points.front();
        double nearest_d = std::numeric_limits<double>::infinity();
        for (std::size_t idx : c.points) {
            const Point p = grid.point(idx);
            const double d = std::hypot(p[0] - c.center[0], p[1] - c.center[1]);
            if (d <= radius + tol) {
                s.mask[idx] = 1;
                any = true;
            }
            if (d < nearest_d) {
                nearest_d = d;
                nearest = idx;
            }
        }
        if (!any) {
            s.mask[nearest] = 1;
            s.flagged_cubes.push_back(c.j);
        }
    }
    return s;
}

SensorSet density_random_set(const Grid& grid, const CubeLattice& lattice, double delta, double sigma,
                             std::uint64_t seed) {
    check_delta(delta);
    check_sigma(sigma);
    check_lattice(grid, lattice);
    SensorSet s = blank(grid, lattice, SensorKind::density_random, delta, sigma);
    s.seed = seed;
    for (const Cube& c : lattice.cubes()) {
        double required = std::pow(delta, density_exponent(c, grid.dim(), sigma));
        if (required > 1.0) {
            required = 1.0;
            s.flagged_cubes.push_back(c.j);
        }
        const std::size_t n = c.points.size();
        const auto take = std::min(n, static_cast<std::size_t>(std::ceil(required * static_cast<double>(n) - 1e-9)));

        std::vector<std::size_t> order = c.points;
        std::mt19937_64 rng(Fnv1a{}.u64(seed).u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(c.j[0])))
                                .u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(c.j[1])))
                                .value());
        // Partial Fisher-Yates: the first `take` entries are a uniform sample.
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(order[i], order[pick(rng)]);
        }
        for (std::size_t i = 0; i < take; ++i) s.mask[order[i]] = 1;
    }
    return s;
}

SensorSet thick_periodic_set(const Grid& grid, const CubeLattice& lattice, double delta, ThickPattern pattern) {
    check_delta(delta);
    check_lattice(grid, lattice);
    SensorSet s = blank(grid, lattice, SensorKind::thick_periodic, delta, 0.0);
    s.pattern = pattern;
    for (const Cube& c : lattice.cubes()) {
        int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
        for (std::size_t idx : c.points) {
            const int i = grid.unravel(idx)[0];
            lo = std::min(lo, i);
            hi = std::max(hi, i);
        }
        const int planes = hi - lo + 1;
        const int width = std::min(planes, static_cast<int>(std::ceil(delta * planes - 1e-9)));
        const bool high = pattern == ThickPattern::alternating && ((c.j[0] + c.j[1]) % 2 != 0);
        const int first = high ? hi - width + 1 : lo;
        for (std::size_t idx : c.points) {
            const int i = grid.unravel(idx)[0];
            const bool inside = i >= first && i < first + width;
            if (inside) s.mask[idx] = 1;
        }
    }
    return s;
}

DensityReport verify_density(const SensorSet& sensor, const CubeLattice& lattice) {
    check_lattice(sensor.grid, lattice);
    DensityReport report;
    const int dim = sensor.grid.dim();
    auto exponent = [&](const Cube& c) {
        return sensor.kind == SensorKind::thick_periodic ? 1.0 : density_exponent(c, dim, sensor.sigma);
    };

    report.effective_delta = 1.0;
    for (const Cube& c : lattice.cubes()) {
        CubeDensity d;
        d.j = c.j;
        d.cells = c.points.size();
        for (std::size_t idx : c.points) d.selected += sensor.mask[idx];
        d.measured = static_cast<double>(d.selected) / static_cast<double>(d.cells);
        report.effective_delta = std::min(report.effective_delta, std::pow(d.measured, 1.0 / exponent(c)));
        report.cubes.push_back(d);
    }

    const double delta = sensor.kind == SensorKind::decaying_balls ? report.effective_delta : sensor.delta;
    for (std::size_t k = 0; k < report.cubes.size(); ++k) {
        CubeDensity& d = report.cubes[k];
        d.required = std::min(1.0, std::pow(delta, exponent(lattice.cubes()[k])));
        // Ball sets use the delta computed from these very ratios; the pow
        // round trip can lose an ulp.
        const double slack = 1.0 / static_cast<double>(d.cells) + 1e-12;
        d.pass = d.measured >= d.required - slack;
        report.pass = report.pass && d.pass;
    }
    return report;
}

void write_mask_rle(std::ostream& out, const SensorSet& sensor) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::snprintf(buf, sizeof buf, "%016" PRIx64, sensor.grid.hash());
    const std::string hash = buf;

    out << "schrodlab-mask 1\n";
    out << "kind " << to_string(sensor.kind) << "\n";
    out << "delta " << num(sensor.delta) << "\n";
    out << "sigma " << num(sensor.sigma) << "\n";
    out << "side " << num(sensor.side) << "\n";
    out << "seed " << (sensor.seed ? std::to_string(*sensor.seed) : std::string("none")) << "\n";
    out << "pattern " << to_string(sensor.pattern) << "\n";
    out << "grid_hash " << hash << "\n";
    out << "dim " << sensor.grid.dim() << "\n";
    out << "points_per_axis " << sensor.grid.points_per_axis() << "\n";
    out << "half_width " << num(sensor.grid.half_width()) << "\n";
    out << "flagged";
    for (const auto& j : sensor.flagged_cubes) out << " " << j[0] << "," << j[1];
    out << "\n";

    std::vector<std::size_t> runs;
    std::uint8_t current = 0;
    std::size_t length = 0;
    for (std::uint8_t m : sensor.mask) {
        if (m != current) {
            runs.push_back(length);
            current = m;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    out << "runs " << runs.size() << "\n";
    for (std::size_t i = 0; i < runs.size(); ++i) out << runs[i] << (i + 1 == runs.size() ? "\n" : " ");
}

SensorSet read_mask_rle(std::istream& in, const Grid& grid) {
    auto fail = [](const std::string& why) { return std::runtime_error("mask file: " + why); };
    std::string line;
    if (!std::getline(in, line) || line != "schrodlab-mask 1") throw fail("missing or unsupported header");

    std::map<std::string, std::string> header;
    std::size_t run_count = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        if (key == "runs") {
            run_count = std::stoull(rest);
            break;
        }
        header[key] = rest;
    }
    for (const char* key : {"kind", "delta", "sigma", "side", "seed", "pattern", "grid_hash"}) {
        if (!header.count(key)) throw fail(std::string("missing field '") + key + "'");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, grid.hash());
    if (header["grid_hash"] != buf) throw fail("grid hash " + header["grid_hash"] + " does not match grid " + buf);

    SensorSet s;
    s.grid = grid;
    s.kind = sensor_kind_from_string(header["kind"]);
    s.delta = std::stod(header["delta"]);
    s.sigma = std::stod(header["sigma"]);
    s.side = std::stod(header["side"]);
    if (header["seed"] != "none") s.seed = std::stoull(header["seed"]);
    s.pattern = thick_pattern_from_string(header["pattern"]);
    {
        std::istringstream fs(header["flagged"]);
        std::string item;
        while (fs >> item) {
            const auto comma = item.find(',');
            if (comma == std::string::npos) throw fail("bad flagged cube '" + item + "'");
            s.flagged_cubes.push_back({std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1))});
        }
    }

    s.mask.reserve(grid.size());
    std::uint8_t value = 0;
    for (std::size_t r = 0; r < run_count; ++r) {
        std::size_t length = 0;
        if (!(in >> length)) throw fail("truncated run list");
        if (s.mask.size() + length > grid.size()) throw fail("runs exceed grid size");
        s.mask.insert(s.mask.end(), length, value);
        value ^= 1;
    }
    if (s.mask.size() != grid.size()) throw fail("runs cover " + std::to_string(s.mask.size()) + " of " +
                                                 std::to_string(grid.size()) + " nodes");
    return s;
}

}  // namespace schrodlab
