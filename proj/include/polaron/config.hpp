#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "polaron/fock.hpp"

// Experiment configuration: a flat, typed key-value text format.  Unknown or
// inapplicable keys are hard errors (a misspelled physics parameter must not
// silently default), and serialization is canonical so that configurations
// round-trip bit-exactly and hash stably.
//
// Grammar: one `key = value` pair per line; `#` starts a comment; blank
// lines ignored.  Lists are comma-separated.

namespace polaron {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    // grid
    int grid_n = 64;
    double grid_length = 16.0;
    // potential: gaussian-well | double-well | zero
    std::string potential_family = "gaussian-well";
    double potential_depth = 0.05;   // V = -depth at the well center
    double potential_width = 2.0;
    double potential_center = 8.0;
    double potential_depth2 = 0.0;   // double-well only
    double potential_width2 = 1.0;
    double potential_center2 = 0.0;
    // interaction: gaussian | cosine-packet
    std::string interaction_family = "gaussian";
    double interaction_amplitude = 0.5;
    double interaction_width = 2.0;  // gaussian only
    int interaction_harmonics = 1;   // cosine-packet only
    double interaction_center = 0.0;
    // physics
    double mass = 1.0;
    int modes = 3;
    int cutoff_safety = 4;
    std::vector<double> alphas = {1.0};
    // solvers
    double pekar_tolerance = 1e-8;
    int pekar_max_iterations = 50000;
    double lanczos_tolerance = 1e-9;
    int lanczos_max_matvecs = 60000;
    // diagnostics
    std::vector<double> localization_radii = {2.0, 4.0};
    int husimi_mode = 0;
    double husimi_extent = 6.0;  // quadrature half-width in units of 1/alpha
    int husimi_cells = 121;
    // bookkeeping
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    bool operator==(const ExperimentConfig&) const = default;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;
    std::string hash() const;
    std::uint64_t hash_u64() const;

    Grid make_grid() const { return Grid(grid_n, grid_length); }

    Field make_potential(const Grid& g) const {
        if (potential_family == "zero") return Field(g);
        if (potential_family == "gaussian-well")
            return gaussian(g, -potential_depth, potential_center, potential_width);
        if (potential_family == "double-well") {
            Field a = gaussian(g, -potential_depth, potential_center, potential_width);
            Field b = gaussian(g, -potential_depth2, potential_center2, potential_width2);
            return Field(g, a.values() + b.values());
        }
        throw ConfigError("unknown potential.family '" + potential_family + "'");
    }

    Field make_interaction(const Grid& g) const {
        if (interaction_family == "gaussian")
            return gaussian(g, interaction_amplitude, interaction_center, interaction_width);
        if (interaction_family == "cosine-packet") {
            const int p = interaction_harmonics;
            return field_from(g, [&](double x) {
                double acc = 1.0;
                for (int q = 1; q <= p; ++q)
                    acc += std::cos(2.0 * pi * q * (x - interaction_center) / g.length());
                return Complex(interaction_amplitude * acc / (1.0 + p), 0.0);
            });
        }
        throw ConfigError("unknown interaction.family '" + interaction_family + "'");
    }

    PekarProblem make_problem() const {
        Grid g = make_grid();
        return PekarProblem(g, make_potential(g), make_interaction(g), mass);
    }

    MinimizeOptions pekar_options() const {
        MinimizeOptions opts;
        opts.tolerance = pekar_tolerance;
        opts.max_iterations = pekar_max_iterations;
        opts.seed = seed;
        return opts;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct ConfigScanner {
    std::map<std::string, std::pair<std::string, int>> entries;  // key -> (value, line)
    std::map<std::string, bool> consumed;

    explicit ConfigScanner(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash_pos = line.find('#');
            if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (entries.count(key))
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
            entries[key] = {value, lineno};
        }
    }

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string raw(const std::string& key) {
        auto it = entries.find(key);
        if (it == entries.end()) throw ConfigError("config: missing required key '" + key + "'");
        consumed[key] = true;
        return it->second.first;
    }

    std::string get_string(const std::string& key, const std::string& fallback = "",
                           bool required = false) {
        if (!has(key)) {
            if (required) throw ConfigError("config: missing required key '" + key + "'");
            return fallback;
        }
        return raw(key);
    }

    double get_double(const std::string& key, double fallback, bool required = false) {
        if (!has(key)) {
            if (required) throw ConfigError("config: missing required key '" + key + "'");
            return fallback;
        }
        const int line = entries[key].second;
        const std::string v = raw(key);
        try {
            size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                              "' expects a number, got '" + v + "'");
        }
    }

    int get_int(const std::string& key, int fallback, bool required = false) {
        const double d = get_double(key, fallback, required);
        const int i = static_cast<int>(d);
        if (static_cast<double>(i) != d)
            throw ConfigError("config: key '" + key + "' expects an integer");
        return i;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const int line = entries[key].second;
        const std::string v = raw(key);
        try {
            size_t pos = 0;
            const std::uint64_t out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                              "' expects an unsigned integer, got '" + v + "'");
        }
    }

    std::vector<double> get_list(const std::string& key, std::vector<double> fallback,
                                 bool required = false) {
        if (!has(key)) {
            if (required) throw ConfigError("config: missing required key '" + key + "'");
            return fallback;
        }
        const int line = entries[key].second;
        const std::string v = raw(key);
        std::vector<double> out;
        std::istringstream items(v);
        std::string item;
        while (std::getline(items, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw ConfigError("config line " + std::to_string(line) + ": empty list item in '" +
                                  key + "'");
            try {
                size_t pos = 0;
                out.push_back(std::stod(item, &pos));
                if (pos != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                                  "' expects numbers, got '" + item + "'");
            }
        }
        if (out.empty())
            throw ConfigError("config line " + std::to_string(line) + ": empty list for '" + key + "'");
        return out;
    }

    void reject_unconsumed() const {
        for (const auto& [key, value] : entries)
            if (!consumed.count(key))
                throw ConfigError("config line " + std::to_string(value.second) +
                                  ": unknown key '" + key + "'");
    }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    detail::ConfigScanner scan(text);
    ExperimentConfig c;
    c.grid_n = scan.get_int("grid.n", 0, true);
    c.grid_length = scan.get_double("grid.L", 0.0, true);

    c.potential_family = scan.get_string("potential.family", "", true);
    if (c.potential_family == "zero") {
        c.potential_depth = c.potential_width = c.potential_center = 0.0;
        c.potential_depth2 = c.potential_center2 = 0.0;
        c.potential_width2 = 1.0;
    } else if (c.potential_family == "gaussian-well") {
        c.potential_depth = scan.get_double("potential.depth", 0.0, true);
        c.potential_width = scan.get_double("potential.width", 0.0, true);
        c.potential_center = scan.get_double("potential.center", c.grid_length / 2.0);
        c.potential_depth2 = c.potential_center2 = 0.0;
        c.potential_width2 = 1.0;
    } else if (c.potential_family == "double-well") {
        c.potential_depth = scan.get_double("potential.depth", 0.0, true);
        c.potential_width = scan.get_double("potential.width", 0.0, true);
        c.potential_center = scan.get_double("potential.center", 0.0, true);
        c.potential_depth2 = scan.get_double("potential.depth2", 0.0, true);
        c.potential_width2 = scan.get_double("potential.width2", 0.0, true);
        c.potential_center2 = scan.get_double("potential.center2", 0.0, true);
    } else {
        throw ConfigError("config: potential.family must be gaussian-well, double-well, or zero");
    }

    c.interaction_family = scan.get_string("interaction.family", "", true);
    if (c.interaction_family == "gaussian") {
        c.interaction_amplitude = scan.get_double("interaction.amplitude", 0.0, true);
        c.interaction_width = scan.get_double("interaction.width", 0.0, true);
        c.interaction_center = scan.get_double("interaction.center", 0.0);
        c.interaction_harmonics = 1;
    } else if (c.interaction_family == "cosine-packet") {
        c.interaction_amplitude = scan.get_double("interaction.amplitude", 0.0, true);
        c.interaction_harmonics = scan.get_int("interaction.harmonics", 1);
        c.interaction_center = scan.get_double("interaction.center", 0.0);
        c.interaction_width = 0.0;
    } else {
        throw ConfigError("config: interaction.family must be gaussian or cosine-packet");
    }

    c.mass = scan.get_double("mass", 1.0);
    c.modes = scan.get_int("modes", 0, true);
    c.cutoff_safety = scan.get_int("cutoff.safety", 4);
    c.alphas = scan.get_list("alphas", {}, true);
    for (size_t i = 0; i + 1 < c.alphas.size(); ++i)
        if (!(c.alphas[i] < c.alphas[i + 1]))
            throw ConfigError("config: alphas must be strictly increasing");

    c.pekar_tolerance = scan.get_double("pekar.tolerance", c.pekar_tolerance);
    c.pekar_max_iterations = scan.get_int("pekar.max_iterations", c.pekar_max_iterations);
    c.lanczos_tolerance = scan.get_double("lanczos.tolerance", c.lanczos_tolerance);
    c.lanczos_max_matvecs = scan.get_int("lanczos.max_matvecs", c.lanczos_max_matvecs);

    c.localization_radii = scan.get_list("localization.radii", c.localization_radii);
    c.husimi_mode = scan.get_int("husimi.mode", c.husimi_mode);
    c.husimi_extent = scan.get_double("husimi.extent", c.husimi_extent);
    c.husimi_cells = scan.get_int("husimi.cells", c.husimi_cells);

    c.seed = scan.get_u64("seed", c.seed);
    c.output_dir = scan.get_string("output_dir", c.output_dir);

    scan.reject_unconsumed();
    return c;
}

inline ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

inline std::string ExperimentConfig::serialize() const {
    using detail::format_double;
    std::ostringstream out;
    out << "grid.n = " << grid_n << "\n";
    out << "grid.L = " << format_double(grid_length) << "\n";
    out << "potential.family = " << potential_family << "\n";
    if (potential_family == "gaussian-well" || potential_family == "double-well") {
        out << "potential.depth = " << format_double(potential_depth) << "\n";
        out << "potential.width = " << format_double(potential_width) << "\n";
        out << "potential.center = " << format_double(potential_center) << "\n";
    }
    if (potential_family == "double-well") {
        out << "potential.depth2 = " << format_double(potential_depth2) << "\n";
        out << "potential.width2 = " << format_double(potential_width2) << "\n";
        out << "potential.center2 = " << format_double(potential_center2) << "\n";
    }
    out << "interaction.family = " << interaction_family << "\n";
    out << "interaction.amplitude = " << format_double(interaction_amplitude) << "\n";
    if (interaction_family == "gaussian")
        out << "interaction.width = " << format_double(interaction_width) << "\n";
    if (interaction_family == "cosine-packet")
        out << "interaction.harmonics = " << interaction_harmonics << "\n";
    out << "interaction.center = " << format_double(interaction_center) << "\n";
    out << "mass = " << format_double(mass) << "\n";
    out << "modes = " << modes << "\n";
    out << "cutoff.safety = " << cutoff_safety << "\n";
    out << "alphas = ";
    for (size_t i = 0; i < alphas.size(); ++i)
        out << (i ? ", " : "") << format_double(alphas[i]);
    out << "\n";
    out << "pekar.tolerance = " << format_double(pekar_tolerance) << "\n";
    out << "pekar.max_iterations = " << pekar_max_iterations << "\n";
    out << "lanczos.tolerance = " << format_double(lanczos_tolerance) << "\n";
    out << "lanczos.max_matvecs = " << lanczos_max_matvecs << "\n";
    out << "localization.radii = ";
    for (size_t i = 0; i < localization_radii.size(); ++i)
        out << (i ? ", " : "") << format_double(localization_radii[i]);
    out << "\n";
    out << "husimi.mode = " << husimi_mode << "\n";
    out << "husimi.extent = " << format_double(husimi_extent) << "\n";
    out << "husimi.cells = " << husimi_cells << "\n";
    out << "seed = " << seed << "\n";
    out << "output_dir = " << output_dir << "\n";
    return out.str();
}

inline std::uint64_t ExperimentConfig::hash_u64() const {
    // FNV-1a over the canonical serialization
    const std::string text = serialize();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string ExperimentConfig::hash() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_u64()));
    return buf;
}

}  // namespace polaron
