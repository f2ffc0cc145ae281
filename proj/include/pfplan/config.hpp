#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pfplan/analysis.hpp"
#include "pfplan/model.hpp"
#include "pfplan/oracle.hpp"

namespace pfplan {

// Flat `key = value` config with [section] headers and '#' comments.
// Values never contain '#'; ';' separates matrix rows inside values.
// Entries merge in layers: defaults, then preset, then file, then flags;
// the later layer wins key by key.
class ConfigMap {
  public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static ConfigMap parse(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw ConfigError("unterminated section header", line_no);
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty()) throw ConfigError("empty section name", line_no);
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected `key = value`", line_no);
            const std::string key = trim(trimmed.substr(0, eq));
            if (key.empty()) throw ConfigError("empty key", line_no);
            const std::string full = section.empty() ? key : section + "." + key;
            cfg.entries_[full] = Entry{trim(trimmed.substr(eq + 1)), line_no};
        }
        return cfg;
    }

    static ConfigMap parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    void merge_from(const ConfigMap& other) {
        for (const auto& [key, entry] : other.entries_) entries_[key] = entry;
    }

    void set(const std::string& key, const std::string& value) {
        entries_[key] = Entry{value, 0};
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_string(const std::string& key) const { return require(key).value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    double get_double(const std::string& key) const { return to_double(key, require(key)); }
    double get_double(const std::string& key, double fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_double(key, it->second);
    }

    int get_int(const std::string& key) const { return to_int(key, require(key)); }
    int get_int(const std::string& key, int fallback) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_int(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            return std::stoull(it->second.value);
        } catch (...) {
            throw ConfigError(key + ": expected an unsigned integer, got `" + it->second.value +
                                  "`",
                              it->second.line);
        }
    }

    std::vector<int> get_int_list(const std::string& key) const {
        const Entry& e = require(key);
        std::vector<int> out;
        for (const std::string& tok : split(e.value, ','))
            if (!trim(tok).empty()) out.push_back(to_int(key, Entry{trim(tok), e.line}));
        return out;
    }

    Vec get_vector(const std::string& key) const {
        const Entry& e = require(key);
        const auto parts = split_ws(e.value);
        if (parts.empty()) throw ConfigError(key + ": empty vector", e.line);
        Vec v(static_cast<Eigen::Index>(parts.size()));
        for (std::size_t j = 0; j < parts.size(); ++j)
            v[static_cast<Eigen::Index>(j)] = to_double(key, Entry{parts[j], e.line});
        return v;
    }

    // Rows separated by ';', entries by whitespace: "1 0; 0 1".
    Mat get_matrix(const std::string& key) const {
        const Entry& e = require(key);
        const auto rows = split(e.value, ';');
        std::vector<std::vector<double>> vals;
        for (const std::string& row : rows) {
            if (trim(row).empty()) continue;
            std::vector<double> r;
            for (const std::string& tok : split_ws(row))
                r.push_back(to_double(key, Entry{tok, e.line}));
            if (!vals.empty() && vals.front().size() != r.size())
                throw ConfigError(key + ": ragged matrix rows", e.line);
            vals.push_back(std::move(r));
        }
        if (vals.empty()) throw ConfigError(key + ": empty matrix", e.line);
        Mat m(static_cast<Eigen::Index>(vals.size()),
              static_cast<Eigen::Index>(vals.front().size()));
        for (std::size_t i = 0; i < vals.size(); ++i)
            for (std::size_t j = 0; j < vals.front().size(); ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vals[i][j];
        return m;
    }

    // "point:mass, point:mass" with point components whitespace-separated.
    std::vector<std::pair<Vec, double>> get_atoms(const std::string& key) const {
        const Entry& e = require(key);
        std::vector<std::pair<Vec, double>> out;
        for (const std::string& item : split(e.value, ',')) {
            const std::string entry = trim(item);
            if (entry.empty()) continue;
            const auto colon = entry.rfind(':');
            if (colon == std::string::npos)
                throw ConfigError(key + ": atom entry needs `point:mass`", e.line);
            const auto comps = split_ws(entry.substr(0, colon));
            if (comps.empty()) throw ConfigError(key + ": atom with empty point", e.line);
            Vec p(static_cast<Eigen::Index>(comps.size()));
            for (std::size_t j = 0; j < comps.size(); ++j)
                p[static_cast<Eigen::Index>(j)] = to_double(key, Entry{comps[j], e.line});
            out.emplace_back(p, to_double(key, Entry{trim(entry.substr(colon + 1)), e.line}));
        }
        if (out.empty()) throw ConfigError(key + ": no atoms given", e.line);
        return out;
    }

    int line_of(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

  private:
    const Entry& require(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("missing config key `" + key + "`");
        return it->second;
    }

    static double to_double(const std::string& key, const Entry& e) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (...) {
            throw ConfigError(key + ": expected a number, got `" + e.value + "`", e.line);
        }
    }

    static int to_int(const std::string& key, const Entry& e) {
        try {
            std::size_t pos = 0;
            const int v = std::stoi(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (...) {
            throw ConfigError(key + ": expected an integer, got `" + e.value + "`", e.line);
        }
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        out.push_back(cur);
        return out;
    }

    static std::vector<std::string> split_ws(const std::string& s) {
        std::vector<std::string> out;
        std::istringstream in(s);
        std::string tok;
        while (in >> tok) out.push_back(tok);
        return out;
    }

    std::map<std::string, Entry> entries_;
};

// Built-in presets, expressed in the config syntax itself.
inline const std::map<std::string, std::string>& preset_texts() {
    static const std::map<std::string, std::string> presets = {
        {"appendix-c", R"(
# Random-shift process: x_{t+1} = x_t + u_t + xi_t, xi uniform on {0,1},
# o_t = x_t + N(0,1), policy u = -x, regret = average |x|.
[system]
state_dim = 1
action_dim = 1
obs_dim = 1
horizon = 40
x0 = 0
A = 1
B = 1
C = 1
[transition_noise]
kind = finite
atoms = 0:0.5, 1:0.5
lattice_scale = 1
subgaussian_m = 4
[obs_noise]
kind = gaussian
mean = 0
variances = 1
[policy]
kind = linear
G = -1
[reward]
kind = avg_l1
[run]
N_list = 10, 100, 1000
seeds = 100
master_seed = 42
oracle = reference
n_ref = 100000
)"},
        {"gaussian", R"(
# Stable scalar Gaussian system with an exact Kalman ideal process.
[system]
state_dim = 1
action_dim = 1
obs_dim = 1
horizon = 5
x0 = 0
A = 0.9
B = 1
C = 1
[transition_noise]
kind = gaussian
mean = 0
variances = 1
subgaussian_m = 1
[obs_noise]
kind = gaussian
mean = 0
variances = 1
[policy]
kind = linear
G = -0.5
[reward]
kind = avg_l1
[run]
N_list = 64, 4096
seeds = 100
master_seed = 42
oracle = kalman
)"},
        {"two-atom", R"(
# Two-atom transition noise with Gaussian observations: enumeration-exact.
[system]
state_dim = 1
action_dim = 1
obs_dim = 1
horizon = 4
x0 = 0
A = 0.8
B = 1
C = 1
[transition_noise]
kind = finite
atoms = -1:0.5, 1:0.5
lattice_scale = 1
subgaussian_m = 1
[obs_noise]
kind = gaussian
mean = 0
variances = 1
[policy]
kind = linear
G = -0.3
[reward]
kind = avg_l1
[run]
N_list = 100, 1000, 10000
seeds = 100
master_seed = 42
oracle = enumeration
[validate]
beta = 0.25
beta_prime = 1.5
replications = 400
)"},
        {"zero-noise", R"(
# Fully deterministic system; both processes coincide exactly.
[system]
state_dim = 1
action_dim = 1
obs_dim = 1
horizon = 5
x0 = 1
A = 1
B = 1
C = 1
[transition_noise]
kind = finite
atoms = 0:1
[obs_noise]
kind = finite
atoms = 0:1
[policy]
kind = linear
G = -0.5
[reward]
kind = avg_l1
[run]
N_list = 1
seeds = 10
master_seed = 42
oracle = kalman
)"},
        {"lowerbound", R"(
# Conditioned particle-death grid on the hard instance.
[lowerbound]
T_list = 1, 3, 5, 8
N_list = 1, 2, 8, 64
replications = 10000
k = 2
[run]
master_seed = 42
)"},
    };
    return presets;
}

inline ConfigMap load_preset(const std::string& name) {
    const auto& presets = preset_texts();
    const auto it = presets.find(name);
    if (it == presets.end()) {
        std::string names;
        for (const auto& [n, _] : presets) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset `" + name + "` (available: " + names + ")");
    }
    return ConfigMap::parse(it->second);
}

// A fully resolved run configuration. Accessors validate on use and throw
// ConfigError with the offending key (and line, for file-provided values).
struct RunConfig {
    ConfigMap cfg;

    int default_horizon() const {
        const int T = cfg.get_int("system.horizon");
        if (T < 1) throw ConfigError("system.horizon must be positive");
        return T;
    }

    NoiseDistribution noise(const std::string& section) const {
        const std::string kind = cfg.get_string(section + ".kind");
        std::optional<double> m;
        if (cfg.has(section + ".subgaussian_m")) m = cfg.get_double(section + ".subgaussian_m");
        if (kind == "gaussian") {
            const Vec variances = cfg.get_vector(section + ".variances");
            const Vec mean = cfg.has(section + ".mean") ? cfg.get_vector(section + ".mean")
                                                        : Vec(Vec::Zero(variances.size()));
            return NoiseDistribution::diagonal_gaussian(mean, variances, m);
        }
        if (kind == "finite") {
            const auto atoms = cfg.get_atoms(section + ".atoms");
            std::vector<Vec> points;
            std::vector<double> masses;
            for (const auto& [p, mass] : atoms) {
                points.push_back(p);
                masses.push_back(mass);
            }
            const double scale = cfg.get_double(section + ".lattice_scale", 1.0);
            return NoiseDistribution::finite_support(points, masses, scale, m);
        }
        throw ConfigError(section + ".kind must be `gaussian` or `finite`, got `" + kind + "`",
                          cfg.line_of(section + ".kind"));
    }

    SystemSpec system(int horizon) const {
        SystemSpec spec = SystemSpec::time_invariant(
            cfg.get_matrix("system.A"), cfg.get_matrix("system.B"), cfg.get_matrix("system.C"),
            noise("transition_noise"), noise("obs_noise"), cfg.get_vector("system.x0"), horizon);
        spec.state_dim = cfg.get_int("system.state_dim");
        spec.action_dim = cfg.get_int("system.action_dim");
        spec.obs_dim = cfg.get_int("system.obs_dim");
        const auto violations = validate_spec(spec);
        if (!violations.empty()) {
            std::string msg = "config does not resolve to a valid system:";
            for (const auto& v : violations) msg += " [" + v + "]";
            throw ConfigError(msg);
        }
        return spec;
    }

    SystemSpec system() const { return system(default_horizon()); }

    Policy policy() const {
        const std::string kind = cfg.get_string("policy.kind", "linear");
        if (kind != "linear")
            throw ConfigError("policy.kind: only `linear` policies can be configured",
                              cfg.line_of("policy.kind"));
        const Mat G = cfg.get_matrix("policy.G");
        if (cfg.has("policy.L_g")) return Policy::linear(G, cfg.get_double("policy.L_g"));
        return Policy::linear(G);
    }

    RewardFunction reward() const {
        const std::string kind = cfg.get_string("reward.kind", "avg_l1");
        if (kind == "avg_l1") return RewardFunction::avg_l1();
        if (kind == "sum_norm") return RewardFunction::sum_norm(cfg.get_double("reward.L_r"));
        throw ConfigError("reward.kind must be `avg_l1` or `sum_norm`, got `" + kind + "`",
                          cfg.line_of("reward.kind"));
    }

    OracleKind oracle() const {
        OracleKind kind;
        const std::string name = cfg.get_string("run.oracle", "kalman");
        if (name == "kalman")
            kind.type = OracleType::kalman;
        else if (name == "enumeration")
            kind.type = OracleType::enumeration;
        else if (name == "reference")
            kind.type = OracleType::reference;
        else
            throw ConfigError("run.oracle must be kalman|enumeration|reference, got `" + name +
                                  "`",
                              cfg.line_of("run.oracle"));
        kind.max_paths = static_cast<std::int64_t>(cfg.get_u64("run.max_paths", 1u << 20));
        kind.n_ref = cfg.get_int("run.n_ref", 100000);
        return kind;
    }

    std::vector<int> n_list() const {
        const auto list = cfg.get_int_list("run.N_list");
        if (list.empty()) throw ConfigError("run.N_list must be nonempty",
                                            cfg.line_of("run.N_list"));
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i] < 1) throw ConfigError("run.N_list entries must be positive",
                                               cfg.line_of("run.N_list"));
            if (i > 0 && list[i] <= list[i - 1])
                throw ConfigError("run.N_list must be strictly ascending",
                                  cfg.line_of("run.N_list"));
        }
        return list;
    }

    std::vector<int> t_list() const {
        if (!cfg.has("run.T_list")) return {default_horizon()};
        const auto list = cfg.get_int_list("run.T_list");
        if (list.empty()) throw ConfigError("run.T_list must be nonempty",
                                            cfg.line_of("run.T_list"));
        for (int t : list)
            if (t < 1) throw ConfigError("run.T_list entries must be positive",
                                         cfg.line_of("run.T_list"));
        return list;
    }

    int seeds() const {
        const int s = cfg.get_int("run.seeds", 1);
        if (s < 1) throw ConfigError("run.seeds must be at least 1", cfg.line_of("run.seeds"));
        return s;
    }

    std::uint64_t master_seed() const { return cfg.get_u64("run.master_seed", 42); }
    int jobs() const {
        const int j = cfg.get_int("run.jobs", 1);
        if (j < 1) throw ConfigError("run.jobs must be at least 1", cfg.line_of("run.jobs"));
        return j;
    }

    BoundParams bound_params() const {
        BoundParams b;
        b.lr = cfg.get_double("bounds.L_r", 1.0);
        b.lg = cfg.get_double("bounds.L_g", 1.0);
        b.c_a = cfg.get_double("bounds.C_a", 1.0);
        b.rho_a = cfg.get_double("bounds.rho_a", 1.0);
        b.c_b = cfg.get_double("bounds.C_b", 1.0);
        b.c_ab = cfg.get_double("bounds.C_ab", 1.0);
        b.rho_ab = cfg.get_double("bounds.rho_ab", 1.0);
        b.c_bg = cfg.get_double("bounds.C_bg", 1.0);
        b.subgaussian_m = cfg.get_double("bounds.m", 1.0);
        b.state_dim = cfg.get_int("bounds.d", 1);
        b.horizon = cfg.get_int("bounds.T", 1);
        b.eps = cfg.get_double("bounds.eps", 0.1);
        b.delta = cfg.get_double("bounds.delta", 0.05);
        b.p = cfg.get_double("bounds.p", 1.0);
        return b;
    }
};

namespace detail {

inline std::string render_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string render_matrix(const Mat& m) {
    std::ostringstream out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i > 0) out << "; ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << " ";
            out << render_number(m(i, j));
        }
    }
    return out.str();
}

inline std::string render_vector(const Vec& v) {
    std::ostringstream out;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (j > 0) out << " ";
        out << render_number(v[j]);
    }
    return out.str();
}

inline void render_noise(std::ostringstream& out, const std::string& section,
                         const NoiseDistribution& d) {
    out << "[" << section << "]\n";
    if (d.is_gaussian()) {
        out << "kind = gaussian\n";
        out << "mean = " << render_vector(d.gaussian_mean()) << "\n";
        out << "variances = " << render_vector(d.gaussian_variances()) << "\n";
    } else {
        out << "kind = finite\n";
        out << "atoms = ";
        for (std::size_t k = 0; k < d.atom_count(); ++k) {
            if (k > 0) out << ", ";
            out << render_vector(d.atom_point(k)) << ":" << render_number(d.atom_mass(k));
        }
        out << "\n";
        out << "lattice_scale = " << render_number(d.lattice_scale()) << "\n";
    }
    if (auto m = d.subgaussian_m()) out << "subgaussian_m = " << render_number(*m) << "\n";
}

}  // namespace detail

// Renders a time-invariant SystemSpec back into the config syntax; the
// round trip through ConfigMap reproduces the system exactly. Time-varying
// sequences have no config form and are rejected.
inline std::string system_to_config_text(const SystemSpec& spec) {
    require_valid(spec);
    auto all_equal = [](const auto& seq) {
        for (std::size_t i = 1; i < seq.size(); ++i)
            if (!(seq[i] == seq[0])) return false;
        return true;
    };
    if (!all_equal(spec.A_seq) || !all_equal(spec.B_seq) || !all_equal(spec.C_seq))
        throw Error("only time-invariant systems have a config representation");
    auto same_noise = [](const NoiseDistribution& a, const NoiseDistribution& b) {
        if (a.kind() != b.kind()) return false;
        if (a.is_gaussian())
            return a.gaussian_mean() == b.gaussian_mean() &&
                   a.gaussian_variances() == b.gaussian_variances();
        if (a.atom_count() != b.atom_count() || a.lattice_scale() != b.lattice_scale())
            return false;
        for (std::size_t k = 0; k < a.atom_count(); ++k)
            if (!(a.atom_point(k) == b.atom_point(k)) || a.atom_mass(k) != b.atom_mass(k))
                return false;
        return true;
    };
    for (std::size_t t = 1; t < spec.transition_noise_seq.size(); ++t)
        if (!same_noise(spec.transition_noise_seq[t], spec.transition_noise_seq[0]))
            throw Error("only time-invariant systems have a config representation");
    for (std::size_t t = 1; t < spec.obs_noise_seq.size(); ++t)
        if (!same_noise(spec.obs_noise_seq[t], spec.obs_noise_seq[0]))
            throw Error("only time-invariant systems have a config representation");

    std::ostringstream out;
    out << "[system]\n";
    out << "state_dim = " << spec.state_dim << "\n";
    out << "action_dim = " << spec.action_dim << "\n";
    out << "obs_dim = " << spec.obs_dim << "\n";
    out << "horizon = " << spec.horizon << "\n";
    out << "x0 = " << detail::render_vector(spec.x0) << "\n";
    out << "A = " << detail::render_matrix(spec.A_seq[0]) << "\n";
    out << "B = " << detail::render_matrix(spec.B_seq[0]) << "\n";
    out << "C = " << detail::render_matrix(spec.C_seq[0]) << "\n";
    detail::render_noise(out, "transition_noise", spec.transition_noise_seq[0]);
    detail::render_noise(out, "obs_noise", spec.obs_noise_seq[0]);
    return out.str();
}

}  // namespace pfplan
