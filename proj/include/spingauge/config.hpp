#pragma once

// Strict configuration schema: structured key-value text (JSON), unknown keys
// rejected, every error collected and reported at once, hierarchy warnings
// attached to the parsed result. Energies are in units of mu (default mu = 1);
// times in the inverse unit.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spingauge/experiments.hpp"
#include "spingauge/operators.hpp"
#include "json.hpp"

namespace spingauge {

struct ConfigError : std::runtime_error {
    std::vector<std::string> issues;
    explicit ConfigError(std::vector<std::string> iss)
        : std::runtime_error(join(iss)), issues(std::move(iss)) {}

    static std::string join(const std::vector<std::string>& iss) {
        std::string s = "invalid configuration:";
        for (const auto& e : iss) s += "\n  - " + e;
        return s;
    }
};

struct TimeGrid {
    double start = 0;
    double stop = 10;
    int count = 101;
    std::vector<double> explicit_values;

    std::vector<double> values() const {
        if (!explicit_values.empty()) return explicit_values;
        std::vector<double> out;
        out.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i)
            out.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
        return out;
    }
};

struct SimulationConfig {
    LatticeSpec lattice{2, 2, Boundary::open};
    int twol = 2;
    Frame frame = Frame::transformed;
    CouplingSet couplings;
    std::optional<std::vector<int>> target_g; // absent = neutral sector
    bool fermions_frozen = false;
    uint64_t seed = 1;
    Eigen::Index dense_cutoff = 4096;
    uint64_t state_budget = 1ull << 27;

    struct EvolveBlock {
        std::string hamiltonian = "effective"; // effective | primitive_constrained
        std::vector<std::string> terms = {"electric", "magnetic", "dirac", "mass"};
        bool include_mu_renorm = false;
        std::string method = "auto"; // auto | exact | krylov
        int krylov_m = 40;
        double krylov_tol = 1e-10;
        TimeGrid times;
    };
    struct RamseyBlock {
        std::string mode = "two_level";
        double pulse_strength = 0; // 0 = from couplings
        double tau = 0;            // 0 = pi/(4 pulse_strength)
        int flux_delta_L = 1;
        double leakage_bound = 0.05;
        TimeGrid T;
        VertexId meson_start{1, 0};
        int meson_length = 3;
        int meson_direction = 1;
        std::vector<std::string> free_terms = {"electric"};
    };
    struct BreakingBlock {
        double mass = 0.5;
        VertexId tube_start{0, 0};
        int tube_length = 3;
        int tube_direction = 1;
        TimeGrid times;
    };
    struct EffectiveBlock {
        std::vector<double> lambda_sweep; // empty = single run at couplings.lambda
        bool include_mu_renorm = true;
        int order = 2;
        bool exact_block = false; // also derive the exact ground-multiplet operator
    };
    struct SpectrumBlock {
        std::string hamiltonian = "effective";
        std::string on = "sector"; // sector | full
        bool export_operator = false;
    };

    std::optional<PreparationPlan> preparation;
    std::optional<EvolveBlock> evolve;
    std::optional<RamseyBlock> ramsey;
    std::optional<BreakingBlock> breaking;
    std::optional<EffectiveBlock> effective;
    std::optional<SpectrumBlock> spectrum;

    std::vector<std::string> warnings;
    nlohmann::json raw; // echo for manifests
};

namespace detail {

class ConfigReader {
public:
    std::vector<std::string> errors;

    void unknown_keys(const nlohmann::json& j, const std::string& path,
                      const std::set<std::string>& allowed) {
        if (!j.is_object()) {
            errors.push_back(path + ": expected an object");
            return;
        }
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.contains(it.key())) errors.push_back(path + ": unknown key '" + it.key() + "'");
    }

    template <typename T>
    void read(const nlohmann::json& j, const std::string& path, const char* key, T& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            errors.push_back(path + "." + key + ": wrong type");
        }
    }

    void require(bool cond, const std::string& msg) {
        if (!cond) errors.push_back(msg);
    }
};

inline TimeGrid read_time_grid(ConfigReader& r, const nlohmann::json& j, const std::string& path) {
    TimeGrid g;
    if (j.is_array()) {
        try {
            g.explicit_values = j.get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            r.errors.push_back(path + ": expected an array of numbers");
        }
        r.require(!g.explicit_values.empty(), path + ": needs at least one time");
        return g;
    }
    r.unknown_keys(j, path, {"start", "stop", "count"});
    r.read(j, path, "start", g.start);
    r.read(j, path, "stop", g.stop);
    r.read(j, path, "count", g.count);
    r.require(g.count >= 1, path + ".count: must be >= 1");
    r.require(g.stop >= g.start, path + ": stop must be >= start");
    return g;
}

inline std::optional<VertexId> read_vertex(ConfigReader& r, const nlohmann::json& j,
                                           const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
        r.errors.push_back(path + ": expected [n1, n2]");
        return std::nullopt;
    }
    return VertexId{j[0].get<int>(), j[1].get<int>()};
}

inline void read_preparation(ConfigReader& r, const nlohmann::json& j, SimulationConfig& cfg) {
    const std::string path = "preparation";
    r.unknown_keys(j, path, {"kind", "omega_schedule", "edits"});
    PreparationPlan plan;
    std::string kind = "vacuum";
    r.read(j, path, "kind", kind);
    if (kind == "vacuum")
        plan.kind = PreparationKind::vacuum;
    else if (kind == "adiabatic_weak")
        plan.kind = PreparationKind::adiabatic_weak;
    else if (kind == "loop_sea")
        plan.kind = PreparationKind::loop_sea;
    else if (kind == "addressed")
        plan.kind = PreparationKind::addressed;
    else
        r.errors.push_back(path + ".kind: must be vacuum|adiabatic_weak|loop_sea|addressed");

    if (j.contains("omega_schedule")) {
        const auto& js = j.at("omega_schedule");
        if (!js.is_array()) {
            r.errors.push_back(path + ".omega_schedule: expected [[time, omega], ...]");
        } else {
            double prev = -std::numeric_limits<double>::infinity();
            for (const auto& e : js) {
                if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                    r.errors.push_back(path + ".omega_schedule: entries must be [time, omega]");
                    break;
                }
                double t = e[0].get<double>();
                r.require(t > prev, path + ".omega_schedule: times must increase");
                prev = t;
                plan.omega_schedule.push_back({t, e[1].get<double>()});
            }
        }
    }
    if (j.contains("edits")) {
        const auto& je = j.at("edits");
        if (!je.is_array()) {
            r.errors.push_back(path + ".edits: expected an array");
        } else {
            for (size_t i = 0; i < je.size(); ++i) {
                const auto& e = je[i];
                std::string epath = path + ".edits[" + std::to_string(i) + "]";
                r.unknown_keys(e, epath, {"set_link", "raise_link", "set_vertex"});
                AddressedEdit edit;
                if (e.contains("set_link")) {
                    const auto& a = e.at("set_link");
                    if (!a.is_array() || a.size() != 4) {
                        r.errors.push_back(epath + ".set_link: expected [n1, n2, k, m]");
                        continue;
                    }
                    edit.kind = AddressedEdit::Kind::set_link;
                    edit.link = {{a[0].get<int>(), a[1].get<int>()}, a[2].get<int>()};
                    edit.value = a[3].get<int>();
                } else if (e.contains("raise_link")) {
                    const auto& a = e.at("raise_link");
                    if (!a.is_array() || a.size() != 4) {
                        r.errors.push_back(epath + ".raise_link: expected [n1, n2, k, dm]");
                        continue;
                    }
                    edit.kind = AddressedEdit::Kind::raise_link;
                    edit.link = {{a[0].get<int>(), a[1].get<int>()}, a[2].get<int>()};
                    edit.value = a[3].get<int>();
                } else if (e.contains("set_vertex")) {
                    const auto& a = e.at("set_vertex");
                    if (!a.is_array() || a.size() != 4) {
                        r.errors.push_back(epath + ".set_vertex: expected [n1, n2, occ_c, occ_d]");
                        continue;
                    }
                    edit.kind = AddressedEdit::Kind::set_vertex;
                    edit.vertex = {a[0].get<int>(), a[1].get<int>()};
                    edit.occ_c = a[2].get<int>();
                    edit.occ_d = a[3].get<int>();
                    r.require(edit.occ_c == 0 || edit.occ_c == 1, epath + ": occ_c must be 0 or 1");
                    r.require(edit.occ_d == 0 || edit.occ_d == 1, epath + ": occ_d must be 0 or 1");
                } else {
                    r.errors.push_back(epath + ": needs set_link, raise_link or set_vertex");
                    continue;
                }
                plan.edits.push_back(edit);
            }
        }
    }
    cfg.preparation = std::move(plan);
}

} // namespace detail

/// Parse and validate a configuration; throws ConfigError carrying every
/// problem found, not just the first.
inline SimulationConfig parse_config_json(const nlohmann::json& j) {
    detail::ConfigReader r;
    SimulationConfig cfg;
    cfg.raw = j;

    r.unknown_keys(j, "$", {"lattice", "l", "frame", "couplings", "sector", "fermions_frozen",
                            "seed", "dense_cutoff", "state_budget", "preparation", "evolve",
                            "ramsey", "breaking", "effective", "spectrum"});

    if (j.contains("lattice")) {
        const auto& jl = j.at("lattice");
        r.unknown_keys(jl, "lattice", {"width", "height", "boundary"});
        r.read(jl, "lattice", "width", cfg.lattice.width);
        r.read(jl, "lattice", "height", cfg.lattice.height);
        std::string b = "open";
        r.read(jl, "lattice", "boundary", b);
        if (b == "open")
            cfg.lattice.boundary = Boundary::open;
        else if (b == "periodic")
            cfg.lattice.boundary = Boundary::periodic;
        else
            r.errors.push_back("lattice.boundary: must be open|periodic");
        r.require(cfg.lattice.width >= 1 && cfg.lattice.height >= 1,
                  "lattice: width and height must be >= 1");
        if (cfg.lattice.boundary == Boundary::periodic)
            r.require(cfg.lattice.width >= 2 && cfg.lattice.height >= 2,
                      "lattice: periodic boundary requires width >= 2 and height >= 2");
    }

    if (j.contains("l")) {
        double l = 1.0;
        r.read(j, "$", "l", l);
        double twol = 2.0 * l;
        if (l <= 0 || std::abs(twol - std::round(twol)) > 1e-12)
            r.errors.push_back("l: must be a positive integer or half integer");
        else
            cfg.twol = static_cast<int>(std::round(twol));
    }

    if (j.contains("frame")) {
        std::string f;
        r.read(j, "$", "frame", f);
        if (f == "transformed")
            cfg.frame = Frame::transformed;
        else if (f == "primitive_psi")
            cfg.frame = Frame::primitive_psi;
        else if (f == "primitive_chi")
            cfg.frame = Frame::primitive_chi;
        else
            r.errors.push_back("frame: must be transformed|primitive_psi|primitive_chi");
    }

    if (j.contains("couplings")) {
        const auto& jc = j.at("couplings");
        r.unknown_keys(jc, "couplings", {"lambda", "mu", "beta", "omega", "eta", "mass"});
        r.read(jc, "couplings", "lambda", cfg.couplings.lambda);
        r.read(jc, "couplings", "mu", cfg.couplings.mu);
        r.read(jc, "couplings", "beta", cfg.couplings.beta);
        r.read(jc, "couplings", "omega", cfg.couplings.omega);
        r.read(jc, "couplings", "eta", cfg.couplings.eta);
        r.read(jc, "couplings", "mass", cfg.couplings.mass);
        r.require(cfg.couplings.lambda > 0, "couplings.lambda: must be > 0");
    }
    cfg.couplings.twol = cfg.twol;

    if (j.contains("sector")) {
        const auto& js = j.at("sector");
        if (js.is_string()) {
            if (js.get<std::string>() != "neutral")
                r.errors.push_back("sector: string form must be \"neutral\"");
        } else if (js.is_array()) {
            try {
                cfg.target_g = js.get<std::vector<int>>();
            } catch (const nlohmann::json::exception&) {
                r.errors.push_back("sector: expected integers per vertex (row-major)");
            }
            if (cfg.target_g &&
                static_cast<int>(cfg.target_g->size()) != cfg.lattice.width * cfg.lattice.height)
                r.errors.push_back("sector: needs one integer per vertex (row-major)");
        } else {
            r.errors.push_back("sector: expected \"neutral\" or an integer array");
        }
    }

    r.read(j, "$", "fermions_frozen", cfg.fermions_frozen);
    r.read(j, "$", "seed", cfg.seed);
    {
        long long cutoff = cfg.dense_cutoff;
        r.read(j, "$", "dense_cutoff", cutoff);
        r.require(cutoff >= 1, "dense_cutoff: must be >= 1");
        cfg.dense_cutoff = cutoff;
        unsigned long long budget = cfg.state_budget;
        r.read(j, "$", "state_budget", budget);
        r.require(budget >= 1, "state_budget: must be >= 1");
        cfg.state_budget = budget;
    }

    if (j.contains("preparation")) detail::read_preparation(r, j.at("preparation"), cfg);

    if (j.contains("evolve")) {
        const auto& je = j.at("evolve");
        r.unknown_keys(je, "evolve",
                       {"hamiltonian", "terms", "include_mu_renorm", "method", "krylov_m",
                        "krylov_tol", "times"});
        SimulationConfig::EvolveBlock b;
        r.read(je, "evolve", "hamiltonian", b.hamiltonian);
        r.read(je, "evolve", "terms", b.terms);
        r.read(je, "evolve", "include_mu_renorm", b.include_mu_renorm);
        r.read(je, "evolve", "method", b.method);
        r.read(je, "evolve", "krylov_m", b.krylov_m);
        r.read(je, "evolve", "krylov_tol", b.krylov_tol);
        r.require(b.hamiltonian == "effective" || b.hamiltonian == "primitive_constrained",
                  "evolve.hamiltonian: must be effective|primitive_constrained");
        r.require(b.method == "auto" || b.method == "exact" || b.method == "krylov",
                  "evolve.method: must be auto|exact|krylov");
        for (const auto& t : b.terms)
            r.require(t == "electric" || t == "magnetic" || t == "dirac" || t == "mass",
                      "evolve.terms: unknown term '" + t + "'");
        if (je.contains("times")) b.times = detail::read_time_grid(r, je.at("times"), "evolve.times");
        cfg.evolve = b;
    }

    if (j.contains("ramsey")) {
        const auto& jr = j.at("ramsey");
        r.unknown_keys(jr, "ramsey",
                       {"mode", "pulse_strength", "tau", "flux_delta_L", "leakage_bound", "T",
                        "meson_start", "meson_length", "meson_direction", "free_terms"});
        SimulationConfig::RamseyBlock b;
        r.read(jr, "ramsey", "mode", b.mode);
        r.require(b.mode == "two_level" || b.mode == "full_hamiltonian",
                  "ramsey.mode: must be two_level|full_hamiltonian");
        r.read(jr, "ramsey", "pulse_strength", b.pulse_strength);
        r.read(jr, "ramsey", "tau", b.tau);
        r.read(jr, "ramsey", "flux_delta_L", b.flux_delta_L);
        r.require(b.flux_delta_L >= 1, "ramsey.flux_delta_L: must be >= 1");
        r.read(jr, "ramsey", "leakage_bound", b.leakage_bound);
        if (jr.contains("T")) b.T = detail::read_time_grid(r, jr.at("T"), "ramsey.T");
        if (jr.contains("meson_start"))
            if (auto v = detail::read_vertex(r, jr.at("meson_start"), "ramsey.meson_start"))
                b.meson_start = *v;
        r.read(jr, "ramsey", "meson_length", b.meson_length);
        r.read(jr, "ramsey", "meson_direction", b.meson_direction);
        r.read(jr, "ramsey", "free_terms", b.free_terms);
        for (const auto& t : b.free_terms)
            r.require(t == "electric" || t == "magnetic" || t == "dirac" || t == "mass",
                      "ramsey.free_terms: unknown term '" + t + "'");
        cfg.ramsey = b;
    }

    if (j.contains("breaking")) {
        const auto& jb = j.at("breaking");
        r.unknown_keys(jb, "breaking",
                       {"mass", "tube_start", "tube_length", "tube_direction", "times"});
        SimulationConfig::BreakingBlock b;
        r.read(jb, "breaking", "mass", b.mass);
        if (jb.contains("tube_start"))
            if (auto v = detail::read_vertex(r, jb.at("tube_start"), "breaking.tube_start"))
                b.tube_start = *v;
        r.read(jb, "breaking", "tube_length", b.tube_length);
        r.require(b.tube_length >= 1, "breaking.tube_length: must be >= 1");
        r.read(jb, "breaking", "tube_direction", b.tube_direction);
        if (jb.contains("times")) b.times = detail::read_time_grid(r, jb.at("times"), "breaking.times");
        cfg.breaking = b;
    }

    if (j.contains("effective")) {
        const auto& je = j.at("effective");
        r.unknown_keys(je, "effective", {"lambda_sweep", "include_mu_renorm", "order", "exact_block"});
        SimulationConfig::EffectiveBlock b;
        r.read(je, "effective", "lambda_sweep", b.lambda_sweep);
        r.read(je, "effective", "include_mu_renorm", b.include_mu_renorm);
        r.read(je, "effective", "order", b.order);
        r.require(b.order == 2 || b.order == 3, "effective.order: must be 2 or 3");
        r.read(je, "effective", "exact_block", b.exact_block);
        cfg.effective = b;
    }

    if (j.contains("spectrum")) {
        const auto& js = j.at("spectrum");
        r.unknown_keys(js, "spectrum", {"hamiltonian", "on", "export_operator"});
        SimulationConfig::SpectrumBlock b;
        r.read(js, "spectrum", "hamiltonian", b.hamiltonian);
        r.read(js, "spectrum", "on", b.on);
        r.read(js, "spectrum", "export_operator", b.export_operator);
        static const std::set<std::string> hams = {"effective", "electric",  "magnetic",
                                                   "dirac",     "mass",      "gauss",
                                                   "primitive_boson", "primitive_fermion"};
        r.require(hams.contains(b.hamiltonian), "spectrum.hamiltonian: unknown choice '" +
                                                    b.hamiltonian + "'");
        r.require(b.on == "sector" || b.on == "full", "spectrum.on: must be sector|full");
        cfg.spectrum = b;
    }

    if (!r.errors.empty()) throw ConfigError(std::move(r.errors));

    if (!cfg.couplings.hierarchy_satisfied())
        cfg.warnings.push_back(
            "hierarchy warning: lambda should dominate mu, beta, omega, eta and the mass by a wide margin");
    if (auto sl = cfg.couplings.strong_limit(); !sl.ok)
        cfg.warnings.push_back("strong-limit warning: 2 Omega^2 l^2(l+1)^2/lambda << eta beta sqrt(l(l+1))/lambda << mu does not hold");
    return cfg;
}

inline SimulationConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError({std::string("not valid JSON: ") + e.what()});
    }
    return parse_config_json(j);
}

} // namespace spingauge
