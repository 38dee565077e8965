#pragma once

// Subcommand execution shared by the command-line tool and the test suite.
// Every artifact write is deterministic for a fixed config + seed.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>

#include "spingauge/config.hpp"
#include "spingauge/io.hpp"

namespace spingauge {

struct RunResult {
    std::vector<std::filesystem::path> outputs;
    std::vector<std::string> warnings;
    nlohmann::json summary;
};

namespace detail {

inline SectorBasis make_sector(const SimulationConfig& cfg, const LatticeGeometry& geom) {
    EnumerationOptions opts;
    opts.state_budget = cfg.state_budget;
    opts.fermions_frozen = cfg.fermions_frozen;
    std::vector<int> target =
        cfg.target_g ? *cfg.target_g : std::vector<int>(static_cast<size_t>(geom.n_vertices()), 0);
    return select_sector(geom, cfg.twol, to_basis_frame(cfg.frame), target, opts);
}

inline SparseOperator build_terms(const SimulationConfig& cfg, const std::vector<std::string>& terms,
                                  bool include_mu_renorm, const SectorBasis& basis) {
    SparseOperator h{SpMat(static_cast<Eigen::Index>(basis.dim()),
                           static_cast<Eigen::Index>(basis.dim())),
                     basis.tag()};
    for (const std::string& t : terms) {
        if (t == "electric") h.mat += build_HE(cfg.couplings, basis).mat;
        if (t == "magnetic") h.mat += build_HB(cfg.couplings, cfg.frame, basis).mat;
        if (t == "dirac") h.mat += build_HD(cfg.couplings, cfg.frame, basis).mat;
        if (t == "mass") h.mat += build_HM(cfg.couplings, cfg.frame, basis).mat;
    }
    if (include_mu_renorm) {
        SparseOperator r = detail::assemble_mu_renorm_pattern(basis);
        h.mat += SpMat((-4.0 * cfg.couplings.beta * cfg.couplings.beta / cfg.couplings.lambda) * r.mat);
    }
    return h;
}

inline nlohmann::json manifest(const SimulationConfig& cfg, const std::string& command,
                               const RunResult& res) {
    nlohmann::json m;
    m["schema_version"] = 1;
    m["library"] = "spingauge 0.1.0";
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["config"] = cfg.raw;
    m["warnings"] = res.warnings;
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& p : res.outputs) outs.push_back(p.filename().string());
    m["outputs"] = outs;
    m["summary"] = res.summary;
    return m;
}

} // namespace detail

inline RunResult run_basis(const SimulationConfig& cfg, const std::filesystem::path& out_dir) {
    LatticeGeometry geom = build_lattice(cfg.lattice);
    SectorBasis sector = detail::make_sector(cfg, geom);
    RunResult res;
    res.warnings = cfg.warnings;
    std::filesystem::create_directories(out_dir);
    auto path = out_dir / "sector.json";
    write_json_file(path, sector.to_json());
    res.outputs.push_back(path);
    res.summary["sector_dim"] = sector.dim();
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "basis", res));
    res.outputs.push_back(mpath);
    return res;
}

inline RunResult run_spectrum(const SimulationConfig& cfg, const std::filesystem::path& out_dir) {
    if (!cfg.spectrum) throw ConfigError({"spectrum: block required for this command"});
    LatticeGeometry geom = build_lattice(cfg.lattice);
    EnumerationOptions opts;
    opts.state_budget = cfg.state_budget;
    opts.fermions_frozen = cfg.fermions_frozen;

    const auto& blk = *cfg.spectrum;
    SectorBasis basis = blk.on == "sector"
                            ? detail::make_sector(cfg, geom)
                            : enumerate_full_basis(geom, cfg.twol, to_basis_frame(cfg.frame), opts);

    SparseOperator h{SpMat(static_cast<Eigen::Index>(basis.dim()),
                           static_cast<Eigen::Index>(basis.dim())),
                     basis.tag()};
    if (blk.hamiltonian == "effective") {
        h = detail::build_terms(cfg, {"electric", "magnetic", "dirac", "mass"}, false, basis);
    } else if (blk.hamiltonian == "electric") {
        h = build_HE(cfg.couplings, basis);
    } else if (blk.hamiltonian == "magnetic") {
        h = build_HB(cfg.couplings, cfg.frame, basis);
    } else if (blk.hamiltonian == "dirac") {
        h = build_HD(cfg.couplings, cfg.frame, basis);
    } else if (blk.hamiltonian == "mass") {
        h = build_HM(cfg.couplings, cfg.frame, basis);
    } else if (blk.hamiltonian == "gauss") {
        h = build_HG(cfg.couplings, cfg.frame, basis);
    } else {
        Frame pf = cfg.frame == Frame::transformed ? Frame::primitive_psi : cfg.frame;
        auto [hb, hf] = build_primitive(cfg.couplings, pf, basis);
        h = blk.hamiltonian == "primitive_boson" ? hb : hf;
    }

    EigenSystem sys = eigendecompose(h, cfg.dense_cutoff);
    RunResult res;
    res.warnings = cfg.warnings;
    std::filesystem::create_directories(out_dir);
    {
        CsvWriter w(out_dir / "eigenvalues.csv");
        w.header({"index", "eigenvalue"});
        for (Eigen::Index i = 0; i < sys.eigenvalues.size(); ++i)
            w.row({double(i), sys.eigenvalues[i]});
        res.outputs.push_back(out_dir / "eigenvalues.csv");
    }
    if (blk.export_operator) {
        auto p = out_dir / "operator.txt";
        write_operator_coordinate_text(p, h);
        res.outputs.push_back(p);
    }
    res.summary["dim"] = basis.dim();
    res.summary["ground_energy"] = sys.eigenvalues.size() ? sys.eigenvalues[0] : 0.0;
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "spectrum", res));
    res.outputs.push_back(mpath);
    return res;
}

inline RunResult run_validate_effective(const SimulationConfig& cfg,
                                        const std::filesystem::path& out_dir) {
    SimulationConfig::EffectiveBlock blk = cfg.effective ? *cfg.effective
                                                         : SimulationConfig::EffectiveBlock{};
    LatticeGeometry geom = build_lattice(cfg.lattice);
    Frame frame = cfg.frame == Frame::transformed ? Frame::primitive_psi : cfg.frame;
    EnumerationOptions opts;
    opts.state_budget = cfg.state_budget;
    opts.fermions_frozen = cfg.fermions_frozen;
    SectorBasis full = enumerate_full_basis(geom, cfg.twol, to_basis_frame(frame), opts);
    SectorBasis sector = select_neutral_sector(geom, cfg.twol, to_basis_frame(frame), opts);

    std::vector<double> lambdas = blk.lambda_sweep;
    if (lambdas.empty()) lambdas.push_back(cfg.couplings.lambda);

    RunResult res;
    res.warnings = cfg.warnings;
    nlohmann::json runs = nlohmann::json::array();
    for (double lam : lambdas) {
        CouplingSet c = cfg.couplings;
        c.lambda = lam;
        PerturbationSplit split = make_split(c, frame, full);
        EffectiveOperator eff = blk.order == 3 ? schrieffer_wolff3(split) : schrieffer_wolff2(split);
        EffectiveReport rep = match_effective(eff.op, c, sector, frame);
        nlohmann::json run;
        run["lambda"] = lam;
        run["order"] = blk.order;
        run["report"] = rep.to_json();
        run["sector_dim"] = sector.dim();
        auto rs = c.rescaling();
        run["rescaling"] = {{"alpha", rs.alpha}, {"g_squared", rs.g_squared},
                            {"fermion_mass", rs.fermion_mass}};
        auto sl = c.strong_limit();
        run["strong_limit"] = {{"magnetic_scale", sl.magnetic_scale},
                               {"dirac_scale", sl.dirac_scale},
                               {"electric_scale", sl.electric_scale},
                               {"ok", sl.ok}};
        if (blk.exact_block) {
            SectorBasis block = select_fermion_number_block(geom, cfg.twol, to_basis_frame(frame),
                                                            geom.n_vertices(), opts);
            if (static_cast<Eigen::Index>(block.dim()) > cfg.dense_cutoff)
                throw NumericalError("exact_block: invariant block dimension " +
                                     std::to_string(block.dim()) + " exceeds the dense cutoff");
            PerturbationSplit bsplit = make_split(c, frame, block);
            EffectiveOperator exact = derive_effective_exact(bsplit);
            EffectiveReport xrep = match_effective(exact.op, c, sector, frame);
            run["exact_report"] = xrep.to_json();
        }
        runs.push_back(run);
    }
    nlohmann::json out;
    out["schema_version"] = 1;
    out["frame"] = to_string(frame);
    out["runs"] = runs;

    std::filesystem::create_directories(out_dir);
    auto path = out_dir / "effective_report.json";
    write_json_file(path, out);
    res.outputs.push_back(path);
    res.summary["lambdas"] = lambdas;
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "validate-effective", res));
    res.outputs.push_back(mpath);
    return res;
}

inline RunResult run_evolve(const SimulationConfig& cfg, const std::filesystem::path& out_dir) {
    SimulationConfig::EvolveBlock blk = cfg.evolve ? *cfg.evolve : SimulationConfig::EvolveBlock{};
    LatticeGeometry geom = build_lattice(cfg.lattice);
    RunResult res;
    res.warnings = cfg.warnings;
    std::filesystem::create_directories(out_dir);

    std::vector<ObservableRecord> series;
    if (blk.hamiltonian == "primitive_constrained") {
        // full-space evolution under H_G + primitive terms; Gauss leakage reported
        Frame frame = cfg.frame == Frame::transformed ? Frame::primitive_psi : cfg.frame;
        EnumerationOptions opts;
        opts.state_budget = cfg.state_budget;
        opts.fermions_frozen = cfg.fermions_frozen;
        SectorBasis full = enumerate_full_basis(geom, cfg.twol, to_basis_frame(frame), opts);
        auto [hb, hf] = build_primitive(cfg.couplings, frame, full);
        SparseOperator h = build_HG(cfg.couplings, frame, full);
        h.mat += hb.mat;
        h.mat += hf.mat;
        uint64_t s0 = full.layout.vacuum();
        if (cfg.preparation && cfg.preparation->kind == PreparationKind::addressed)
            s0 = detail::apply_edits(full, cfg.preparation->edits);
        Vec psi = Vec::Zero(static_cast<Eigen::Index>(full.dim()));
        psi[static_cast<Eigen::Index>(*full.lookup(s0))] = 1.0;
        ObservableSet obs(full, cfg.couplings, frame);
        auto quanta = gauss_quanta_x4(full, frame);
        double t_prev = 0;
        Vec cur = psi;
        for (double t : blk.times.values()) {
            cur = krylov_expmv(h, cur, t - t_prev, KrylovOptions{blk.krylov_m, blk.krylov_tol, 4000});
            t_prev = t;
            ObservableRecord r = obs.measure(cur, t);
            double leak = 0;
            for (size_t i = 0; i < full.dim(); ++i)
                if (quanta[i] != 0) leak += std::norm(cur[static_cast<Eigen::Index>(i)]);
            r.sector_probabilities.push_back({"gauss_leakage", leak});
            series.push_back(std::move(r));
        }
    } else {
        SectorBasis sector = detail::make_sector(cfg, geom);
        PreparationPlan plan = cfg.preparation ? *cfg.preparation : PreparationPlan{};
        PreparedState prep = prepare(plan, sector, cfg.couplings, cfg.frame, cfg.dense_cutoff);
        SparseOperator h = detail::build_terms(cfg, blk.terms, blk.include_mu_renorm, sector);
        ObservableSet obs(sector, cfg.couplings, cfg.frame);
        bool use_dense = blk.method == "exact" ||
                         (blk.method == "auto" &&
                          static_cast<Eigen::Index>(sector.dim()) <= cfg.dense_cutoff);
        if (use_dense) {
            SpectralPropagator prop(h, cfg.dense_cutoff);
            for (double t : blk.times.values())
                series.push_back(obs.measure(prop.at(prep.state, t), t));
        } else {
            Vec cur = prep.state;
            double t_prev = 0;
            for (double t : blk.times.values()) {
                cur = krylov_expmv(h, cur, t - t_prev, KrylovOptions{blk.krylov_m, blk.krylov_tol, 4000});
                t_prev = t;
                series.push_back(obs.measure(cur, t));
            }
        }
        if (!prep.ground_fidelity.empty())
            res.summary["preparation_fidelity"] = prep.ground_fidelity;
    }

    auto path = out_dir / "timeseries.csv";
    write_observable_csv(path, series);
    res.outputs.push_back(path);
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "evolve", res));
    res.outputs.push_back(mpath);
    return res;
}

inline RunResult run_ramsey_cmd(const SimulationConfig& cfg, const std::filesystem::path& out_dir,
                                int workers = 1) {
    (void)workers;
    SimulationConfig::RamseyBlock blk = cfg.ramsey ? *cfg.ramsey : SimulationConfig::RamseyBlock{};
    RamseyConfig rc;
    rc.mode = blk.mode == "two_level" ? RamseyConfig::Mode::two_level
                                      : RamseyConfig::Mode::full_hamiltonian;
    rc.mu = cfg.couplings.mu;
    rc.pulse_strength = blk.pulse_strength;
    rc.tau = blk.tau;
    rc.flux_delta_L = blk.flux_delta_L;
    rc.T_values = blk.T.values();
    rc.leakage_bound = blk.leakage_bound;
    rc.meson_start = blk.meson_start;
    rc.meson_length = blk.meson_length;
    rc.meson_direction = blk.meson_direction;
    for (const std::string& t : blk.free_terms) {
        if (t == "mass") rc.free_include_mass = true;
        if (t == "dirac") rc.free_include_dirac = true;
        if (t == "magnetic") rc.free_include_magnetic = true;
    }

    RamseyResult result;
    if (rc.mode == RamseyConfig::Mode::two_level) {
        result = run_ramsey_two_level(rc, cfg.couplings);
    } else {
        LatticeGeometry geom = build_lattice(cfg.lattice);
        SectorBasis sector = detail::make_sector(cfg, geom);
        result = run_ramsey_full(rc, sector, cfg.couplings, cfg.frame, cfg.dense_cutoff);
    }

    RunResult res;
    res.warnings = cfg.warnings;
    std::filesystem::create_directories(out_dir);
    auto path = out_dir / "fringe.csv";
    {
        CsvWriter w(path);
        w.header({"T", "P_mn", "P_m1n", "leakage"});
        for (const FringePoint& p : result.table) w.row({p.T, p.p_mn, p.p_m1n, p.leakage});
    }
    res.outputs.push_back(path);

    std::vector<std::pair<double, double>> pts;
    for (const FringePoint& p : result.table) pts.push_back({p.T, p.p_mn});
    nlohmann::json fitj;
    if (pts.size() >= 8) {
        FringeFit fit = fit_fringe(pts);
        fitj = {{"frequency", fit.frequency},
                {"phase", fit.phase},
                {"visibility", fit.visibility},
                {"offset", fit.offset},
                {"rms_residual", fit.rms_residual},
                {"frequency_identifiable", fit.frequency_identifiable}};
    }
    res.summary["fit"] = fitj;
    res.summary["ramsey"] = result.metadata;
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "ramsey", res));
    res.outputs.push_back(mpath);
    return res;
}

inline RunResult run_break(const SimulationConfig& cfg, const std::filesystem::path& out_dir) {
    SimulationConfig::BreakingBlock blk = cfg.breaking ? *cfg.breaking
                                                       : SimulationConfig::BreakingBlock{};
    LatticeGeometry geom = build_lattice(cfg.lattice);
    SectorBasis sector = detail::make_sector(cfg, geom);

    PreparationPlan plan;
    plan.kind = PreparationKind::addressed;
    plan.edits = meson_edits(geom, sector.frame, blk.tube_start, blk.tube_length, blk.tube_direction);
    PreparedState prep = prepare(plan, sector, cfg.couplings, cfg.frame, cfg.dense_cutoff);

    BreakingConfig bc;
    bc.mass = blk.mass;
    bc.mu = cfg.couplings.mu;
    bc.tube_length = blk.tube_length;
    bc.tube_start = blk.tube_start;
    bc.tube_direction = blk.tube_direction;
    bc.times = blk.times.values();
    ExperimentRecord rec = run_breaking(bc, prep.state, sector, cfg.couplings, cfg.frame,
                                        cfg.dense_cutoff);

    RunResult res;
    res.warnings = cfg.warnings;
    std::filesystem::create_directories(out_dir);
    auto path = out_dir / "breaking.csv";
    write_observable_csv(path, rec.samples);
    res.outputs.push_back(path);
    double lo = 1, hi = 0;
    for (const auto& r : rec.samples)
        for (const auto& [name, p] : r.sector_probabilities)
            if (name == "broken") {
                lo = std::min(lo, p);
                hi = std::max(hi, p);
            }
    res.summary["breaking"] = rec.metadata;
    res.summary["broken_visibility"] = std::max(0.0, hi - lo);
    auto mpath = out_dir / "manifest.json";
    write_json_file(mpath, detail::manifest(cfg, "break", res));
    res.outputs.push_back(mpath);
    return res;
}

// ---------------------------------------------------------------------------
// Built-in invariant suite
// ---------------------------------------------------------------------------

namespace detail {

/// Dense annihilation operator for one fermionic mode over a basis, built
/// directly from the mode order (selfcheck oracle).
inline Mat dense_mode_annihilator(const SectorBasis& basis, int mode) {
    const auto n = static_cast<Eigen::Index>(basis.dim());
    Mat c = Mat::Zero(n, n);
    const BasisLayout& lay = basis.layout;
    for (Eigen::Index j = 0; j < n; ++j) {
        uint64_t s = basis.state(static_cast<size_t>(j));
        if (!lay.mode_occ(s, mode)) continue;
        uint64_t occ = s >> lay.vertex_base;
        int below = std::popcount(occ & ((uint64_t(1) << mode) - 1));
        uint64_t out = lay.with_mode(s, mode, 0);
        if (auto i = basis.lookup(out)) c(static_cast<Eigen::Index>(*i), j) = (below & 1) ? -1.0 : 1.0;
    }
    return c;
}

} // namespace detail

/// Runs the invariant suite on built-in small instances; prints one line per
/// check to `os`, returns true when everything passed.
inline bool selfcheck(std::ostream& os, uint64_t seed = 1) {
    struct Check {
        std::string name;
        std::function<bool()> fn;
    };
    std::vector<Check> checks;

    checks.push_back({"lattice counts (2x2 open: 4 vertices, 4 links, 1 plaquette)", [] {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        return g.n_vertices() == 4 && g.n_links() == 4 && g.n_plaquettes() == 1;
    }});

    checks.push_back({"canonical anticommutation on the 1x2 lattice", [] {
        LatticeGeometry g = build_lattice({1, 2, Boundary::open});
        SectorBasis full = enumerate_full_basis(g, 2, BasisFrame::primitive);
        int nm = 2 * g.n_vertices();
        for (int u = 0; u < nm; ++u)
            for (int v = 0; v < nm; ++v) {
                Mat cu = detail::dense_mode_annihilator(full, u);
                Mat cv = detail::dense_mode_annihilator(full, v);
                Mat anti = cu * cv.adjoint() + cv.adjoint() * cu;
                Mat expect = Mat::Zero(anti.rows(), anti.cols());
                if (u == v) expect = Mat::Identity(anti.rows(), anti.cols());
                if ((anti - expect).cwiseAbs().maxCoeff() > 1e-13) return false;
            }
        return true;
    }});

    checks.push_back({"staggered Gauss sum telescopes to minus the total charge", [seed] {
        LatticeGeometry g = build_lattice({4, 2, Boundary::periodic});
        BasisLayout lay(g, 2);
        std::mt19937_64 rng(seed);
        for (int trial = 0; trial < 64; ++trial) {
            uint64_t s = 0;
            for (int i = 0; i < lay.n_links(); ++i)
                s = lay.with_link_digit(s, i, static_cast<int>(rng() % 3));
            for (int m = 0; m < 2 * lay.n_vertices(); ++m)
                s = lay.with_mode(s, m, static_cast<int>(rng() % 2));
            int lhs = 0, q = 0;
            for (const VertexId& v : g.vertices()) {
                lhs += vertex_parity(v) *
                       gauss_eigenvalue(lay, s, v, BasisFrame::primitive);
                q += charge(lay, s, g.vertex_index(v));
            }
            if (lhs != -q) return false;
        }
        return true;
    }});

    checks.push_back({"every builder is hermitian on the single-plaquette instance", [] {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        SectorBasis full = enumerate_full_basis(g, 2, BasisFrame::transformed);
        CouplingSet c;
        return build_HE(c, full).hermiticity_error() < 1e-14 &&
               build_HB(c, Frame::transformed, full).hermiticity_error() < 1e-14 &&
               build_HD(c, Frame::transformed, full).hermiticity_error() < 1e-14 &&
               build_HM(c, Frame::transformed, full).hermiticity_error() < 1e-14 &&
               build_HG(c, Frame::transformed, full).hermiticity_error() < 1e-14;
    }});

    checks.push_back({"frame map carries the primitive magnetic term onto the transformed one", [] {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        EnumerationOptions opts;
        opts.fermions_frozen = true;
        SectorBasis bp = enumerate_full_basis(g, 2, BasisFrame::primitive, opts);
        SectorBasis bt = enumerate_full_basis(g, 2, BasisFrame::transformed, opts);
        CouplingSet c;
        SparseOperator hp = build_HB(c, Frame::primitive_psi, bp);
        SparseOperator ht = build_HB(c, Frame::transformed, bt);
        SparseOperator mapped = frame_map_operator(hp, bp, Frame::primitive_psi, bt,
                                                   Frame::transformed);
        SpMat diff = mapped.mat - ht.mat;
        double m = 0;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (SpMat::InnerIterator it(diff, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m < 1e-12;
    }});

    checks.push_back({"second-order block reproduces the plaquette amplitude", [] {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        EnumerationOptions opts;
        opts.fermions_frozen = true;
        SectorBasis full = enumerate_full_basis(g, 2, BasisFrame::primitive, opts);
        CouplingSet c;
        c.lambda = 200.0;
        c.beta = 0;
        c.eta = 0;
        c.mass = 0;
        PerturbationSplit split = make_split(c, Frame::primitive_psi, full);
        EffectiveOperator eff = schrieffer_wolff2(split);
        BasisLayout lay = full.layout;
        uint64_t vac = lay.vacuum();
        uint64_t loop = vac;
        const Plaquette& p = g.plaquettes()[0];
        std::array<int, 4> pat{+1, -1, +1, -1};
        for (int j = 0; j < 4; ++j) {
            int d = lay.link_digit(loop, p.link[static_cast<size_t>(j)]) + pat[static_cast<size_t>(j)];
            loop = lay.with_link_digit(loop, p.link[static_cast<size_t>(j)], d);
        }
        size_t iv = 0, il = 0;
        for (size_t i = 0; i < eff.states.size(); ++i) {
            if (eff.states[i] == vac) iv = i;
            if (eff.states[i] == loop) il = i;
        }
        cplx amp = eff.op(static_cast<Eigen::Index>(il), static_cast<Eigen::Index>(iv));
        double expect = -2.0 * c.omega * c.omega / c.lambda * 4.0;
        return std::abs(amp - cplx(expect, 0)) < 1e-12;
    }});

    checks.push_back({"two-level interferometer reproduces the closed-form fringe", [] {
        RamseyConfig rc;
        rc.mu = 1.0;
        for (int i = 0; i < 16; ++i) rc.T_values.push_back(0.5 * i);
        CouplingSet c;
        RamseyResult res = run_ramsey_two_level(rc, c);
        for (const FringePoint& p : res.table) {
            double expect = std::pow(std::sin(p.T / 2.0), 2);
            if (std::abs(p.p_mn - expect) > 1e-12) return false;
        }
        return true;
    }});

    checks.push_back({"krylov propagation matches the dense exponential", [seed] {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        SectorBasis sector = select_neutral_sector(g, 2, BasisFrame::transformed);
        CouplingSet c;
        SparseOperator h = build_Heff_analytic(c, Frame::transformed, sector);
        std::mt19937_64 rng(seed + 7);
        std::normal_distribution<double> gauss(0, 1);
        Vec v(static_cast<Eigen::Index>(sector.dim()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(gauss(rng), gauss(rng));
        v.normalize();
        Vec a = evolve(v, h, 7.5, EvolveMethod::exact());
        Vec b = evolve(v, h, 7.5, EvolveMethod::krylov_method(24, 1e-12));
        return (a - b).cwiseAbs().maxCoeff() < 1e-9;
    }});

    bool all = true;
    for (const Check& ch : checks) {
        bool ok = false;
        try {
            ok = ch.fn();
        } catch (const std::exception& e) {
            os << "[FAIL] " << ch.name << " (exception: " << e.what() << ")\n";
            all = false;
            continue;
        }
        os << (ok ? "[PASS] " : "[FAIL] ") << ch.name << "\n";
        all = all && ok;
    }
    return all;
}

} // namespace spingauge
