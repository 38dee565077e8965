#pragma once

// End-to-end protocols: state preparation (vacuum, adiabatic ramps, addressed
// edits), flux-tube breaking, and the two-meson Ramsey interferometer with its
// fringe fit.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spingauge/dynamics.hpp"
#include "spingauge/effective.hpp"
#include "spingauge/operators.hpp"

namespace spingauge {

enum class PreparationKind { vacuum, adiabatic_weak, loop_sea, addressed };

struct AddressedEdit {
    enum class Kind { set_link, raise_link, set_vertex } kind = Kind::set_link;
    LinkId link{};
    int value = 0; // target m (set_link) or dm (raise_link); integer l only
    VertexId vertex{};
    int occ_c = 0;
    int occ_d = 1;
};

struct PreparationPlan {
    PreparationKind kind = PreparationKind::vacuum;
    std::vector<std::pair<double, double>> omega_schedule; // (time, omega), monotone in time
    std::vector<AddressedEdit> edits;
};

struct PreparedState {
    StateVector state;
    std::vector<double> ground_fidelity; // per schedule segment, adiabatic kinds only
};

struct ExperimentRecord {
    std::vector<ObservableRecord> samples;
    nlohmann::json metadata;
};

namespace detail {

inline uint64_t apply_edits(const SectorBasis& basis, const std::vector<AddressedEdit>& edits) {
    const BasisLayout& lay = basis.layout;
    const LatticeGeometry& geom = *lay.geometry;
    uint64_t s = lay.vacuum();
    for (const AddressedEdit& e : edits) {
        switch (e.kind) {
            case AddressedEdit::Kind::set_link: {
                int li = geom.link_index(e.link);
                int digit = e.value + lay.twol / 2;
                if (digit < 0 || digit > lay.twol)
                    throw std::invalid_argument("addressed edit: |m| exceeds l on link " +
                                                std::to_string(li));
                s = lay.with_link_digit(s, li, digit);
                break;
            }
            case AddressedEdit::Kind::raise_link: {
                int li = geom.link_index(e.link);
                int digit = lay.link_digit(s, li) + e.value;
                if (digit < 0 || digit > lay.twol)
                    throw std::invalid_argument("addressed edit: raise leaves the multiplet on link " +
                                                std::to_string(li));
                s = lay.with_link_digit(s, li, digit);
                break;
            }
            case AddressedEdit::Kind::set_vertex: {
                int vi = geom.vertex_index(e.vertex);
                s = lay.with_mode(s, 2 * vi, e.occ_c);
                s = lay.with_mode(s, 2 * vi + 1, e.occ_d);
                break;
            }
        }
    }
    return s;
}

inline std::vector<int> gauss_violations(const SectorBasis& basis, uint64_t s) {
    std::vector<int> bad;
    const LatticeGeometry& geom = *basis.layout.geometry;
    for (int vi = 0; vi < geom.n_vertices(); ++vi) {
        int target = basis.target_g ? (*basis.target_g)[static_cast<size_t>(vi)] : 0;
        if (gauss_eigenvalue_x2(basis.layout, s, geom.vertices()[static_cast<size_t>(vi)],
                                basis.frame) != 2 * target)
            bad.push_back(vi);
    }
    return bad;
}

} // namespace detail

/// Edits that place a straight flux tube of the given length: charge +1 at
/// `start`, charge -1 at start + length*k^, tube links fluxed consistently
/// with the Gauss law of the basis frame.
inline std::vector<AddressedEdit> meson_edits(const LatticeGeometry& geom, BasisFrame frame,
                                              VertexId start, int length, int direction) {
    if (length < 1) throw std::invalid_argument("meson length must be >= 1");
    std::vector<AddressedEdit> edits;
    AddressedEdit q;
    q.kind = AddressedEdit::Kind::set_vertex;
    q.vertex = start;
    q.occ_c = 1;
    q.occ_d = 1;
    edits.push_back(q);
    VertexId v = start;
    int start_par = vertex_parity(start);
    for (int j = 0; j < length; ++j) {
        int m_tr = 1; // uniform +1 along the oriented tube in the transformed frame
        int m = m_tr;
        if (frame == BasisFrame::primitive) m = (j % 2 == 0) ? start_par : -start_par;
        AddressedEdit e;
        e.kind = AddressedEdit::Kind::set_link;
        e.link = LinkId{v, direction};
        e.value = m;
        edits.push_back(e);
        auto next = geom.neighbor(v, direction, +1);
        if (!next) throw std::invalid_argument("meson does not fit on the lattice");
        v = *next;
    }
    AddressedEdit qbar;
    qbar.kind = AddressedEdit::Kind::set_vertex;
    qbar.vertex = v;
    qbar.occ_c = 0;
    qbar.occ_d = 0;
    edits.push_back(qbar);
    return edits;
}

/// Edits that lay a closed rectangular flux loop with corner at `corner`,
/// `w` links wide and `h` links tall, charges untouched.
inline std::vector<AddressedEdit> loop_edits(const LatticeGeometry& geom, BasisFrame frame,
                                             VertexId corner, int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("loop extents must be >= 1");
    std::vector<AddressedEdit> edits;
    auto add = [&](VertexId origin, int k, int m_tr) {
        int m = m_tr;
        if (frame == BasisFrame::primitive && vertex_parity(origin) < 0) m = -m;
        AddressedEdit e;
        e.kind = AddressedEdit::Kind::set_link;
        e.link = LinkId{origin, k};
        e.value = m;
        edits.push_back(e);
    };
    VertexId v = corner;
    for (int j = 0; j < w; ++j) {
        add(v, 1, +1);
        v = *geom.neighbor(v, 1, +1);
    }
    for (int j = 0; j < h; ++j) {
        add(v, 2, +1);
        v = *geom.neighbor(v, 2, +1);
    }
    for (int j = 0; j < w; ++j) {
        v = *geom.neighbor(v, 1, -1);
        add(v, 1, -1);
    }
    for (int j = 0; j < h; ++j) {
        v = *geom.neighbor(v, 2, -1);
        add(v, 2, -1);
    }
    return edits;
}

/// Prepare a state in the sector. Addressed edits are validated against the
/// Gauss law and rejected with the list of violating vertices. The adiabatic
/// kinds evolve through the piecewise-constant omega schedule and report the
/// fidelity to the instantaneous ground state after each segment.
inline PreparedState prepare(const PreparationPlan& plan, const SectorBasis& sector,
                             const CouplingSet& couplings, Frame frame,
                             Eigen::Index dense_cutoff = 4096) {
    if (!sector.target_g)
        throw std::invalid_argument("prepare: a Gauss sector basis is required");
    PreparedState out;
    const BasisLayout& lay = sector.layout;

    uint64_t s0 = lay.vacuum();
    if (plan.kind == PreparationKind::addressed) s0 = detail::apply_edits(sector, plan.edits);
    if (auto bad = detail::gauss_violations(sector, s0); !bad.empty()) {
        std::ostringstream os;
        os << "prepared state violates the Gauss law at vertices";
        for (int v : bad) os << " " << v;
        throw std::invalid_argument(os.str());
    }
    auto idx = sector.lookup(s0);
    if (!idx) throw std::invalid_argument("prepared state is not in the sector basis");
    out.state = Vec::Zero(static_cast<Eigen::Index>(sector.dim()));
    out.state[static_cast<Eigen::Index>(*idx)] = cplx(1, 0);

    if (plan.kind == PreparationKind::adiabatic_weak || plan.kind == PreparationKind::loop_sea) {
        if (plan.omega_schedule.size() < 2)
            throw std::invalid_argument("adiabatic preparation needs an omega schedule");
        for (size_t i = 0; i + 1 < plan.omega_schedule.size(); ++i) {
            auto [t0, om] = plan.omega_schedule[i];
            double t1 = plan.omega_schedule[i + 1].first;
            if (t1 <= t0) throw std::invalid_argument("omega schedule must be monotone in time");
            CouplingSet c = couplings;
            c.omega = om;
            SparseOperator h = build_HE(c, sector);
            h.mat += build_HM(c, frame, sector).mat;
            h.mat += build_HB(c, frame, sector).mat;
            SpectralPropagator prop(h, dense_cutoff);
            out.state = prop.at(out.state, t1 - t0);
            Eigen::Index gs;
            prop.system().eigenvalues.minCoeff(&gs);
            cplx ov = prop.system().eigenvectors.col(gs).dot(out.state);
            out.ground_fidelity.push_back(std::norm(ov));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flux-tube breaking
// ---------------------------------------------------------------------------

struct BreakingConfig {
    double mass = 0.5;
    double mu = 1.0;
    int tube_length = 3;
    VertexId tube_start{0, 0};
    int tube_direction = 1;
    std::vector<double> times;
};

/// A tube of length L can break resonantly when 2M = mu L' for an integer
/// L' <= L (the consumed links pay for the new pair).
inline std::optional<int> breaking_resonance(const BreakingConfig& cfg) {
    for (int lp = 1; lp <= cfg.tube_length; ++lp)
        if (std::abs(2.0 * cfg.mass - cfg.mu * lp) <= 1e-9 * std::max(1.0, std::abs(cfg.mu * lp)))
            return lp;
    return std::nullopt;
}

/// Evolve a meson under the effective Hamiltonian and record the probability
/// of configurations with more charged vertices than the initial meson.
inline ExperimentRecord run_breaking(const BreakingConfig& cfg, const StateVector& initial,
                                     const SectorBasis& sector, const CouplingSet& couplings,
                                     Frame frame, Eigen::Index dense_cutoff = 4096) {
    CouplingSet c = couplings;
    c.mass = cfg.mass;
    c.mu = cfg.mu;
    SparseOperator h = build_Heff_analytic(c, frame, sector);

    const BasisLayout& lay = sector.layout;
    auto charged_count = [&](uint64_t s) {
        int n = 0;
        for (int v = 0; v < lay.n_vertices(); ++v)
            if (charge(lay, s, v) != 0) ++n;
        return n;
    };
    int initial_charged = 0;
    {
        double best = -1;
        for (size_t i = 0; i < sector.dim(); ++i) {
            double w = std::norm(initial[static_cast<Eigen::Index>(i)]);
            if (w > best) {
                best = w;
                initial_charged = charged_count(sector.state(i));
            }
        }
    }

    ObservableSet obs(sector, c, frame);
    ExperimentRecord rec;
    rec.metadata["initial_charged_vertices"] = initial_charged;
    auto resonance = breaking_resonance(cfg);
    rec.metadata["resonant"] = resonance.has_value();
    rec.metadata["resonant_segment"] = resonance ? nlohmann::json(*resonance) : nlohmann::json();

    const bool dense = static_cast<Eigen::Index>(sector.dim()) <= dense_cutoff;
    std::optional<SpectralPropagator> prop;
    if (dense) prop.emplace(h, dense_cutoff);

    StateVector psi = initial;
    double t_prev = 0;
    for (double t : cfg.times) {
        if (dense) {
            psi = prop->at(initial, t);
        } else {
            psi = krylov_expmv(h, psi, t - t_prev);
            t_prev = t;
        }
        ObservableRecord r = obs.measure(psi, t);
        double broken = probability_where(sector, psi, [&](uint64_t s) {
            return charged_count(s) >= initial_charged + 2;
        });
        double total_q = 0;
        for (size_t i = 0; i < sector.dim(); ++i) {
            double w = std::norm(psi[static_cast<Eigen::Index>(i)]);
            for (int v = 0; v < lay.n_vertices(); ++v) total_q += w * charge(lay, sector.state(i), v);
        }
        r.sector_probabilities.push_back({"broken", broken});
        r.sector_probabilities.push_back({"survival", std::norm(initial.dot(psi))});
        r.sector_probabilities.push_back({"total_charge", total_q});
        rec.samples.push_back(std::move(r));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Ramsey interferometry
// ---------------------------------------------------------------------------

struct RamseyConfig {
    enum class Mode { two_level, full_hamiltonian } mode = Mode::two_level;
    double mu = 1.0;
    double pulse_strength = 0; // 0 = derive eta*beta/(sqrt(2) lambda) from couplings
    double tau = 0;            // 0 = derive pi/(4 * pulse_strength)
    int flux_delta_L = 1;
    std::vector<double> T_values;
    double leakage_bound = 0.05;
    // full mode embedding
    VertexId meson_start{1, 0};
    int meson_length = 3;
    int meson_direction = 1;
    bool free_include_mass = false;
    bool free_include_dirac = false;
    bool free_include_magnetic = false;
};

struct FringePoint {
    double T = 0;
    double p_mn = 0;
    double p_m1n = 0;
    double leakage = 0;
};

struct RamseyResult {
    std::vector<FringePoint> table;
    nlohmann::json metadata;
};

inline void resolve_pulse_defaults(RamseyConfig& cfg, const CouplingSet& c) {
    if (cfg.pulse_strength == 0)
        cfg.pulse_strength = c.eta * c.beta / (std::numbers::sqrt2 * c.lambda);
    if (cfg.tau == 0) cfg.tau = std::numbers::pi / (4.0 * cfg.pulse_strength);
}

/// Two-level reference: H0 = mu*dL |up><up|, pulses exp(-i tau H_y) with
/// H_y = pulse_strength * sigma_y. Basis order (up, down), start in |down>.
inline RamseyResult run_ramsey_two_level(RamseyConfig cfg, const CouplingSet& couplings) {
    resolve_pulse_defaults(cfg, couplings);
    RamseyResult out;
    const double theta = cfg.pulse_strength * cfg.tau;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double gap = cfg.mu * cfg.flux_delta_L;
    for (double T : cfg.T_values) {
        cplx up(0, 0), dn(1, 0);
        auto pulse = [&]() {
            cplx u2 = cs * up - sn * dn;
            cplx d2 = sn * up + cs * dn;
            up = u2;
            dn = d2;
        };
        pulse();
        up *= std::exp(cplx(0, -gap * T));
        pulse();
        out.table.push_back({T, std::norm(dn), std::norm(up), 0.0});
    }
    out.metadata["mode"] = "two_level";
    out.metadata["tau"] = cfg.tau;
    out.metadata["pulse_strength"] = cfg.pulse_strength;
    out.metadata["gap"] = gap;
    return out;
}

/// Full-Hamiltonian mode: the |R>, |R+1> mesons are embedded in the Gauss
/// sector of the given lattice, the pulse is the hop-with-link bilinear on the
/// extension link scaled so its two-level matrix element equals
/// pulse_strength, and the free evolution runs under the electric sum (other
/// terms switchable). Reports subspace leakage per T.
inline RamseyResult run_ramsey_full(RamseyConfig cfg, const SectorBasis& sector,
                                    const CouplingSet& couplings, Frame frame,
                                    Eigen::Index dense_cutoff = 4096) {
    resolve_pulse_defaults(cfg, couplings);
    if (cfg.flux_delta_L != 1)
        throw std::invalid_argument("full_hamiltonian mode supports flux_delta_L = 1");
    const LatticeGeometry& geom = *sector.layout.geometry;
    auto back = geom.neighbor(cfg.meson_start, cfg.meson_direction, -1);
    if (!back) throw std::invalid_argument("meson_start needs a free vertex behind it");

    auto mk_state = [&](const std::vector<AddressedEdit>& edits) {
        uint64_t s = detail::apply_edits(sector, edits);
        auto idx = sector.lookup(s);
        if (!idx) throw std::invalid_argument("meson state is not in the sector");
        return *idx;
    };
    size_t iR = mk_state(meson_edits(geom, sector.frame, cfg.meson_start, cfg.meson_length,
                                     cfg.meson_direction));
    size_t iR1 = mk_state(meson_edits(geom, sector.frame, *back, cfg.meson_length + 1,
                                      cfg.meson_direction));

    // pulse bilinear: move the C fermion across the extension link, flipping
    // the link flux; rescaled so <R+1|H_y|R> has magnitude pulse_strength
    int ext_link = geom.link_index({*back, cfg.meson_direction});
    int v_from = geom.vertex_index(cfg.meson_start);
    int v_to = geom.vertex_index(*back);
    SparseOperator hy = detail::assemble(sector, [&](uint64_t s, auto&& emit) {
        uint64_t s1;
        double lamp, sign;
        // i c^dag_to c_from L_dir + H.c., link direction fixed by the sector lookup
        for (int dir : {+1, -1}) {
            uint64_t s2;
            if (!detail::apply_ladder(sector.layout, s, ext_link, dir > 0, s1, lamp)) continue;
            int cre = dir > 0 ? v_to : v_from;
            int ann = dir > 0 ? v_from : v_to;
            if (!detail::apply_bilinear(sector.layout, s1, 2 * cre, 2 * ann, s2, sign)) continue;
            emit(s2, cplx(0, dir > 0 ? 1.0 : -1.0) * lamp * sign);
        }
    });
    cplx elem = hy.mat.coeff(static_cast<Eigen::Index>(iR1), static_cast<Eigen::Index>(iR));
    if (std::abs(elem) == 0.0) throw NumericalError("ramsey: pulse does not couple the meson pair");
    hy.mat *= cplx(cfg.pulse_strength / std::abs(elem), 0);

    CouplingSet cfree = couplings;
    cfree.mu = cfg.mu;
    SparseOperator hfree = build_HE(cfree, sector);
    if (cfg.free_include_mass) hfree.mat += build_HM(cfree, frame, sector).mat;
    if (cfg.free_include_dirac) hfree.mat += build_HD(cfree, frame, sector).mat;
    if (cfg.free_include_magnetic) hfree.mat += build_HB(cfree, frame, sector).mat;

    SpectralPropagator pulse_prop(hy, dense_cutoff);
    SpectralPropagator free_prop(hfree, dense_cutoff);

    Vec psi0 = Vec::Zero(static_cast<Eigen::Index>(sector.dim()));
    psi0[static_cast<Eigen::Index>(iR)] = cplx(1, 0);

    RamseyResult out;
    double worst_leak = 0;
    for (double T : cfg.T_values) {
        Vec psi = pulse_prop.at(psi0, cfg.tau);
        psi = free_prop.at(psi, T);
        psi = pulse_prop.at(psi, cfg.tau);
        double p_mn = 0, p_m1n = 0;
        for (size_t i = 0; i < sector.dim(); ++i) {
            double w = std::norm(psi[static_cast<Eigen::Index>(i)]);
            if (sector.layout.occ_c(sector.state(i), v_from)) p_mn += w;
            if (sector.layout.occ_c(sector.state(i), v_to)) p_m1n += w;
        }
        double leak = 1.0 - std::norm(psi[static_cast<Eigen::Index>(iR)]) -
                      std::norm(psi[static_cast<Eigen::Index>(iR1)]);
        worst_leak = std::max(worst_leak, leak);
        out.table.push_back({T, p_mn, p_m1n, leak});
    }
    if (worst_leak > cfg.leakage_bound)
        throw NumericalError("ramsey: two-level subspace leakage " + std::to_string(worst_leak) +
                             " exceeds the bound " + std::to_string(cfg.leakage_bound));
    out.metadata["mode"] = "full_hamiltonian";
    out.metadata["tau"] = cfg.tau;
    out.metadata["pulse_strength"] = cfg.pulse_strength;
    out.metadata["max_leakage"] = worst_leak;
    out.metadata["tau_much_less_than_T"] =
        cfg.T_values.empty() ? false : cfg.tau * 10 <= cfg.T_values.back();
    return out;
}

// ---------------------------------------------------------------------------
// Fringe fitting: a sin^2(w T / 2 + phi) + c by separable least squares
// ---------------------------------------------------------------------------

struct FringeFit {
    double frequency = 0;
    double phase = 0;
    double visibility = 0;
    double offset = 0;
    double rms_residual = 0;
    bool frequency_identifiable = true;
};

namespace detail {

struct LinearFringe {
    double a = 0, phi = 0, c = 0, rss = 0;
};

inline LinearFringe fringe_linear_fit(const std::vector<std::pair<double, double>>& pts, double w) {
    // P = A + B cos(wT) + C sin(wT)
    Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    for (auto [t, p] : pts) {
        Eigen::Vector3d x(1.0, std::cos(w * t), std::sin(w * t));
        g += x * x.transpose();
        r += p * x;
    }
    Eigen::Vector3d abc = g.ldlt().solve(r);
    double rss = 0;
    for (auto [t, p] : pts) {
        double model = abc[0] + abc[1] * std::cos(w * t) + abc[2] * std::sin(w * t);
        rss += (p - model) * (p - model);
    }
    LinearFringe f;
    f.a = 2.0 * std::hypot(abc[1], abc[2]);
    f.phi = 0.5 * std::atan2(abc[2], -abc[1]);
    f.c = abc[0] - f.a / 2.0;
    f.rss = rss;
    return f;
}

} // namespace detail

inline FringeFit fit_fringe(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 8)
        throw std::invalid_argument("fit_fringe needs at least 8 samples spanning a period");
    double tmin = pts.front().first, tmax = pts.front().first;
    double pmax = 0;
    for (auto [t, p] : pts) {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
        pmax = std::max(pmax, std::abs(p));
    }
    double span = tmax - tmin;
    if (span <= 0) throw std::invalid_argument("fit_fringe: degenerate time axis");
    double min_dt = span;
    {
        std::vector<double> ts;
        for (auto [t, p] : pts) ts.push_back(t);
        std::sort(ts.begin(), ts.end());
        for (size_t i = 1; i < ts.size(); ++i)
            if (ts[i] - ts[i - 1] > 1e-12 * span) min_dt = std::min(min_dt, ts[i] - ts[i - 1]);
    }

    const double wlo = 0.05 * 2.0 * std::numbers::pi / span;
    const double whi = 0.999 * std::numbers::pi / min_dt;
    const int ngrid = 4000;
    double best_w = wlo, best_rss = std::numeric_limits<double>::max();
    for (int i = 0; i <= ngrid; ++i) {
        double w = wlo + (whi - wlo) * i / ngrid;
        double rss = detail::fringe_linear_fit(pts, w).rss;
        if (rss < best_rss) {
            best_rss = rss;
            best_w = w;
        }
    }
    // golden-section refinement around the best grid point
    double lo = std::max(wlo, best_w - (whi - wlo) / ngrid);
    double hi = std::min(whi, best_w + (whi - wlo) / ngrid);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = detail::fringe_linear_fit(pts, x1).rss, f2 = detail::fringe_linear_fit(pts, x2).rss;
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = detail::fringe_linear_fit(pts, x1).rss;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = detail::fringe_linear_fit(pts, x2).rss;
        }
    }
    double w = (lo + hi) / 2.0;
    detail::LinearFringe lf = detail::fringe_linear_fit(pts, w);

    FringeFit fit;
    fit.frequency = w;
    fit.phase = lf.phi;
    fit.visibility = lf.a;
    fit.offset = lf.c;
    fit.rms_residual = std::sqrt(lf.rss / static_cast<double>(pts.size()));
    if (std::abs(lf.a) < 1e-10 * std::max(pmax, 1.0)) {
        fit.frequency_identifiable = false;
        fit.visibility = 0;
    }
    return fit;
}

} // namespace spingauge
