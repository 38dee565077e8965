#pragma once

// Sparse assembly of every Hamiltonian of the model over a chosen basis, in
// any of the three frames, plus the frame maps relating them.
//
// Conventions fixed here once:
//  * Angular momentum operators are the textbook spin-l matrices,
//    <m+1|L+|m> = sqrt(l(l+1)-m(m+1)), Lx = (L+ + L-)/2.
//  * The species-rotation term of the primitive theory acts as
//    2*beta*(L+ + L-) per link (amplitude 2*beta per |m> -> |m+-1> step), so
//    its double action produces the -(4*beta^2/lambda)(L^2 - Lz^2) diagonal.
//  * The link-link term acts as omega*(L+ L- + L- L+) per unordered pair of
//    distinct links sharing a vertex, so a plaquette acquires the coefficient
//    -(2*omega^2/lambda) at second order.
//  * Fermion tunneling acts as i*(eta/2)*(psi^dag sigma_k psi - H.c.), so the
//    second-order hop-rotation cross term carries eta*beta/lambda exactly.
//  * Jordan-Wigner mode order: vertices row-major, C before D.

#include <complex>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "spingauge/basis.hpp"
#include "spingauge/lattice.hpp"

namespace spingauge {

using cplx = std::complex<double>;
using SpMat = Eigen::SparseMatrix<cplx>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

enum class Frame { primitive_psi, transformed, primitive_chi };

inline std::string to_string(Frame f) {
    switch (f) {
        case Frame::primitive_psi: return "primitive_psi";
        case Frame::transformed: return "transformed";
        default: return "primitive_chi";
    }
}

inline BasisFrame to_basis_frame(Frame f) {
    return f == Frame::transformed ? BasisFrame::transformed : BasisFrame::primitive;
}

struct CouplingSet {
    double lambda = 1000.0; // constraint strength; must dominate every other scale
    double mu = 1.0;        // electric
    double beta = 0.1;      // link species rotation
    double omega = 0.1;     // link-link
    double eta = 0.1;       // fermion tunneling
    double mass = 0.1;      // fermion mass M
    int twol = 2;           // spin length 2l

    double l_val() const { return twol / 2.0; }
    double l_l_plus_1() const { return twol * (twol + 2) / 4.0; }

    /// lambda >> mu, beta, omega, eta, M (by the given factor).
    bool hierarchy_satisfied(double factor = 10.0) const {
        double top = std::max({std::abs(mu), std::abs(beta), std::abs(omega), std::abs(eta),
                               std::abs(mass)});
        return lambda > 0 && lambda >= factor * top;
    }

    /// 2 Omega^2 l^2 (l+1)^2 / lambda  <<  eta beta sqrt(l(l+1)) / lambda  <<  mu
    struct StrongLimit {
        double magnetic_scale = 0;
        double dirac_scale = 0;
        double electric_scale = 0;
        bool ok = false;
    };
    StrongLimit strong_limit(double factor = 10.0) const {
        StrongLimit s;
        double ll1 = l_l_plus_1();
        s.magnetic_scale = 2.0 * omega * omega * ll1 * ll1 / lambda;
        s.dirac_scale = eta * beta * std::sqrt(ll1) / lambda;
        s.electric_scale = mu;
        s.ok = factor * s.magnetic_scale <= s.dirac_scale && factor * s.dirac_scale <= s.electric_scale;
        return s;
    }

    /// Rescaling onto the gauge theory: alpha = 2 eta beta sqrt(l(l+1)) / lambda,
    /// g^2 = 2 mu / alpha, m = M / alpha.
    struct Rescaling {
        double alpha = 0;
        double g_squared = 0;
        double fermion_mass = 0;
    };
    Rescaling rescaling() const {
        Rescaling r;
        r.alpha = 2.0 * eta * beta * std::sqrt(l_l_plus_1()) / lambda;
        r.g_squared = r.alpha != 0 ? 2.0 * mu / r.alpha : 0.0;
        r.fermion_mass = r.alpha != 0 ? mass / r.alpha : 0.0;
        return r;
    }
};

struct SparseOperator {
    SpMat mat;
    std::string basis_tag;

    Eigen::Index dim() const { return mat.rows(); }

    SparseOperator adjoint() const { return {SpMat(mat.adjoint()), basis_tag}; }

    double hermiticity_error() const {
        SpMat d = mat - SpMat(mat.adjoint());
        double m = 0;
        for (int k = 0; k < d.outerSize(); ++k)
            for (SpMat::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }

    double max_abs() const {
        double m = 0;
        for (int k = 0; k < mat.outerSize(); ++k)
            for (SpMat::InnerIterator it(mat, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }

    Mat dense() const { return Mat(mat); }
};

inline SparseOperator commutator(const SparseOperator& a, const SparseOperator& b) {
    return {SpMat(a.mat * b.mat - b.mat * a.mat), a.basis_tag};
}

/// Max entry of [H, D] for diagonal D, computed entrywise as H_rc (d_c - d_r).
inline double commutator_with_diagonal_max(const SparseOperator& h, const std::vector<double>& d) {
    double m = 0;
    for (int k = 0; k < h.mat.outerSize(); ++k)
        for (SpMat::InnerIterator it(h.mat, k); it; ++it)
            m = std::max(m, std::abs(it.value()) *
                                std::abs(d[static_cast<size_t>(it.col())] - d[static_cast<size_t>(it.row())]));
    return m;
}

namespace detail {

constexpr double kAssemblyDropTol = 1e-15;

inline double lplus_elem(int twol, int twom) {
    return 0.5 * std::sqrt(static_cast<double>(twol * (twol + 2) - twom * (twom + 2)));
}
inline double lminus_elem(int twol, int twom) {
    return 0.5 * std::sqrt(static_cast<double>(twol * (twol + 2) - twom * (twom - 2)));
}

/// |s> -> amp |s'> under L+ (up) or L- (down) on one link; empty at the edge
/// of the multiplet.
inline bool apply_ladder(const BasisLayout& lay, uint64_t s, int link, bool up, uint64_t& out,
                         double& amp) {
    int digit = lay.link_digit(s, link);
    int twom = 2 * digit - lay.twol;
    if (up) {
        if (digit >= lay.twol) return false;
        out = lay.with_link_digit(s, link, digit + 1);
        amp = lplus_elem(lay.twol, twom);
    } else {
        if (digit <= 0) return false;
        out = lay.with_link_digit(s, link, digit - 1);
        amp = lminus_elem(lay.twol, twom);
    }
    return true;
}

/// c^dag_cre c_ann with the Jordan-Wigner sign (occupied modes strictly
/// between the two modes in the global order).
inline bool apply_bilinear(const BasisLayout& lay, uint64_t s, int cre_mode, int ann_mode,
                           uint64_t& out, double& sign) {
    if (cre_mode == ann_mode) {
        if (!lay.mode_occ(s, ann_mode)) return false;
        out = s;
        sign = 1.0;
        return true;
    }
    if (!lay.mode_occ(s, ann_mode) || lay.mode_occ(s, cre_mode)) return false;
    int lo = std::min(cre_mode, ann_mode), hi = std::max(cre_mode, ann_mode);
    uint64_t occ_bits = s >> lay.vertex_base;
    uint64_t between = occ_bits & ((uint64_t(1) << hi) - 1) & ~((uint64_t(2) << lo) - 1);
    sign = (std::popcount(between) & 1) ? -1.0 : 1.0;
    out = lay.with_mode(lay.with_mode(s, ann_mode, 0), cre_mode, 1);
    return true;
}

template <typename Gen>
SparseOperator assemble(const SectorBasis& basis, Gen&& gen) {
    std::vector<Eigen::Triplet<cplx>> trips;
    const auto n = static_cast<Eigen::Index>(basis.dim());
    for (Eigen::Index col = 0; col < n; ++col) {
        gen(basis.state(static_cast<size_t>(col)), [&](uint64_t s, cplx amp) {
            if (amp == cplx(0.0, 0.0)) return;
            if (auto row = basis.lookup(s))
                trips.emplace_back(static_cast<Eigen::Index>(*row), col, amp);
        });
    }
    SparseOperator op{SpMat(n, n), basis.tag()};
    op.mat.setFromTriplets(trips.begin(), trips.end());
    op.mat.prune([](const Eigen::Index&, const Eigen::Index&, const cplx& v) {
        return std::abs(v) > kAssemblyDropTol;
    });
    op.mat.makeCompressed();
    return op;
}

inline SparseOperator assemble_diagonal(const SectorBasis& basis,
                                        const std::function<double(uint64_t)>& f) {
    std::vector<Eigen::Triplet<cplx>> trips;
    const auto n = static_cast<Eigen::Index>(basis.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        double v = f(basis.state(static_cast<size_t>(i)));
        if (std::abs(v) > kAssemblyDropTol) trips.emplace_back(i, i, cplx(v, 0.0));
    }
    SparseOperator op{SpMat(n, n), basis.tag()};
    op.mat.setFromTriplets(trips.begin(), trips.end());
    op.mat.makeCompressed();
    return op;
}

using Species2x2 = std::array<std::array<cplx, 2>, 2>;

inline Species2x2 pauli(int k) {
    const cplx i(0.0, 1.0);
    switch (k) {
        case 0: return {{{1, 0}, {0, 1}}};
        case 1: return {{{0, 1}, {1, 0}}};
        case 2: return {{{0, -i}, {i, 0}}};
        default: return {{{1, 0}, {0, -1}}};
    }
}

inline Species2x2 mul(const Species2x2& a, const Species2x2& b) {
    Species2x2 c{};
    for (int r = 0; r < 2; ++r)
        for (int s = 0; s < 2; ++s) c[r][s] = a[r][0] * b[0][s] + a[r][1] * b[1][s];
    return c;
}

inline Species2x2 dagger(const Species2x2& a) {
    return {{{std::conj(a[0][0]), std::conj(a[1][0])}, {std::conj(a[0][1]), std::conj(a[1][1])}}};
}

/// One hop-with-link term scalar * (psi^dag_cre S psi_ann) * Ladder(link),
/// applied to a packed state. ladder: +1 up, -1 down, 0 none.
struct HopTerm {
    int cre_vertex;
    int ann_vertex;
    Species2x2 species;
    int link;
    int ladder;
    cplx scalar;
};

template <typename Emit>
void apply_hop_term(const BasisLayout& lay, const HopTerm& t, uint64_t s, Emit&& emit) {
    uint64_t s1 = s;
    double lamp = 1.0;
    if (t.ladder != 0 && !apply_ladder(lay, s, t.link, t.ladder > 0, s1, lamp)) return;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            if (t.species[a][b] == cplx(0.0, 0.0)) continue;
            uint64_t s2;
            double sign;
            if (!apply_bilinear(lay, s1, 2 * t.cre_vertex + a, 2 * t.ann_vertex + b, s2, sign))
                continue;
            emit(s2, t.scalar * t.species[a][b] * lamp * sign);
        }
    }
}

/// Unordered pairs of distinct links sharing at least one vertex.
inline std::vector<std::pair<int, int>> intersecting_link_pairs(const LatticeGeometry& geom) {
    std::set<std::pair<int, int>> pairs;
    for (const VertexId& v : geom.vertices()) {
        auto star = geom.star_links(v);
        for (size_t a = 0; a < star.size(); ++a)
            for (size_t b = a + 1; b < star.size(); ++b) {
                int i = star[a].link, j = star[b].link;
                if (i == j) continue;
                pairs.insert({std::min(i, j), std::max(i, j)});
            }
    }
    return {pairs.begin(), pairs.end()};
}

inline void require_sector_frame(const SectorBasis& basis, Frame frame, const char* what) {
    if (basis.target_g && basis.frame != to_basis_frame(frame))
        throw std::invalid_argument(std::string(what) + ": sector basis frame " +
                                    to_string(basis.frame) + " does not match operator frame " +
                                    to_string(frame));
}

} // namespace detail

enum class LinkOpKind { Lz, Lz2, Lplus, Lminus, Lx, Ly };

/// Standard spin-l matrix on one link factor, identity elsewhere.
inline SparseOperator link_operator(LinkOpKind kind, int link, const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    if (link < 0 || link >= lay.n_links()) throw std::invalid_argument("unknown link index");
    return detail::assemble(basis, [&](uint64_t s, auto&& emit) {
        double m = lay.twom(s, link) / 2.0;
        uint64_t up, dn;
        double fu, fd;
        bool has_up = detail::apply_ladder(lay, s, link, true, up, fu);
        bool has_dn = detail::apply_ladder(lay, s, link, false, dn, fd);
        switch (kind) {
            case LinkOpKind::Lz: emit(s, cplx(m, 0)); break;
            case LinkOpKind::Lz2: emit(s, cplx(m * m, 0)); break;
            case LinkOpKind::Lplus:
                if (has_up) emit(up, cplx(fu, 0));
                break;
            case LinkOpKind::Lminus:
                if (has_dn) emit(dn, cplx(fd, 0));
                break;
            case LinkOpKind::Lx:
                if (has_up) emit(up, cplx(0.5 * fu, 0));
                if (has_dn) emit(dn, cplx(0.5 * fd, 0));
                break;
            case LinkOpKind::Ly:
                if (has_up) emit(up, cplx(0, -0.5 * fu));
                if (has_dn) emit(dn, cplx(0, 0.5 * fd));
                break;
        }
    });
}

struct FermionMode {
    int vertex = 0;  // row-major vertex index
    int species = 0; // 0 = C, 1 = D
};

/// Second-quantized c^dag_creator c_annihilator with Jordan-Wigner signs.
inline SparseOperator fermion_bilinear(FermionMode cre, FermionMode ann, const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    int cm = 2 * cre.vertex + cre.species, am = 2 * ann.vertex + ann.species;
    return detail::assemble(basis, [&](uint64_t s, auto&& emit) {
        uint64_t out;
        double sign;
        if (detail::apply_bilinear(lay, s, cm, am, out, sign)) emit(out, cplx(sign, 0));
    });
}

/// Diagonal Gauss generator G_v in the requested frame.
inline SparseOperator gauss_operator(const VertexId& v, Frame frame, const SectorBasis& basis) {
    return detail::assemble_diagonal(basis, [&](uint64_t s) {
        return gauss_eigenvalue_x2(basis.layout, s, v, to_basis_frame(frame)) / 2.0;
    });
}

inline SparseOperator charge_operator(const VertexId& v, const SectorBasis& basis) {
    int vi = basis.layout.geometry->vertex_index(v);
    return detail::assemble_diagonal(basis,
                                     [&, vi](uint64_t s) { return double(charge(basis.layout, s, vi)); });
}

inline SparseOperator total_charge_operator(const SectorBasis& basis) {
    return detail::assemble_diagonal(basis, [&](uint64_t s) {
        int q = 0;
        for (int v = 0; v < basis.layout.n_vertices(); ++v) q += charge(basis.layout, s, v);
        return double(q);
    });
}

/// Diagonal of H_G = lambda sum_v G_v^2 as exact integer quanta (sum of 4 G_v^2).
inline std::vector<long long> gauss_quanta_x4(const SectorBasis& basis, Frame frame) {
    std::vector<long long> q(basis.dim());
    for (size_t i = 0; i < basis.dim(); ++i)
        q[i] = gauss_violation_x4(basis.layout, basis.state(i), to_basis_frame(frame));
    return q;
}

/// H_G = lambda sum_v G_v^2: diagonal, non-negative, zero exactly on the sector.
inline SparseOperator build_HG(const CouplingSet& c, Frame frame, const SectorBasis& basis) {
    return detail::assemble_diagonal(basis, [&](uint64_t s) {
        return c.lambda * (gauss_violation_x4(basis.layout, s, to_basis_frame(frame)) / 4.0);
    });
}

/// Electric sum mu * Lz^2 over links (frame independent).
inline SparseOperator build_HE(const CouplingSet& c, const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    return detail::assemble_diagonal(basis, [&](uint64_t s) {
        double acc = 0;
        for (int i = 0; i < lay.n_links(); ++i) {
            double m = lay.twom(s, i) / 2.0;
            acc += m * m;
        }
        return c.mu * acc;
    });
}

namespace detail {

inline SparseOperator assemble_mass(double coeff, Frame frame, const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    const LatticeGeometry& geom = *lay.geometry;
    return assemble_diagonal(basis, [&, coeff](uint64_t s) {
        double acc = 0;
        for (int v = 0; v < lay.n_vertices(); ++v) {
            double stag = frame == Frame::primitive_chi
                              ? vertex_parity(geom.vertices()[static_cast<size_t>(v)])
                              : 1.0;
            acc += stag * (lay.occ_c(s, v) - lay.occ_d(s, v));
        }
        return coeff * acc;
    });
}

/// Plaquette ladder pattern per frame on (bottom, right, top, left):
/// transformed (+,+,-,-), primitive (+,-,+,-).
inline std::array<int, 4> plaquette_pattern(Frame frame) {
    return frame == Frame::transformed ? std::array<int, 4>{+1, +1, -1, -1}
                                       : std::array<int, 4>{+1, -1, +1, -1};
}

template <typename Emit>
void apply_plaquette_product(const BasisLayout& lay, const Plaquette& p,
                             const std::array<int, 4>& pat, cplx scalar, uint64_t s, Emit&& emit) {
    uint64_t cur = s;
    double amp = 1.0;
    for (int j = 0; j < 4; ++j) {
        uint64_t nxt;
        double a;
        if (!apply_ladder(lay, cur, p.link[static_cast<size_t>(j)], pat[static_cast<size_t>(j)] > 0,
                          nxt, a))
            return;
        cur = nxt;
        amp *= a;
    }
    emit(cur, scalar * amp);
}

inline SparseOperator assemble_magnetic(double coeff, Frame frame, const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    const auto& plaqs = lay.geometry->plaquettes();
    auto pat = plaquette_pattern(frame);
    std::array<int, 4> hc{-pat[0], -pat[1], -pat[2], -pat[3]};
    return assemble(basis, [&](uint64_t s, auto&& emit) {
        for (const Plaquette& p : plaqs) {
            apply_plaquette_product(lay, p, pat, cplx(coeff, 0), s, emit);
            apply_plaquette_product(lay, p, hc, cplx(coeff, 0), s, emit);
        }
    });
}

/// Hop/link terms of the gauge-matter coupling, unit overall coefficient.
/// transformed:  i (psi^dag_{n+k} sigma_k psi_n L-_{n,k} - H.c.)
/// primitive_psi: -i (psi^dag_n sigma_k psi_{n+k} L_{s,n,k} - H.c.), s=+ on even origins
/// primitive_chi: the psi form conjugated by the odd-vertex species swap.
inline std::vector<HopTerm> dirac_terms(Frame frame, const BasisLayout& lay, cplx coeff) {
    const LatticeGeometry& geom = *lay.geometry;
    std::vector<HopTerm> terms;
    for (int li = 0; li < geom.n_links(); ++li) {
        const LinkId& l = geom.links()[static_cast<size_t>(li)];
        int origin = geom.vertex_index(l.origin);
        int head = geom.vertex_index(geom.link_head(li));
        int par = vertex_parity(l.origin);
        Species2x2 sk = pauli(l.direction == 1 ? 1 : 2);
        if (frame == Frame::transformed) {
            HopTerm t{head, origin, sk, li, -1, coeff * cplx(0, 1)};
            HopTerm tdag{origin, head, dagger(sk), li, +1, std::conj(coeff * cplx(0, 1))};
            terms.push_back(t);
            terms.push_back(tdag);
        } else {
            Species2x2 sp = sk;
            if (frame == Frame::primitive_chi) {
                int ph = vertex_parity(geom.link_head(li));
                if (par < 0) sp = mul(pauli(1), sp);
                if (ph < 0) sp = mul(sp, pauli(1));
            }
            int ladder = par > 0 ? +1 : -1;
            HopTerm t{origin, head, sp, li, ladder, -coeff * cplx(0, 1)};
            HopTerm tdag{head, origin, dagger(sp), li, -ladder, std::conj(-coeff * cplx(0, 1))};
            terms.push_back(t);
            terms.push_back(tdag);
        }
    }
    return terms;
}

inline SparseOperator assemble_dirac(double coeff, Frame frame, const SectorBasis& basis) {
    auto terms = dirac_terms(frame, basis.layout, cplx(coeff, 0));
    return assemble(basis, [&](uint64_t s, auto&& emit) {
        for (const HopTerm& t : terms) apply_hop_term(basis.layout, t, s, emit);
    });
}

/// Diagonal sum_links (l(l+1) - m^2); the second-order species-rotation
/// correction is -(4 beta^2 / lambda) times this.
inline SparseOperator assemble_mu_renorm_pattern(const SectorBasis& basis) {
    const BasisLayout& lay = basis.layout;
    double ll1 = lay.twol * (lay.twol + 2) / 4.0;
    return assemble_diagonal(basis, [&, ll1](uint64_t s) {
        double acc = 0;
        for (int i = 0; i < lay.n_links(); ++i) {
            double m = lay.twom(s, i) / 2.0;
            acc += ll1 - m * m;
        }
        return acc;
    });
}

} // namespace detail

/// Mass sum M psi^dag sigma_z psi; staggered by (-1)^(n1+n2) in the chi frame.
inline SparseOperator build_HM(const CouplingSet& c, Frame frame, const SectorBasis& basis) {
    return detail::assemble_mass(c.mass, frame, basis);
}

/// Magnetic plaquette sum, coefficient -(2 Omega^2 / lambda).
inline SparseOperator build_HB(const CouplingSet& c, Frame frame, const SectorBasis& basis) {
    detail::require_sector_frame(basis, frame, "build_HB");
    return detail::assemble_magnetic(-2.0 * c.omega * c.omega / c.lambda, frame, basis);
}

/// Minimally coupled hopping, coefficient eta*beta/lambda.
inline SparseOperator build_HD(const CouplingSet& c, Frame frame, const SectorBasis& basis) {
    detail::require_sector_frame(basis, frame, "build_HD");
    return detail::assemble_dirac(c.eta * c.beta / c.lambda, frame, basis);
}

/// The two primitive Hamiltonians (bosonic, fermionic) of the requested
/// primitive frame.
inline std::pair<SparseOperator, SparseOperator> build_primitive(const CouplingSet& c, Frame frame,
                                                                 const SectorBasis& basis) {
    if (frame == Frame::transformed)
        throw std::invalid_argument("build_primitive: frame must be primitive_psi or primitive_chi");
    const BasisLayout& lay = basis.layout;
    const LatticeGeometry& geom = *lay.geometry;

    auto pairs = detail::intersecting_link_pairs(geom);
    SparseOperator hb = detail::assemble(basis, [&](uint64_t s, auto&& emit) {
        // electric sum
        double diag = 0;
        for (int i = 0; i < lay.n_links(); ++i) {
            double m = lay.twom(s, i) / 2.0;
            diag += c.mu * m * m;
        }
        emit(s, cplx(diag, 0));
        // species rotation, amplitude 2*beta per step (staggered on direction-2
        // links in the chi frame)
        for (int i = 0; i < lay.n_links(); ++i) {
            const LinkId& l = geom.links()[static_cast<size_t>(i)];
            double stag = (frame == Frame::primitive_chi && l.direction == 2)
                              ? vertex_parity(l.origin)
                              : 1.0;
            uint64_t out;
            double a;
            if (detail::apply_ladder(lay, s, i, true, out, a)) emit(out, cplx(2.0 * c.beta * stag * a, 0));
            if (detail::apply_ladder(lay, s, i, false, out, a)) emit(out, cplx(2.0 * c.beta * stag * a, 0));
        }
        // link-link term omega*(L+ L- + L- L+) per intersecting pair
        for (auto [i, j] : pairs) {
            uint64_t s1, s2;
            double a1, a2;
            if (detail::apply_ladder(lay, s, i, true, s1, a1) &&
                detail::apply_ladder(lay, s1, j, false, s2, a2))
                emit(s2, cplx(c.omega * a1 * a2, 0));
            if (detail::apply_ladder(lay, s, i, false, s1, a1) &&
                detail::apply_ladder(lay, s1, j, true, s2, a2))
                emit(s2, cplx(c.omega * a1 * a2, 0));
        }
    });

    std::vector<detail::HopTerm> hops;
    const cplx ih(0, 1);
    for (int li = 0; li < geom.n_links(); ++li) {
        const LinkId& l = geom.links()[static_cast<size_t>(li)];
        int origin = geom.vertex_index(l.origin);
        int head = geom.vertex_index(geom.link_head(li));
        if (frame == Frame::primitive_psi) {
            detail::Species2x2 sk = detail::pauli(l.direction == 1 ? 1 : 2);
            cplx sc = ih * (c.eta / 2.0);
            hops.push_back({origin, head, sk, li, 0, sc});
            hops.push_back({head, origin, detail::dagger(sk), li, 0, std::conj(sc)});
        } else if (l.direction == 1) {
            cplx sc = ih * (c.eta / 2.0);
            hops.push_back({origin, head, detail::pauli(0), li, 0, sc});
            hops.push_back({head, origin, detail::pauli(0), li, 0, std::conj(sc)});
        } else {
            cplx sc(c.eta / 2.0, 0);
            hops.push_back({origin, head, detail::pauli(3), li, 0, sc});
            hops.push_back({head, origin, detail::pauli(3), li, 0, sc});
        }
    }
    SparseOperator hf = detail::assemble(basis, [&](uint64_t s, auto&& emit) {
        for (const detail::HopTerm& t : hops) detail::apply_hop_term(lay, t, s, emit);
    });
    SparseOperator mass = detail::assemble_mass(c.mass, frame, basis);
    hf.mat = SpMat(hf.mat + mass.mat);
    return {std::move(hb), std::move(hf)};
}

/// Sum of the four analytic pieces on a Gauss sector, optionally with the
/// -(4 beta^2/lambda)(L^2 - Lz^2) diagonal correction.
inline SparseOperator build_Heff_analytic(const CouplingSet& c, Frame frame,
                                          const SectorBasis& sector, bool include_mu_renorm = false) {
    if (!sector.target_g)
        throw std::invalid_argument("build_Heff_analytic: basis must be a Gauss sector");
    SparseOperator h = build_HE(c, sector);
    h.mat += build_HB(c, frame, sector).mat;
    h.mat += build_HD(c, frame, sector).mat;
    h.mat += build_HM(c, frame, sector).mat;
    if (include_mu_renorm) {
        SparseOperator r = detail::assemble_mu_renorm_pattern(sector);
        h.mat += SpMat((-4.0 * c.beta * c.beta / c.lambda) * r.mat);
    }
    h.mat.prune([](const Eigen::Index&, const Eigen::Index&, const cplx& v) {
        return std::abs(v) > detail::kAssemblyDropTol;
    });
    return h;
}

/// Single plaquette product (pattern of the frame, no H.c.) for measurements.
inline SparseOperator plaquette_product_operator(const Plaquette& p, Frame frame,
                                                 const SectorBasis& basis) {
    auto pat = detail::plaquette_pattern(frame);
    return detail::assemble(basis, [&](uint64_t s, auto&& emit) {
        detail::apply_plaquette_product(basis.layout, p, pat, cplx(1, 0), s, emit);
    });
}

// ---------------------------------------------------------------------------
// Frame maps.
//
// primitive_psi <-> transformed: |m> -> |-m> on every link with odd origin
// (pure relabeling, no sign).
// primitive_psi <-> primitive_chi: swap the C and D modes on every odd vertex;
// the fermionic swap contributes -1 on doubly occupied vertices.
// ---------------------------------------------------------------------------

struct MappedState {
    uint64_t state = 0;
    double sign = 1.0;
};

inline MappedState frame_map_state(const BasisLayout& lay, uint64_t s, Frame from, Frame to) {
    if (from == to) throw std::invalid_argument("frame_map: frames must differ");
    const LatticeGeometry& geom = *lay.geometry;
    MappedState r{s, 1.0};
    auto flip_links = [&]() {
        for (int i = 0; i < lay.n_links(); ++i) {
            if (vertex_parity(geom.links()[static_cast<size_t>(i)].origin) > 0) continue;
            r.state = lay.with_link_digit(r.state, i, lay.twol - lay.link_digit(r.state, i));
        }
    };
    auto swap_species = [&]() {
        for (int v = 0; v < lay.n_vertices(); ++v) {
            if (vertex_parity(geom.vertices()[static_cast<size_t>(v)]) > 0) continue;
            int nc = lay.occ_c(r.state, v), nd = lay.occ_d(r.state, v);
            if (nc == nd) {
                if (nc == 1) r.sign = -r.sign;
                continue;
            }
            r.state = lay.with_mode(r.state, 2 * v, nd);
            r.state = lay.with_mode(r.state, 2 * v + 1, nc);
        }
    };
    bool from_chi = from == Frame::primitive_chi, to_chi = to == Frame::primitive_chi;
    bool from_tr = from == Frame::transformed, to_tr = to == Frame::transformed;
    if (from_chi != to_chi) swap_species();
    if (from_tr != to_tr) flip_links();
    return r;
}

/// The image of a sector basis under the frame map (same Gauss targets; the
/// map conjugates the generators of one frame onto the other's).
inline SectorBasis frame_map_basis(const SectorBasis& basis, Frame from, Frame to) {
    SectorBasis out;
    out.layout = basis.layout;
    out.frame = to_basis_frame(to);
    out.target_g = basis.target_g;
    out.fermions_frozen = basis.fermions_frozen;
    out.states.reserve(basis.dim());
    for (uint64_t s : basis.states)
        out.states.push_back(frame_map_state(basis.layout, s, from, to).state);
    std::sort(out.states.begin(), out.states.end());
    return out;
}

/// Unitary relabeling of an operator between frames; spectra are preserved
/// exactly. from_basis/to_basis must be the matching state lists.
inline SparseOperator frame_map_operator(const SparseOperator& op, const SectorBasis& from_basis,
                                         Frame from, const SectorBasis& to_basis, Frame to) {
    if (from_basis.dim() != to_basis.dim())
        throw std::invalid_argument("frame_map: basis dimensions differ");
    std::vector<Eigen::Index> perm(from_basis.dim());
    std::vector<double> sign(from_basis.dim());
    for (size_t i = 0; i < from_basis.dim(); ++i) {
        MappedState m = frame_map_state(from_basis.layout, from_basis.state(i), from, to);
        auto j = to_basis.lookup(m.state);
        if (!j) throw std::invalid_argument("frame_map: image state missing from target basis");
        perm[i] = static_cast<Eigen::Index>(*j);
        sign[i] = m.sign;
    }
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int k = 0; k < op.mat.outerSize(); ++k)
        for (SpMat::InnerIterator it(op.mat, k); it; ++it) {
            auto r = static_cast<size_t>(it.row()), c = static_cast<size_t>(it.col());
            trips.emplace_back(perm[r], perm[c], it.value() * sign[r] * sign[c]);
        }
    SparseOperator out{SpMat(op.mat.rows(), op.mat.cols()), to_basis.tag()};
    out.mat.setFromTriplets(trips.begin(), trips.end());
    out.mat.makeCompressed();
    return out;
}

inline Vec frame_map_vector(const Vec& v, const SectorBasis& from_basis, Frame from,
                            const SectorBasis& to_basis, Frame to) {
    Vec out = Vec::Zero(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        MappedState m = frame_map_state(from_basis.layout, from_basis.state(static_cast<size_t>(i)),
                                        from, to);
        auto j = to_basis.lookup(m.state);
        if (!j) throw std::invalid_argument("frame_map: image state missing from target basis");
        out[static_cast<Eigen::Index>(*j)] = m.sign * v[i];
    }
    return out;
}

} // namespace spingauge
