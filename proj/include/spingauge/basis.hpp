#pragma once

// Product Hilbert space over a lattice: one spin-l variable per link and two
// fermionic modes (C, D) per vertex, packed into a 64-bit word.
//
// Packing (low to high bits): link digits first, ceil(log2(2l+1)) bits each,
// digit = m + l in 0..2l; then two bits per vertex, occ_C at the low bit and
// occ_D at the high bit. Enumeration order is the mixed-radix counter with
// link 0 as the fastest digit, which coincides with ascending packed value.
//
// Fermionic mode order (fixed globally, used by the Jordan-Wigner strings in
// operators.hpp): vertices row-major, C before D, i.e. mode(v,C)=2v, mode(v,D)=2v+1.

#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spingauge/lattice.hpp"
#include "json.hpp"

namespace spingauge {

enum class BasisFrame { primitive, transformed };

inline std::string to_string(BasisFrame f) {
    return f == BasisFrame::primitive ? "primitive" : "transformed";
}

struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bit layout of one packed configuration for a given lattice and spin length.
struct BasisLayout {
    const LatticeGeometry* geometry = nullptr;
    int twol = 2; // 2l; twol+1 species per link
    int bits_per_link = 0;
    int vertex_base = 0;

    BasisLayout() = default;
    BasisLayout(const LatticeGeometry& geom, int twol_) : geometry(&geom), twol(twol_) {
        if (twol < 1) throw std::invalid_argument("spin length must satisfy 2l >= 1");
        bits_per_link = 1;
        while ((1 << bits_per_link) < twol + 1) ++bits_per_link;
        vertex_base = bits_per_link * geom.n_links();
        int total_bits = vertex_base + 2 * geom.n_vertices();
        if (total_bits > 64)
            throw std::invalid_argument("state does not fit 64 bits (" +
                                        std::to_string(total_bits) + " needed)");
    }

    bool operator==(const BasisLayout& o) const {
        return geometry == o.geometry && twol == o.twol;
    }

    int n_links() const { return geometry->n_links(); }
    int n_vertices() const { return geometry->n_vertices(); }

    int link_digit(uint64_t s, int link) const {
        return static_cast<int>((s >> (bits_per_link * link)) & ((1u << bits_per_link) - 1));
    }
    /// 2m of the link variable, in -2l..2l.
    int twom(uint64_t s, int link) const { return 2 * link_digit(s, link) - twol; }

    uint64_t with_link_digit(uint64_t s, int link, int digit) const {
        const uint64_t mask = (uint64_t(1) << bits_per_link) - 1;
        const int shift = bits_per_link * link;
        return (s & ~(mask << shift)) | (uint64_t(digit) << shift);
    }

    int occ_c(uint64_t s, int v) const { return static_cast<int>((s >> (vertex_base + 2 * v)) & 1); }
    int occ_d(uint64_t s, int v) const { return static_cast<int>((s >> (vertex_base + 2 * v + 1)) & 1); }
    int mode_occ(uint64_t s, int mode) const { return static_cast<int>((s >> (vertex_base + mode)) & 1); }

    uint64_t with_mode(uint64_t s, int mode, int occ) const {
        const uint64_t bit = uint64_t(1) << (vertex_base + mode);
        return occ ? (s | bit) : (s & ~bit);
    }

    /// All links at m=0 (requires integer l), every vertex in the (0,1) Dirac-sea content.
    uint64_t vacuum() const {
        if (twol % 2 != 0)
            throw std::invalid_argument("m=0 vacuum requires integer spin length");
        uint64_t s = 0;
        for (int i = 0; i < n_links(); ++i) s = with_link_digit(s, i, twol / 2);
        for (int v = 0; v < n_vertices(); ++v) s = with_mode(s, 2 * v + 1, 1);
        return s;
    }
};

/// Local charge n_C + n_D - 1 at a vertex, in {-1, 0, +1}.
inline int charge(const BasisLayout& lay, uint64_t s, int v) {
    return lay.occ_c(s, v) + lay.occ_d(s, v) - 1;
}

/// Twice the Gauss-generator eigenvalue at vertex v (doubled so half-integer
/// link variables stay exact). primitive: sum of all star L_z minus
/// (-1)^(n1+n2) Q; transformed: (-1)^(n1+n2) (outgoing - incoming - Q).
inline int gauss_eigenvalue_x2(const BasisLayout& lay, uint64_t s, const VertexId& v,
                               BasisFrame frame) {
    const LatticeGeometry& geom = *lay.geometry;
    const int par = vertex_parity(v);
    const int q2 = 2 * charge(lay, s, geom.vertex_index(v));
    int flux2 = 0;
    for (const StarLink& sl : geom.star_links(v)) {
        int t = lay.twom(s, sl.link);
        if (frame == BasisFrame::primitive)
            flux2 += t;
        else
            flux2 += sl.outgoing ? t : -t;
    }
    return frame == BasisFrame::primitive ? flux2 - par * q2 : par * (flux2 - q2);
}

inline int gauss_eigenvalue(const BasisLayout& lay, uint64_t s, const VertexId& v,
                            BasisFrame frame) {
    int g2 = gauss_eigenvalue_x2(lay, s, v, frame);
    if (g2 % 2 != 0)
        throw std::domain_error("Gauss eigenvalue is half-integer on this state");
    return g2 / 2;
}

/// 4 * sum_v G_v^2; zero exactly on the Gauss sector. Frame independent as a
/// spectrum, evaluated per frame for bookkeeping.
inline long long gauss_violation_x4(const BasisLayout& lay, uint64_t s, BasisFrame frame) {
    long long acc = 0;
    for (const VertexId& v : lay.geometry->vertices()) {
        long long g2 = gauss_eigenvalue_x2(lay, s, v, frame);
        acc += g2 * g2;
    }
    return acc;
}

struct EnumerationOptions {
    uint64_t state_budget = 1ull << 27; // refuse enumerations larger than this
    bool fermions_frozen = false;       // keep every vertex at the (0,1) sea content
};

namespace detail {

inline uint64_t checked_total_states(const BasisLayout& lay, bool frozen, uint64_t budget) {
    long double est = 1.0L;
    for (int i = 0; i < lay.n_links(); ++i) est *= (lay.twol + 1);
    if (!frozen)
        for (int v = 0; v < lay.n_vertices(); ++v) est *= 4.0L;
    if (est > static_cast<long double>(budget)) {
        std::ostringstream os;
        os << "basis of ~" << static_cast<double>(est) << " states exceeds the budget of "
           << budget << " states";
        throw BudgetError(os.str());
    }
    uint64_t total = 1;
    for (int i = 0; i < lay.n_links(); ++i) total *= uint64_t(lay.twol + 1);
    if (!frozen)
        for (int v = 0; v < lay.n_vertices(); ++v) total *= 4;
    return total;
}

/// Visit all product states in enumeration order (links fastest).
template <typename Fn>
void for_each_product_state(const BasisLayout& lay, const EnumerationOptions& opts, Fn&& fn) {
    const uint64_t total = checked_total_states(lay, opts.fermions_frozen, opts.state_budget);
    const int L = lay.n_links();
    const int V = lay.n_vertices();
    std::vector<int> ldig(static_cast<size_t>(L), 0);
    std::vector<int> vdig(static_cast<size_t>(V), 0);

    uint64_t frozen_vertex_bits = 0;
    if (opts.fermions_frozen)
        for (int v = 0; v < V; ++v)
            frozen_vertex_bits |= uint64_t(2) << (2 * v); // (occ_c, occ_d) = (0, 1)

    uint64_t s = opts.fermions_frozen ? (frozen_vertex_bits << lay.vertex_base) : 0;
    for (uint64_t count = 0;; ++count) {
        fn(s);
        if (count + 1 == total) break;
        // mixed-radix increment, links minor
        int i = 0;
        for (; i < L; ++i) {
            if (ldig[i] + 1 <= lay.twol) {
                ++ldig[i];
                s = lay.with_link_digit(s, i, ldig[i]);
                break;
            }
            ldig[i] = 0;
            s = lay.with_link_digit(s, i, 0);
        }
        if (i < L) continue;
        for (int v = 0; v < V; ++v) {
            if (vdig[v] + 1 <= 3) {
                ++vdig[v];
                s = lay.with_mode(s, 2 * v, vdig[v] & 1);
                s = lay.with_mode(s, 2 * v + 1, (vdig[v] >> 1) & 1);
                break;
            }
            vdig[v] = 0;
            s = lay.with_mode(s, 2 * v, 0);
            s = lay.with_mode(s, 2 * v + 1, 0);
        }
    }
}

} // namespace detail

/// An ordered, indexed list of product states: either the full product space
/// or the subspace with prescribed Gauss eigenvalues per vertex.
class SectorBasis {
public:
    BasisLayout layout;
    BasisFrame frame = BasisFrame::transformed;
    std::optional<std::vector<int>> target_g; // per vertex, row-major; empty = unconstrained
    bool fermions_frozen = false;
    std::vector<uint64_t> states; // ascending packed value == enumeration order

    size_t dim() const { return states.size(); }
    uint64_t state(size_t i) const { return states[i]; }

    std::optional<size_t> lookup(uint64_t packed) const {
        auto it = std::lower_bound(states.begin(), states.end(), packed);
        if (it == states.end() || *it != packed) return std::nullopt;
        return static_cast<size_t>(it - states.begin());
    }

    std::string tag() const {
        const LatticeSpec& sp = layout.geometry->spec();
        std::ostringstream os;
        os << sp.width << "x" << sp.height << (sp.boundary == Boundary::open ? "o" : "p")
           << ":2l=" << layout.twol << ":" << to_string(frame);
        if (target_g) {
            os << ":g=";
            for (int g : *target_g) os << g << (g == target_g->back() ? "" : ",");
        }
        if (fermions_frozen) os << ":frozen";
        return os.str();
    }

    nlohmann::json to_json() const {
        const LatticeGeometry& geom = *layout.geometry;
        nlohmann::json j;
        j["schema_version"] = 1;
        j["lattice"] = {{"width", geom.spec().width},
                        {"height", geom.spec().height},
                        {"boundary", geom.spec().boundary == Boundary::open ? "open" : "periodic"}};
        j["l"] = layout.twol / 2.0;
        j["frame"] = to_string(frame);
        if (target_g)
            j["target_g"] = *target_g;
        else
            j["target_g"] = nullptr;
        j["fermions_frozen"] = fermions_frozen;
        j["count"] = states.size();
        nlohmann::json list = nlohmann::json::array();
        for (uint64_t s : states) {
            nlohmann::json e;
            nlohmann::json ms = nlohmann::json::array();
            for (int i = 0; i < layout.n_links(); ++i) ms.push_back(layout.twom(s, i) / 2.0);
            nlohmann::json occ = nlohmann::json::array();
            for (int v = 0; v < layout.n_vertices(); ++v)
                occ.push_back({layout.occ_c(s, v), layout.occ_d(s, v)});
            e["links"] = ms;
            e["vertices"] = occ;
            list.push_back(e);
        }
        j["states"] = list;
        return j;
    }
};

/// Complete product basis in canonical order.
inline SectorBasis enumerate_full_basis(const LatticeGeometry& geom, int twol,
                                        BasisFrame frame = BasisFrame::transformed,
                                        const EnumerationOptions& opts = {}) {
    SectorBasis b;
    b.layout = BasisLayout(geom, twol);
    b.frame = frame;
    b.fermions_frozen = opts.fermions_frozen;
    b.states.reserve(
        static_cast<size_t>(detail::checked_total_states(b.layout, opts.fermions_frozen, opts.state_budget)));
    detail::for_each_product_state(b.layout, opts, [&](uint64_t s) { b.states.push_back(s); });
    return b;
}

/// Streamed selection of the states with G_v = target_g[v] at every vertex.
/// The full basis is never materialized. An empty sector is a valid result.
inline SectorBasis select_sector(const LatticeGeometry& geom, int twol, BasisFrame frame,
                                 const std::vector<int>& target_g,
                                 const EnumerationOptions& opts = {}) {
    if (static_cast<int>(target_g.size()) != geom.n_vertices())
        throw std::invalid_argument("target_g must list one value per vertex");
    SectorBasis b;
    b.layout = BasisLayout(geom, twol);
    b.frame = frame;
    b.fermions_frozen = opts.fermions_frozen;
    b.target_g = target_g;
    detail::for_each_product_state(b.layout, opts, [&](uint64_t s) {
        for (int vi = 0; vi < geom.n_vertices(); ++vi) {
            if (gauss_eigenvalue_x2(b.layout, s, geom.vertices()[static_cast<size_t>(vi)], frame) !=
                2 * target_g[static_cast<size_t>(vi)])
                return;
        }
        b.states.push_back(s);
    });
    return b;
}

inline SectorBasis select_neutral_sector(const LatticeGeometry& geom, int twol, BasisFrame frame,
                                         const EnumerationOptions& opts = {}) {
    return select_sector(geom, twol, frame, std::vector<int>(static_cast<size_t>(geom.n_vertices()), 0),
                         opts);
}

/// All states with a fixed total fermion number. The Hamiltonians built in
/// operators.hpp conserve this number, so the block is an invariant subspace;
/// the neutral Gauss sector lives in the block with N = #vertices.
inline SectorBasis select_fermion_number_block(const LatticeGeometry& geom, int twol,
                                               BasisFrame frame, int total_fermions,
                                               const EnumerationOptions& opts = {}) {
    SectorBasis b;
    b.layout = BasisLayout(geom, twol);
    b.frame = frame;
    detail::for_each_product_state(b.layout, opts, [&](uint64_t s) {
        int n = 0;
        for (int v = 0; v < geom.n_vertices(); ++v) n += b.layout.occ_c(s, v) + b.layout.occ_d(s, v);
        if (n == total_fermions) b.states.push_back(s);
    });
    return b;
}

} // namespace spingauge
