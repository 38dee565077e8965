#pragma once

// Finite 2d square lattice: vertices, directed links in directions k=1,2,
// plaquettes and staggering parities, with open or periodic boundaries.
//
// All orderings are deterministic and fixed here once for the whole library:
//   vertices   row-major, n2 major / n1 minor
//   links      by origin vertex (row-major), direction 1 before direction 2
//   plaquettes by base vertex, link tuple (bottom, right, top, left)

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spingauge {

enum class Boundary { open, periodic };

struct LatticeSpec {
    int width = 1;
    int height = 1;
    Boundary boundary = Boundary::open;

    bool operator==(const LatticeSpec&) const = default;
};

struct VertexId {
    int n1 = 0;
    int n2 = 0;

    bool operator==(const VertexId&) const = default;
};

/// Directed link leaving `origin` in direction k (1 -> +n1, 2 -> +n2).
struct LinkId {
    VertexId origin;
    int direction = 1;

    bool operator==(const LinkId&) const = default;
};

/// Four links of an elementary square, ordered bottom, right, top, left:
/// (n,1), (n+1^,2), (n+2^,1), (n,2) for base vertex n.
struct Plaquette {
    std::array<int, 4> link{};
    int base_vertex = 0;
};

struct StarLink {
    int link = 0;
    bool outgoing = true;
};

inline void validate(const LatticeSpec& spec) {
    if (spec.width < 1 || spec.height < 1)
        throw std::invalid_argument("lattice dimensions must be >= 1, got " +
                                    std::to_string(spec.width) + "x" + std::to_string(spec.height));
    if (spec.boundary == Boundary::periodic && (spec.width < 2 || spec.height < 2))
        throw std::invalid_argument("periodic boundary requires width >= 2 and height >= 2");
}

/// Staggering sign (-1)^(n1+n2).
inline int vertex_parity(const VertexId& v) {
    return ((v.n1 + v.n2) & 1) ? -1 : +1;
}

class LatticeGeometry {
public:
    explicit LatticeGeometry(const LatticeSpec& spec) : spec_(spec) {
        validate(spec);
        const int w = spec.width, h = spec.height;
        vertices_.reserve(static_cast<size_t>(w) * h);
        for (int n2 = 0; n2 < h; ++n2)
            for (int n1 = 0; n1 < w; ++n1)
                vertices_.push_back({n1, n2});

        link_lut_.assign(vertices_.size() * 2, -1);
        for (size_t vi = 0; vi < vertices_.size(); ++vi) {
            for (int k = 1; k <= 2; ++k) {
                if (!neighbor(vertices_[vi], k, +1)) continue;
                link_lut_[vi * 2 + (k - 1)] = static_cast<int>(links_.size());
                links_.push_back({vertices_[vi], k});
            }
        }

        for (size_t vi = 0; vi < vertices_.size(); ++vi) {
            const VertexId n = vertices_[vi];
            auto right = neighbor(n, 1, +1);
            auto up = neighbor(n, 2, +1);
            if (!right || !up) continue;
            Plaquette p;
            p.base_vertex = static_cast<int>(vi);
            p.link[0] = link_index({n, 1});
            p.link[1] = link_index({*right, 2});
            p.link[2] = link_index({*up, 1});
            p.link[3] = link_index({n, 2});
            plaquettes_.push_back(p);
        }
    }

    const LatticeSpec& spec() const { return spec_; }
    const std::vector<VertexId>& vertices() const { return vertices_; }
    const std::vector<LinkId>& links() const { return links_; }
    const std::vector<Plaquette>& plaquettes() const { return plaquettes_; }

    int n_vertices() const { return static_cast<int>(vertices_.size()); }
    int n_links() const { return static_cast<int>(links_.size()); }
    int n_plaquettes() const { return static_cast<int>(plaquettes_.size()); }

    int vertex_index(const VertexId& v) const {
        check_on_lattice(v);
        return v.n2 * spec_.width + v.n1;
    }

    bool on_lattice(const VertexId& v) const {
        return v.n1 >= 0 && v.n1 < spec_.width && v.n2 >= 0 && v.n2 < spec_.height;
    }

    /// Neighbor of v at v + step*k^; empty past an open boundary.
    std::optional<VertexId> neighbor(const VertexId& v, int k, int step) const {
        check_on_lattice(v);
        int n1 = v.n1 + (k == 1 ? step : 0);
        int n2 = v.n2 + (k == 2 ? step : 0);
        if (spec_.boundary == Boundary::periodic) {
            n1 = (n1 % spec_.width + spec_.width) % spec_.width;
            n2 = (n2 % spec_.height + spec_.height) % spec_.height;
            return VertexId{n1, n2};
        }
        VertexId u{n1, n2};
        if (!on_lattice(u)) return std::nullopt;
        return u;
    }

    int link_index(const LinkId& l) const {
        check_on_lattice(l.origin);
        if (l.direction != 1 && l.direction != 2)
            throw std::invalid_argument("link direction must be 1 or 2");
        int idx = link_lut_[static_cast<size_t>(vertex_index(l.origin)) * 2 + (l.direction - 1)];
        if (idx < 0)
            throw std::invalid_argument("no such link: origin (" + std::to_string(l.origin.n1) +
                                        "," + std::to_string(l.origin.n2) + "), direction " +
                                        std::to_string(l.direction));
        return idx;
    }

    /// Link index if the link exists, otherwise empty (open boundary).
    std::optional<int> find_link(const VertexId& origin, int k) const {
        check_on_lattice(origin);
        int idx = link_lut_[static_cast<size_t>(vertex_index(origin)) * 2 + (k - 1)];
        if (idx < 0) return std::nullopt;
        return idx;
    }

    /// Head vertex of a link (origin + k^).
    VertexId link_head(int link) const {
        const LinkId& l = links_[static_cast<size_t>(link)];
        return *neighbor(l.origin, l.direction, +1);
    }

    /// Links entering the Gauss generator at v: outgoing (v,k), incoming (v-k^,k),
    /// in the fixed order out1, out2, in1, in2 (absent boundary links omitted).
    std::vector<StarLink> star_links(const VertexId& v) const {
        std::vector<StarLink> star;
        for (int k = 1; k <= 2; ++k)
            if (auto idx = find_link(v, k)) star.push_back({*idx, true});
        for (int k = 1; k <= 2; ++k)
            if (auto back = neighbor(v, k, -1))
                if (auto idx = find_link(*back, k)) star.push_back({*idx, false});
        return star;
    }

private:
    void check_on_lattice(const VertexId& v) const {
        if (!on_lattice(v))
            throw std::invalid_argument("vertex (" + std::to_string(v.n1) + "," +
                                        std::to_string(v.n2) + ") is not on the lattice");
    }

    LatticeSpec spec_;
    std::vector<VertexId> vertices_;
    std::vector<LinkId> links_;
    std::vector<Plaquette> plaquettes_;
    std::vector<int> link_lut_;
};

inline LatticeGeometry build_lattice(const LatticeSpec& spec) { return LatticeGeometry(spec); }

} // namespace spingauge
