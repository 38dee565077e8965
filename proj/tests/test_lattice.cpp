#include <catch2/catch_amalgamated.hpp>

#include "spingauge/lattice.hpp"

using namespace spingauge;

TEST_CASE("lattice counts") {
    SECTION("2x2 open: 4 vertices, 4 links, 1 plaquette") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        CHECK(g.n_vertices() == 4);
        CHECK(g.n_links() == 4);
        CHECK(g.n_plaquettes() == 1);
    }
    SECTION("1x1 open: no neighbors exist") {
        LatticeGeometry g = build_lattice({1, 1, Boundary::open});
        CHECK(g.n_vertices() == 1);
        CHECK(g.n_links() == 0);
        CHECK(g.n_plaquettes() == 0);
    }
    SECTION("2x2 periodic: wraparound links and plaquettes") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::periodic});
        CHECK(g.n_vertices() == 4);
        CHECK(g.n_links() == 8);
        CHECK(g.n_plaquettes() == 4);
    }
    SECTION("open link count formula") {
        for (int w = 1; w <= 4; ++w)
            for (int h = 1; h <= 4; ++h) {
                LatticeGeometry g = build_lattice({w, h, Boundary::open});
                CHECK(g.n_links() == h * (w - 1) + w * (h - 1));
            }
    }
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(build_lattice({0, 2, Boundary::open}), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice({2, -1, Boundary::open}), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice({1, 3, Boundary::periodic}), std::invalid_argument);
}

TEST_CASE("vertex parity") {
    CHECK(vertex_parity({0, 0}) == 1);
    CHECK(vertex_parity({1, 0}) == -1);
    CHECK(vertex_parity({1, 1}) == 1);
}

TEST_CASE("star links") {
    SECTION("interior vertex of 3x3 open has 2 outgoing and 2 incoming") {
        LatticeGeometry g = build_lattice({3, 3, Boundary::open});
        auto star = g.star_links({1, 1});
        int out = 0, in = 0;
        for (auto s : star) (s.outgoing ? out : in)++;
        CHECK(out == 2);
        CHECK(in == 2);
    }
    SECTION("corner (0,0) of 2x2 open has 2 outgoing, 0 incoming") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        auto star = g.star_links({0, 0});
        REQUIRE(star.size() == 2);
        CHECK(star[0].outgoing);
        CHECK(star[1].outgoing);
    }
    SECTION("any vertex of 2x2 periodic sees 4 links") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::periodic});
        for (const VertexId& v : g.vertices()) CHECK(g.star_links(v).size() == 4);
    }
}

TEST_CASE("every link shows up in exactly two stars on a periodic lattice") {
    LatticeGeometry g = build_lattice({3, 2, Boundary::periodic});
    std::vector<int> out_count(static_cast<size_t>(g.n_links()), 0);
    std::vector<int> in_count(static_cast<size_t>(g.n_links()), 0);
    for (const VertexId& v : g.vertices())
        for (auto s : g.star_links(v)) (s.outgoing ? out_count : in_count)[static_cast<size_t>(s.link)]++;
    for (int i = 0; i < g.n_links(); ++i) {
        CHECK(out_count[static_cast<size_t>(i)] == 1);
        CHECK(in_count[static_cast<size_t>(i)] == 1);
    }
}

TEST_CASE("plaquette structure") {
    SECTION("tuple order is bottom, right, top, left and corners are shared") {
        LatticeGeometry g = build_lattice({3, 3, Boundary::open});
        for (const Plaquette& p : g.plaquettes()) {
            const LinkId& b = g.links()[static_cast<size_t>(p.link[0])];
            const LinkId& r = g.links()[static_cast<size_t>(p.link[1])];
            const LinkId& t = g.links()[static_cast<size_t>(p.link[2])];
            const LinkId& l = g.links()[static_cast<size_t>(p.link[3])];
            CHECK(b.direction == 1);
            CHECK(r.direction == 2);
            CHECK(t.direction == 1);
            CHECK(l.direction == 2);
            CHECK(g.link_head(p.link[0]) == r.origin); // bottom ends where right starts
            CHECK(g.link_head(p.link[3]) == t.origin); // left ends where top starts
            CHECK(g.link_head(p.link[1]) == g.link_head(p.link[2]));
            CHECK(b.origin == l.origin);
        }
    }
    SECTION("each link belongs to at most 2 plaquettes (open), exactly 2 (periodic)") {
        for (Boundary bc : {Boundary::open, Boundary::periodic}) {
            LatticeGeometry g = build_lattice({3, 3, bc});
            std::vector<int> count(static_cast<size_t>(g.n_links()), 0);
            for (const Plaquette& p : g.plaquettes())
                for (int li : p.link) count[static_cast<size_t>(li)]++;
            for (int c : count) {
                if (bc == Boundary::periodic)
                    CHECK(c == 2);
                else
                    CHECK(c <= 2);
            }
        }
    }
}

TEST_CASE("orderings are deterministic") {
    LatticeGeometry a = build_lattice({3, 2, Boundary::open});
    LatticeGeometry b = build_lattice({3, 2, Boundary::open});
    CHECK(a.vertices() == b.vertices());
    CHECK(a.links() == b.links());
    REQUIRE(a.plaquettes().size() == b.plaquettes().size());
    for (size_t i = 0; i < a.plaquettes().size(); ++i)
        CHECK(a.plaquettes()[i].link == b.plaquettes()[i].link);
    // row-major vertices, links by origin then direction
    CHECK(a.vertices()[0] == VertexId{0, 0});
    CHECK(a.vertices()[1] == VertexId{1, 0});
    CHECK(a.vertices()[3] == VertexId{0, 1});
    CHECK(a.links()[0] == LinkId{{0, 0}, 1});
    CHECK(a.links()[1] == LinkId{{0, 0}, 2});
}
