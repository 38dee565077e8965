#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "spingauge/basis.hpp"

using namespace spingauge;

namespace {

// independent evaluation of the generator eigenvalue, used as the oracle for
// the streamed sector selection
int oracle_gauss(const BasisLayout& lay, uint64_t s, const VertexId& v, BasisFrame frame) {
    const LatticeGeometry& g = *lay.geometry;
    int par = ((v.n1 + v.n2) % 2 == 0) ? 1 : -1;
    int q = lay.occ_c(s, g.vertex_index(v)) + lay.occ_d(s, g.vertex_index(v)) - 1;
    int flux = 0;
    for (int k = 1; k <= 2; ++k) {
        if (auto li = g.find_link(v, k)) flux += lay.twom(s, *li) / 2;
        if (auto back = g.neighbor(v, k, -1))
            if (auto li = g.find_link(*back, k)) {
                int m = lay.twom(s, *li) / 2;
                flux += frame == BasisFrame::primitive ? m : -m;
            }
    }
    return frame == BasisFrame::primitive ? flux - par * q : par * (flux - q);
}

} // namespace

TEST_CASE("full basis sizes") {
    SECTION("2x2 open, l=1: 3^4 * 4^4 states") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::open});
        SectorBasis b = enumerate_full_basis(g, 2);
        CHECK(b.dim() == 20736);
    }
    SECTION("1x1 open: fermions only") {
        LatticeGeometry g = build_lattice({1, 1, Boundary::open});
        CHECK(enumerate_full_basis(g, 2).dim() == 4);
        CHECK(enumerate_full_basis(g, 4).dim() == 4);
    }
    SECTION("2x2 periodic, l=1: 3^8 * 4^4 states") {
        LatticeGeometry g = build_lattice({2, 2, Boundary::periodic});
        EnumerationOptions opts;
        opts.state_budget = 2'000'000;
        SectorBasis b = enumerate_full_basis(g, 2, BasisFrame::transformed, opts);
        CHECK(b.dim() == 1'679'616);
    }
}

TEST_CASE("budget refusal carries a size estimate") {
    LatticeGeometry g = build_lattice({2, 2, Boundary::periodic});
    EnumerationOptions opts;
    opts.state_budget = 1000;
    try {
        enumerate_full_basis(g, 2, BasisFrame::transformed, opts);
        FAIL("expected BudgetError");
    } catch (const BudgetError& e) {
        CHECK(std::string(e.what()).find("1000") != std::string::npos);
    }
}

TEST_CASE("local charge and the vertex content table") {
    LatticeGeometry g = build_lattice({1, 1, Boundary::open});
    BasisLayout lay(g, 2);
    auto state = [&](int nc, int nd) {
        uint64_t s = 0;
        s = lay.with_mode(s, 0, nc);
        s = lay.with_mode(s, 1, nd);
        return s;
    };
    CHECK(charge(lay, state(0, 1), 0) == 0);  // empty vertex
    CHECK(charge(lay, state(0, 0), 0) == -1); // antiparticle
    CHECK(charge(lay, state(1, 1), 0) == +1); // particle
    CHECK(charge(lay, state(1, 0), 0) == 0);  // pair
}

TEST_CASE("gauss eigenvalues on product states") {
    LatticeGeometry g = build_lattice({2, 2, Boundary::open});
    BasisLayout lay(g, 2);

    SECTION("all m=0 with empty vertices gives 0 everywhere in both frames") {
        uint64_t s = lay.vacuum();
        for (const VertexId& v : g.vertices()) {
            CHECK(gauss_eigenvalue(lay, s, v, BasisFrame::primitive) == 0);
            CHECK(gauss_eigenvalue(lay, s, v, BasisFrame::transformed) == 0);
        }
    }
    SECTION("an outgoing m=+1 link sourced by charge +1 balances") {
        uint64_t s = lay.vacuum();
        int li = g.link_index({{0, 0}, 1});
        s = lay.with_link_digit(s, li, 2); // m = +1
        s = lay.with_mode(s, 0, 1);        // (1,1) at the origin vertex
        CHECK(gauss_eigenvalue(lay, s, {0, 0}, BasisFrame::transformed) == 0);
    }
    SECTION("an isolated m=+1 link violates both end vertices by one unit") {
        uint64_t s = lay.vacuum();
        int li = g.link_index({{0, 0}, 1});
        s = lay.with_link_digit(s, li, 2);
        int g00 = gauss_eigenvalue(lay, s, {0, 0}, BasisFrame::transformed);
        int g10 = gauss_eigenvalue(lay, s, {1, 0}, BasisFrame::transformed);
        CHECK(std::abs(g00) == 1);
        CHECK(std::abs(g10) == 1);
        // transformed frame: both ends carry the parity sign of the origin
        CHECK(g00 == vertex_parity({0, 0}));
        CHECK(g10 == vertex_parity({0, 0}));
        // primitive frame: both ends are raised by one
        CHECK(gauss_eigenvalue(lay, s, {0, 0}, BasisFrame::primitive) == 1);
        CHECK(gauss_eigenvalue(lay, s, {1, 0}, BasisFrame::primitive) == 1);
    }
}

TEST_CASE("sector selection matches a brute-force scan") {
    LatticeGeometry g = build_lattice({2, 2, Boundary::open});
    for (BasisFrame frame : {BasisFrame::primitive, BasisFrame::transformed}) {
        SectorBasis full = enumerate_full_basis(g, 2, frame);
        SectorBasis sector = select_neutral_sector(g, 2, frame);
        std::vector<uint64_t> expect;
        for (uint64_t s : full.states) {
            bool ok = true;
            for (const VertexId& v : g.vertices())
                if (oracle_gauss(full.layout, s, v, frame) != 0) ok = false;
            if (ok) expect.push_back(s);
        }
        CHECK(sector.states == expect);
        CHECK(sector.dim() > 0);
    }
}

TEST_CASE("1x1 neutral sector keeps the two charge-zero contents") {
    LatticeGeometry g = build_lattice({1, 1, Boundary::open});
    SectorBasis sector = select_neutral_sector(g, 2, BasisFrame::transformed);
    REQUIRE(sector.dim() == 2);
    for (uint64_t s : sector.states) CHECK(charge(sector.layout, s, 0) == 0);
}

TEST_CASE("pure-gauge single plaquette sector has the three loop states") {
    LatticeGeometry g = build_lattice({2, 2, Boundary::open});
    EnumerationOptions opts;
    opts.fermions_frozen = true;
    SectorBasis sector = select_neutral_sector(g, 2, BasisFrame::transformed, opts);
    REQUIRE(sector.dim() == 3);
    // the three zero-divergence l=1 configurations: all-zero and the two loops
    int zeros = 0, loops = 0;
    for (uint64_t s : sector.states) {
        int nonzero = 0;
        for (int i = 0; i < 4; ++i)
            if (sector.layout.twom(s, i) != 0) ++nonzero;
        if (nonzero == 0) ++zeros;
        if (nonzero == 4) ++loops;
    }
    CHECK(zeros == 1);
    CHECK(loops == 2);
}

TEST_CASE("empty sectors are a valid result") {
    LatticeGeometry g = build_lattice({1, 1, Boundary::open});
    // a single isolated vertex cannot reach |G| = 2
    SectorBasis sector = select_sector(g, 2, BasisFrame::transformed, {2});
    CHECK(sector.dim() == 0);
}

TEST_CASE("staggered gauss sum telescopes on a periodic lattice") {
    // even extents keep the staggering consistent across the wrap
    LatticeGeometry g = build_lattice({4, 2, Boundary::periodic});
    BasisLayout lay(g, 2);
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        uint64_t s = 0;
        for (int i = 0; i < lay.n_links(); ++i)
            s = lay.with_link_digit(s, i, static_cast<int>(rng() % 3));
        for (int m = 0; m < 2 * lay.n_vertices(); ++m)
            s = lay.with_mode(s, m, static_cast<int>(rng() % 2));
        int staggered = 0, total_q = 0;
        for (const VertexId& v : g.vertices()) {
            staggered += vertex_parity(v) * gauss_eigenvalue(lay, s, v, BasisFrame::primitive);
            total_q += charge(lay, s, g.vertex_index(v));
        }
        REQUIRE(staggered == -total_q);
    }
}

TEST_CASE("gauss eigenvalue does not depend on enumeration order") {
    LatticeGeometry g = build_lattice({2, 2, Boundary::open});
    SectorBasis full = enumerate_full_basis(g, 2);
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        uint64_t s = full.state(rng() % full.dim());
        for (const VertexId& v : g.vertices()) {
            int a = gauss_eigenvalue(full.layout, s, v, BasisFrame::transformed);
            int b = oracle_gauss(full.layout, s, v, BasisFrame::transformed);
            REQUIRE(a == b);
        }
    }
}

TEST_CASE("sector dump is canonical JSON") {
    LatticeGeometry g = build_lattice({1, 1, Boundary::open});
    SectorBasis sector = select_neutral_sector(g, 2, BasisFrame::transformed);
    nlohmann::json j = sector.to_json();
    CHECK(j["count"] == 2);
    CHECK(j["l"] == 1.0);
    // canonical order: (1,0) packs below (0,1)
    CHECK(j["states"][0]["vertices"][0] == nlohmann::json::array({1, 0}));
    CHECK(j["states"][1]["vertices"][0] == nlohmann::json::array({0, 1}));
    const std::string golden = "{\"count\":2,\"fermions_frozen\":false,\"frame\":\"transformed\","
                               "\"l\":1.0,\"lattice\":{\"boundary\":\"open\",\"height\":1,\"width\":1},"
                               "\"schema_version\":1,"
                               "\"states\":[{\"links\":[],\"vertices\":[[1,0]]},"
                               "{\"links\":[],\"vertices\":[[0,1]]}],\"target_g\":[0]}";
    CHECK(j.dump() == golden);
}

TEST_CASE("fermion number blocks partition the full space") {
    LatticeGeometry g = build_lattice({2, 1, Boundary::open});
    size_t total = 0;
    for (int n = 0; n <= 4; ++n)
        total += select_fermion_number_block(g, 2, BasisFrame::primitive, n).dim();
    CHECK(total == enumerate_full_basis(g, 2).dim());
}
