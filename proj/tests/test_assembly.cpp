#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meshfree/assembly.hpp"
#include "meshfree/bvp.hpp"
#include "meshfree/kernel.hpp"
#include "meshfree/reference.hpp"
#include "meshfree/rng.hpp"

using namespace meshfree;

namespace {

Domain patch_square() { return Domain(Vec{2.5, 2.5}, Vec{0.5, 0.5}, 2); }

constexpr KernelGradientOption kPlain{GradientKind::PlainW, false};

struct Setup {
    ParticleSet ps;
    NeighborTable nbrs;
    CorrectionState corr;
    MobilityField mob;
};

Setup lattice_setup(int n, double f, double amp = 0.0, std::uint64_t seed = 0,
                    MobilityModel mm = MobilityModel::one()) {
    Setup s;
    s.ps = perturb(build_uniform_grid(patch_square(), n, f), amp, seed);
    s.nbrs = find_neighbors(s.ps);
    s.corr = build_corrections(s.ps, s.nbrs, kPlain);
    s.mob = MobilityField::from_scalar_field(s.ps, [&](const Vec& r) { return mm.value(r, 2); });
    return s;
}

std::vector<double> sample(const ParticleSet& ps, const TestField& f) {
    std::vector<double> u(static_cast<std::size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) u[static_cast<std::size_t>(i)] = f.value(ps.pos[static_cast<std::size_t>(i)], ps.dim);
    return u;
}

double row_norm1(const CsrMatrix& a, int i) {
    double s = 0.0;
    for (int k = a.ptr[static_cast<std::size_t>(i)]; k < a.ptr[static_cast<std::size_t>(i) + 1]; ++k)
        s += std::abs(a.val[static_cast<std::size_t>(k)]);
    return s;
}

}  // namespace

TEST_CASE("constant fields are annihilated by every scheme") {
    const Setup s = lattice_setup(9, 1.2, 0.3, 5, MobilityModel::sum_pow(2));
    const std::vector<double> ones(static_cast<std::size_t>(s.ps.size()), 3.7);
    for (Scheme scheme : {Scheme::CorrectedBrookshaw, Scheme::Schwaiger, Scheme::New}) {
        const SparseSystem sys = assemble(scheme, s.ps, s.nbrs, s.corr, s.mob);
        const std::vector<double> au = spmv(sys.A, ones);
        for (int i = 0; i < s.ps.size(); ++i)
            CHECK(std::abs(au[static_cast<std::size_t>(i)]) <= 1e-11 * std::max(1.0, 3.7 * row_norm1(sys.A, i)));
    }
}

TEST_CASE("1D Brookshaw row is the kernel-weighted second difference") {
    ParticleSet ps;
    ps.dim = 1;
    ps.spacing = 0.25;
    ps.factor = 1.3;
    ps.domain = Domain(Vec{0.5}, Vec{0.25 + 0.125}, 1);
    for (int i = 0; i < 3; ++i) {
        ps.pos.push_back(Vec{0.25 * (i + 1)});
        ps.volume.push_back(0.25);
        ps.h.push_back(1.3 * 0.25);
        ps.tag.push_back(i == 1 ? BoundaryTag::Interior : BoundaryTag::Dirichlet);
        ps.normal.push_back(Vec{});
    }
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, kPlain);
    const MobilityField mob = MobilityField::constant(ps, 1.0);
    const SparseSystem sys = assemble_brookshaw(ps, nbrs, corr, mob, false);

    // hand evaluation of the middle row: both neighbors at distance h_p
    const double h_ij = 1.3 * 0.25;
    const double z = 0.25 / h_ij;
    const double beta = -1.5 / h_ij * dw_dz(z) / (h_ij * 0.25);
    const double off = 0.25 * 2.0 * beta;  // V (m_i + m_j) beta
    CHECK(sys.A.at(1, 0) == doctest::Approx(-off).epsilon(1e-13));
    CHECK(sys.A.at(1, 2) == doctest::Approx(-off).epsilon(1e-13));
    CHECK(sys.A.at(1, 1) == doctest::Approx(2.0 * off).epsilon(1e-13));

    // second-difference action on u = x^2 about x = 0.5
    const std::vector<double> u = sample(ps, TestField::sum_pow(2));
    const double au = sys.A.at(1, 0) * u[0] + sys.A.at(1, 1) * u[1] + sys.A.at(1, 2) * u[2];
    CHECK(au == doctest::Approx(-2.0 * off * 0.25 * 0.25 / 1.0).epsilon(1e-12));

    // and against the brute-force oracle
    const double brute = brute_force_row(ps, nbrs, corr, mob, Scheme::CorrectedBrookshaw, 1, u);
    const SparseSystem msys = assemble_brookshaw(ps, nbrs, corr, mob, true);
    const double arow = msys.A.at(1, 0) * u[0] + msys.A.at(1, 1) * u[1] + msys.A.at(1, 2) * u[2];
    CHECK(std::abs(brute - arow) <= 1e-12 * std::max(1.0, std::abs(arow)));
}

TEST_CASE("corrected Brookshaw reproduces the constant Laplacian of x^2+y^2") {
    const Setup s = lattice_setup(21, 1.2);
    const SparseSystem sys = assemble_brookshaw(s.ps, s.nbrs, s.corr, s.mob, true);
    const std::vector<double> u = sample(s.ps, TestField::sum_pow(2));
    const std::vector<double> au = spmv(sys.A, u);
    for (int i = 0; i < s.ps.size(); ++i) {
        if (!s.ps.has_full_support(i)) continue;
        CHECK(std::abs(-au[static_cast<std::size_t>(i)] - 4.0) <= 1e-9);
    }
}

TEST_CASE("Schwaiger rows annihilate linear fields everywhere") {
    const Setup s = lattice_setup(21, 1.2);
    for (const TestField& f : {TestField::sum_pow(1), TestField::prod_pow(1, 0), TestField::prod_pow(0, 1)}) {
        const std::vector<double> u = sample(s.ps, f);
        for (Scheme scheme : {Scheme::Schwaiger, Scheme::New}) {
            const SparseSystem sys = assemble(scheme, s.ps, s.nbrs, s.corr, s.mob);
            const std::vector<double> au = spmv(sys.A, u);
            for (int i = 0; i < s.ps.size(); ++i) {
                if (s.corr.p[static_cast<std::size_t>(i)].singular) continue;
                CHECK(std::abs(au[static_cast<std::size_t>(i)]) <= 1e-10 * std::max(1.0, row_norm1(sys.A, i)));
            }
        }
    }
}

TEST_CASE("interior cubic patch is reproduced to machine precision") {
    const Setup s = lattice_setup(21, 1.2);
    const std::vector<double> u = sample(s.ps, TestField::sum_pow(3));
    for (Scheme scheme : {Scheme::Schwaiger, Scheme::New}) {
        const SparseSystem sys = assemble(scheme, s.ps, s.nbrs, s.corr, s.mob);
        const std::vector<double> au = spmv(sys.A, u);
        for (int i = 0; i < s.ps.size(); ++i) {
            if (!s.ps.has_full_support(i)) continue;
            const auto k = static_cast<std::size_t>(i);
            const double exact = 6.0 * (s.ps.pos[k][0] + s.ps.pos[k][1]);
            CHECK(std::abs(-au[k] - exact) <= 1e-10 * std::abs(exact));
        }
    }
}

TEST_CASE("heterogeneous patch: div((x+y) grad(x+y)) = 2 in the interior") {
    const Setup s = lattice_setup(21, 1.2, 0.0, 0, MobilityModel::sum_pow(1));
    const std::vector<double> u = sample(s.ps, TestField::sum_pow(1));
    const SparseSystem sys = assemble_new(s.ps, s.nbrs, s.corr, s.mob);
    const std::vector<double> au = spmv(sys.A, u);
    for (int i = 0; i < s.ps.size(); ++i) {
        if (!s.ps.has_full_support(i)) continue;
        CHECK(std::abs(-au[static_cast<std::size_t>(i)] - 2.0) <= 1e-9);
    }
}

TEST_CASE("Schwaiger and the new scheme coincide on uniform lattices") {
    // full-support rows agree at any f; at f = 1.001 every off-boundary row
    // agrees because the missing far-ring weights are O(1e-6) and enter
    // gamma-star as a product of two such sums
    const Setup tight = lattice_setup(21, 1.001);
    const SparseSystem ss = assemble_schwaiger(tight.ps, tight.nbrs, tight.corr, tight.mob);
    const SparseSystem sn = assemble_new(tight.ps, tight.nbrs, tight.corr, tight.mob);
    REQUIRE(ss.A.val.size() == sn.A.val.size());
    double max_rel = 0.0;
    for (int i = 0; i < tight.ps.size(); ++i) {
        if (tight.ps.is_boundary(i)) continue;
        for (int k = ss.A.ptr[static_cast<std::size_t>(i)]; k < ss.A.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            max_rel = std::max(max_rel, std::abs(ss.A.val[static_cast<std::size_t>(k)] - sn.A.val[static_cast<std::size_t>(k)]) /
                                            std::max(1e-300, std::abs(ss.A.val[static_cast<std::size_t>(k)])));
    }
    CHECK(max_rel <= 1e-10);

    const Setup wide = lattice_setup(21, 1.2);
    const SparseSystem ws = assemble_schwaiger(wide.ps, wide.nbrs, wide.corr, wide.mob);
    const SparseSystem wn = assemble_new(wide.ps, wide.nbrs, wide.corr, wide.mob);
    for (int i = 0; i < wide.ps.size(); ++i) {
        if (!wide.ps.has_full_support(i)) continue;
        for (int k = ws.A.ptr[static_cast<std::size_t>(i)]; k < ws.A.ptr[static_cast<std::size_t>(i) + 1]; ++k)
            CHECK(std::abs(ws.A.val[static_cast<std::size_t>(k)] - wn.A.val[static_cast<std::size_t>(k)]) <=
                  1e-10 * std::abs(ws.A.val[static_cast<std::size_t>(k)]));
    }
}

TEST_CASE("pair transmissibilities rebuild the assembled rows") {
    SplitMix64 seeds(41);
    for (int t = 0; t < 10; ++t) {
        const Setup s = lattice_setup(7, 1.1 + 0.2 * seeds.next_unit(), 0.3, seeds.next_u64(),
                                      MobilityModel::sum_pow(1));
        for (Scheme scheme : {Scheme::CorrectedBrookshaw, Scheme::Schwaiger, Scheme::New}) {
            const SparseSystem sys = assemble(scheme, s.ps, s.nbrs, s.corr, s.mob);
            const std::vector<double> u = sample(s.ps, TestField::prod_pow(2, 1));
            const std::vector<double> au = spmv(sys.A, u);
            for (int i = 0; i < s.ps.size(); ++i) {
                double recon = 0.0;
                for (const Neighbor& nb : s.nbrs.of(i)) {
                    const Transmissibility tr = pair_transmissibility(s.ps, s.nbrs, s.corr, s.mob, i, nb.j, scheme);
                    const double a_ij = sys.A.at(i, nb.j);
                    CHECK(std::abs(a_ij - (-s.ps.volume[static_cast<std::size_t>(nb.j)] * tr.value)) <=
                          1e-12 * std::max(1.0, std::abs(a_ij)));
                    recon -= s.ps.volume[static_cast<std::size_t>(nb.j)] * tr.value *
                             (u[static_cast<std::size_t>(nb.j)] - u[static_cast<std::size_t>(i)]);
                }
                CHECK(std::abs(recon - au[static_cast<std::size_t>(i)]) <=
                      1e-11 * std::max(1.0, row_norm1(sys.A, i)));
            }
        }
    }
}

TEST_CASE("uniform interior transmissibilities are nonnegative; zero mobility gives zero") {
    Setup s = lattice_setup(11, 1.2);
    for (int i = 0; i < s.ps.size(); ++i) {
        if (!s.ps.has_full_support(i)) continue;
        for (const Neighbor& nb : s.nbrs.of(i)) {
            const Transmissibility tr = pair_transmissibility(s.ps, s.nbrs, s.corr, s.mob, i, nb.j, Scheme::New);
            CHECK(tr.value >= 0.0);
        }
    }
    // degenerate mobility
    s.mob = MobilityField::constant(s.ps, 0.0);
    const Transmissibility t0 = pair_transmissibility(s.ps, s.nbrs, s.corr, s.mob, s.ps.size() / 2,
                                                      s.nbrs.of(s.ps.size() / 2)[0].j, Scheme::New);
    CHECK(t0.value == 0.0);
    CHECK_THROWS(pair_transmissibility(s.ps, s.nbrs, s.corr, s.mob, 0, s.ps.size() - 1, Scheme::New));
}

TEST_CASE("tpfa transmissibility: harmonic identity, heterogeneity, symmetry") {
    CellGeom a{Vec{0.0, 0.5}, Vec{0.5, 0.5}, Vec{1.0, 0.0}};
    CellGeom b{Vec{1.0, 0.5}, Vec{0.5, 0.5}, Vec{1.0, 0.0}};
    CHECK(tpfa_transmissibility(a, b, Vec{1, 1}, Vec{1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(tpfa_transmissibility(a, b, Vec{1, 1}, Vec{3, 3}) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(tpfa_transmissibility(b, a, Vec{3, 3}, Vec{1, 1}) ==
          doctest::Approx(tpfa_transmissibility(a, b, Vec{1, 1}, Vec{3, 3})).epsilon(1e-14));
    CellGeom degenerate{Vec{0.0, 0.5}, Vec{0.0, 0.5}, Vec{1.0, 0.0}};
    CHECK_THROWS(tpfa_transmissibility(degenerate, b, Vec{1, 1}, Vec{1, 1}));
}

TEST_CASE("dirichlet rows become exact identities") {
    const Setup s = lattice_setup(7, 1.2);
    SparseSystem sys = assemble_new(s.ps, s.nbrs, s.corr, s.mob);
    BoundarySpec spec(s.ps.size());
    for (int i = 0; i < s.ps.size(); ++i)
        if (s.ps.is_boundary(i)) spec.set_dirichlet(i, 150.0);
    apply_dirichlet(sys, s.ps, spec);
    check_boundary_complete(s.ps, spec);
    for (int i = 0; i < s.ps.size(); ++i) {
        if (!s.ps.is_boundary(i)) continue;
        const auto k = static_cast<std::size_t>(i);
        CHECK(sys.row_kind[k] == RowKind::DirichletIdentity);
        CHECK(sys.b[k] == 150.0);
        CHECK(sys.A.ptr[k + 1] - sys.A.ptr[k] == 1);
        CHECK(sys.A.at(i, i) == 1.0);
    }
}

TEST_CASE("neumann flux rows: linear exactness and constant null space") {
    BvpProblem prob;
    prob.domain = Domain(Vec{0.5, 0.5}, Vec{0.5, 0.5}, 2);
    prob.bc = BcMode::Mixed;
    BvpRun run;
    run.n_per_dim = 11;
    run.f = 1.2;
    ParticleSet ps = make_bvp_particles(prob, run);
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, kPlain);
    const MobilityField mob = MobilityField::constant(ps, 1.0);

    // flux row applied to u = x equals the x-component of the unit normal
    SparseSystem sys = assemble_schwaiger(ps, nbrs, corr, mob);
    BoundarySpec spec(ps.size());
    for (int i = 0; i < ps.size(); ++i) {
        if (ps.tag[static_cast<std::size_t>(i)] == BoundaryTag::Dirichlet) spec.set_dirichlet(i, 0.0);
        if (ps.tag[static_cast<std::size_t>(i)] == BoundaryTag::Neumann) spec.set_neumann(i, 0.0);
    }
    apply_dirichlet(sys, ps, spec);
    apply_neumann(sys, ps, nbrs, corr, mob, spec, Scheme::Schwaiger);

    const std::vector<double> ux = sample(ps, TestField::prod_pow(1, 0));
    const std::vector<double> au = spmv(sys.A, ux);
    int flux_rows = 0;
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (sys.row_kind[k] != RowKind::NeumannFlux) continue;
        if (corr.p[k].singular) continue;
        ++flux_rows;
        CHECK(au[k] == doctest::Approx(ps.normal[k][0]).epsilon(1e-10));
    }
    CHECK(flux_rows > 0);

    // zero-flux everywhere plus interior rows annihilate constants
    const std::vector<double> ones(static_cast<std::size_t>(ps.size()), 1.0);
    const std::vector<double> a1 = spmv(sys.A, ones);
    for (int i = 0; i < ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (sys.row_kind[k] == RowKind::DirichletIdentity) continue;
        CHECK(std::abs(a1[k]) <= 1e-11 * std::max(1.0, row_norm1(sys.A, i)));
    }
}

TEST_CASE("base Dirichlet value lands in the right-hand side of the mixed system") {
    BvpProblem prob;
    prob.bc = BcMode::Mixed;
    prob.psi = {150.0, 90.0, 150.0, 200.0};
    BvpRun run;
    run.n_per_dim = 9;
    run.f = 1.001;
    const BvpSolution sol = solve_bvp(prob, run);
    int base_rows = 0;
    for (int i = 0; i < sol.ps.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (sol.sys.row_kind[k] != RowKind::DirichletIdentity) continue;
        ++base_rows;
        CHECK(sol.sys.b[k] == 150.0);
    }
    CHECK(base_rows == 9);
}

TEST_CASE("missing boundary conditions are rejected") {
    const Setup s = lattice_setup(5, 1.2);
    BoundarySpec spec(s.ps.size());
    spec.set_dirichlet(1, 1.0);
    CHECK_THROWS(check_boundary_complete(s.ps, spec));
    BoundarySpec both(s.ps.size());
    both.set_dirichlet(1, 1.0);
    both.set_neumann(1, 0.0);
    CHECK_THROWS(check_boundary_complete(s.ps, both));
}

TEST_CASE("brute-force rows match assembly on random clouds for all schemes") {
    SplitMix64 seeds(2718);
    for (int t = 0; t < 50; ++t) {
        const int n = 5 + static_cast<int>(seeds.next_u64() % 4);
        const Setup s = lattice_setup(n, 1.05 + 0.3 * seeds.next_unit(), 0.35, seeds.next_u64(),
                                      MobilityModel::sum_pow(1));
        std::vector<double> u(static_cast<std::size_t>(s.ps.size()));
        SplitMix64 ur(seeds.next_u64());
        for (auto& x : u) x = 2.0 * ur.next_unit() - 1.0;
        for (Scheme scheme : {Scheme::CorrectedBrookshaw, Scheme::Schwaiger, Scheme::New}) {
            const SparseSystem sys = assemble(scheme, s.ps, s.nbrs, s.corr, s.mob);
            const std::vector<double> au = spmv(sys.A, u);
            for (int i = 0; i < s.ps.size(); ++i) {
                const double brute = brute_force_row(s.ps, s.nbrs, s.corr, s.mob, scheme, i, u);
                CHECK(std::abs(brute - au[static_cast<std::size_t>(i)]) <=
                      1e-12 * std::max(1.0, row_norm1(sys.A, i)));
            }
        }
    }
}

TEST_CASE("isolated particles degrade to reported fallback rows") {
    ParticleSet ps = build_uniform_grid(patch_square(), 5, 1.2);
    ps.h.assign(ps.h.size(), 1e-6);  // supports vanish: every particle isolated
    const NeighborTable nbrs = find_neighbors(ps);
    const CorrectionState corr = build_corrections(ps, nbrs, kPlain);
    const MobilityField mob = MobilityField::constant(ps, 1.0);
    const SparseSystem sys = assemble_new(ps, nbrs, corr, mob);
    CHECK(static_cast<int>(sys.degraded_rows.size()) == ps.size());
}
