#include "radonlab/analysis.hpp"
#include "radonlab/heis.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace radonlab;
using namespace radonlab::analysis;

namespace {
Vec random_vec(long n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Vec v(n);
    for (long i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
}

Operator from_matrix(const Grid& g, const Mat& A) {
    return Operator(
        g, "dense", [A](const Vec& f) { return Vec(A * f); }, [A](const Vec& f) { return Vec(A.transpose() * f); });
}

Mat dense(const Operator& T) {
    const long n = T.grid().size();
    Mat A(n, n);
    for (long c = 0; c < n; ++c) {
        Vec e = Vec::Zero(n);
        e[c] = 1.0;
        A.col(c) = T.apply(e);
    }
    return A;
}

double top_singular(const Mat& A) {
    Mat G = A.transpose() * A;
    return std::sqrt(Eigen::SelfAdjointEigenSolver<Mat>(G).eigenvalues().maxCoeff());
}

heis::LPScenario small_heis() { return heis::heis_lp_scenario(9, 2.0, 1.0); }
}  // namespace

TEST(L2Norm, MatchesDenseSvd) {
    Grid g(1, 1.0, 40);
    Mat A = Mat::Zero(40, 40);
    A.diagonal() = Vec::LinSpaced(40, 0.1, 3.0);
    A(0, 39) = 0.7;
    A(5, 2) = -1.1;
    auto est = l2_opnorm(from_matrix(g, A), 1e-12, 2000);
    EXPECT_TRUE(est.converged);
    EXPECT_NEAR(est.value, top_singular(A), 1e-6);
    EXPECT_EQ(est.method, "power-iteration");
    EXPECT_NEAR(est.maximizer.values().norm(), 1.0, 1e-12);
}

TEST(L2Norm, LPBlockCompositionsMatchDense) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, false);
    for (auto [j, k] : {std::pair<std::vector<int>, std::vector<int>>{{0, 0}, {1, 0}}, {{1, 1}, {2, 0}}}) {
        auto op = ops::compose(fam.D(j), fam.D(k).adjoint());
        Mat a = dense(op);
        EXPECT_LT((dense(op.adjoint()) - a.transpose()).norm(), 1e-12 * std::max(1.0, a.norm()));
        EXPECT_NEAR(l2_opnorm(op, 1e-10, 3000).value, top_singular(a), 1e-4 * std::max(1.0, top_singular(a)));
    }
}

TEST(L2Norm, ZeroAndMissingAdjoint) {
    Grid g(1, 1.0, 10);
    auto z = l2_opnorm(ops::zero(g));
    EXPECT_EQ(z.value, 0.0);
    EXPECT_TRUE(z.converged);
    EXPECT_THROW(l2_opnorm(Operator(g, "x", [](const Vec& f) { return f; })), InputError);
}

TEST(LpLower, NeverExceedsTrueNormForDiagonal) {
    Grid g(1, 1.0, 64);
    auto m = GridFunction::sample(g, [](const Vec& x) { return 1.0 + x[0]; });
    auto op = ops::multiply(m);
    for (double p : {1.0, 1.5, 2.0, 4.0}) {
        auto est = lp_opnorm_lower(op, p, 20, 3);
        EXPECT_LE(est.value, 2.0 + 1e-12);
        EXPECT_GT(est.value, 0.5);
        EXPECT_EQ(est.iters, 20);
    }
    EXPECT_THROW(lp_opnorm_lower(op, 0.5, 3), InputError);
}

TEST(Probes, DeterministicPerSeedAndFamily) {
    Grid g(2, 1.0, 16);
    for (int fam = 0; fam < 3; ++fam) {
        std::mt19937_64 a(5), b(5), c(6);
        auto p = make_probe(g, fam, a), q = make_probe(g, fam, b), r = make_probe(g, fam, c);
        EXPECT_EQ(p.values(), q.values());
        EXPECT_NE(p.values(), r.values());
        EXPECT_GT(p.lp_norm(2), 0.0);
    }
    std::mt19937_64 rng(1);
    auto chess = make_probe(g, ProbeFamily::Chessboard, rng);
    for (long i = 0; i < g.size(); ++i) EXPECT_EQ(std::abs(chess.values()[i]), 1.0);
}

TEST(DecayFit, RecoversExactGeometricRate) {
    std::vector<DecayPoint> pts;
    for (int s = 0; s <= 5; ++s) {
        pts.push_back({double(s), 3.0 * std::exp2(-0.75 * s)});
        pts.push_back({double(s), 1.0 * std::exp2(-0.75 * s)});
    }
    auto fit = fit_decay(pts, "DD*", 2.0, 1);
    EXPECT_NEAR(fit.eps, 0.75, 1e-12);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    EXPECT_EQ(fit.groups.size(), 6u);
    EXPECT_EQ(fit.s_min, 0.0);
    EXPECT_EQ(fit.s_max, 5.0);
}

TEST(DecayFit, ZeroFamilyNoiseFloorAndErrors) {
    auto z = fit_decay({{0, 0.0}, {1, 1e-13}}, "x", 2, 1);
    EXPECT_TRUE(z.zero_family);
    EXPECT_THROW(fit_decay({}, "x", 2, 1), FitError);
    EXPECT_THROW(fit_decay({{0, 1.0}, {1, 0.5}, {2, 1e-14}}, "x", 2, 1), FitError);
    auto ok = fit_decay({{0, 1.0}, {1, 0.5}, {2, 0.25}, {3, 1e-14}}, "x", 2, 1);
    EXPECT_EQ(ok.groups.size(), 3u);
}

TEST(Decay, ScaledIdentityModelDecaysAtItsRate) {
    Grid g(1, 1.0, 16);
    BlockFn D = [&](const std::vector<int>& j) {
        return ops::combine({{std::exp2(-0.5 * j[0]), ops::identity(g)}}, "D");
    };
    std::vector<std::vector<std::vector<int>>> tuples;
    for (int k = 0; k <= 4; ++k) tuples.push_back({{0}, {k}});
    auto fit = orthogonality_decay({D, {}, {}}, tuples, DecayMode::DDstar, 1, 1e-12);
    for (size_t i = 0; i < fit.pairs.size(); ++i) EXPECT_NEAR(fit.pairs[i].norm, std::exp2(-0.5 * i), 1e-12);
    EXPECT_NEAR(fit.eps, 0.5, 1e-10);
    auto td = orthogonality_decay({D, {}, D}, {{{0}, {1}, {2}}, {{0}, {0}, {0}}, {{1}, {1}, {0}}}, DecayMode::TD, 1, 1e-12);
    EXPECT_EQ(td.groups.size(), 3u);
    EXPECT_THROW(orthogonality_decay({D, {}, {}}, {{{0}}}, DecayMode::DDstar), InputError);
    EXPECT_THROW(orthogonality_decay({D, {}, {}}, {{{0}, {1}}}, DecayMode::BD), InputError);
    EXPECT_EQ(linf_dist({1, 4}, {3, 3}), 2);
    EXPECT_EQ(diam({{0, 0}, {1, 3}, {2, 1}}), 3);
}

TEST(Blocks, AllBlocksMatchIndividualCompositions) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, false);
    Vec f = random_vec(sc.grid.size(), 2);
    auto idx = full_index(2, 2);
    ASSERT_EQ(idx.size(), 9u);
    EXPECT_EQ(idx[1], (std::vector<int>{0, 1}));
    auto fwd = all_blocks(fam, f, false), adj = all_blocks(fam, f, true);
    for (size_t i = 0; i < idx.size(); ++i) {
        auto D = fam.D(idx[i]);
        EXPECT_LT((fwd[i] - D.apply(f)).norm(), 1e-12);
        EXPECT_LT((adj[i] - D.apply_adjoint(f)).norm(), 1e-12);
    }
}

TEST(PairSums, FullRangeEqualsLiteralSquare) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, true);
    auto ps = build_UM_RM(fam, 4, 1);
    Vec f = random_vec(sc.grid.size(), 4);
    EXPECT_LT((ps.U.apply(f) - ps.literal_sum.apply(f)).norm(), 1e-11 * f.norm());
    EXPECT_LT((ps.R.apply(f) - (ps.psi_power.apply(f) - ps.U.apply(f))).norm(), 1e-12 * f.norm());
    // closed top: (sum_j D_j)^2 = psi^{4 nu} exactly
    EXPECT_LT(ps.boundary_discrepancy, 1e-10);
    auto small = build_UM_RM(fam, 1, 1);
    Vec g = random_vec(sc.grid.size(), 5);
    EXPECT_NEAR(small.U(GridFunction(sc.grid, f)).inner(GridFunction(sc.grid, g)),
                GridFunction(sc.grid, f).inner(GridFunction(sc.grid, small.U.apply_adjoint(g))), 1e-10 * f.norm() * g.norm());
    EXPECT_THROW(build_UM_RM(fam, -1), InputError);
}

TEST(Neumann, ReproducingIdentityHoldsExactly) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, true);
    auto ps = build_UM_RM(fam, 1, 1);
    auto psi = sc.chain.sample(sc.chain.psi_v, sc.grid);
    auto psi2 = sc.chain.sample(sc.chain.psi_m2, sc.grid);
    auto nm = build_VM(ps.R, psi, 6, 1);
    ASSERT_LT(nm.contraction, 1.0);
    GridFunction f(sc.grid, random_vec(sc.grid.size(), 7));
    // psi_{-2} U V f = psi_{-2} (f - (R psi)^{m+1} f)
    Vec w = f.values();
    for (int k = 0; k <= 6; ++k) w = ps.R.apply(psi.values().cwiseProduct(w));
    Vec expect = psi2.values().cwiseProduct(f.values() - w);
    Vec got = psi2.values().cwiseProduct(ps.U.apply(nm.V.apply(f.values())));
    EXPECT_LT((got - expect).norm(), 1e-10 * f.values().norm());
    double res = reproducing_residual(ps.U, nm.V, psi2, f);
    EXPECT_LE(res, nm.tail * f.lp_norm(2) + 1e-12);
    GridFunction h(sc.grid, random_vec(sc.grid.size(), 8));
    EXPECT_NEAR(nm.V(f).inner(h), f.inner(GridFunction(sc.grid, nm.V.apply_adjoint(h.values()))),
                1e-10 * f.lp_norm(2) * h.lp_norm(2));
}

TEST(Neumann, RejectsNonContraction) {
    Grid g(1, 1.0, 10);
    auto R = ops::combine({{2.0, ops::identity(g)}}, "2I");
    auto one = GridFunction::sample(g, [](const Vec&) { return 1.0; });
    EXPECT_THROW(build_VM(R, one, 3), PreconditionFailure);
    EXPECT_THROW(build_VM(R, one, -1), InputError);
}

TEST(SquareFunction, PlancherelSumOfBlocks) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, true);
    GridFunction f(sc.grid, random_vec(sc.grid.size(), 3));
    auto S = square_function(fam, f);
    double sum = 0.0;
    for (const auto& v : all_blocks(fam, f.values())) sum += GridFunction(sc.grid, v).lp_norm(2) * GridFunction(sc.grid, v).lp_norm(2);
    EXPECT_NEAR(S.lp_norm(2) * S.lp_norm(2), sum, 1e-10 * sum);
    auto psi2 = sc.chain.sample(sc.chain.psi_m2, sc.grid);
    auto iv = square_function_interval(fam, psi2, 2.0, 6, 1);
    EXPECT_EQ(iv.ratios.size(), 6u);
    EXPECT_LE(iv.lo, iv.hi);
    EXPECT_GE(iv.C(), 1.0);
}

TEST(Rademacher, AllPlusIsProductOfWindowedAverages) {
    auto sc = small_heis();
    ops::LPFamily fam(sc.grid, sc.chain, sc.blocks, 2, false);
    auto all = rademacher_probe(fam, 2.0, 1, 1, true);
    auto prod = ops::compose(fam.windowed(0, 2), fam.windowed(1, 2));
    EXPECT_NEAR(all.value, l2_opnorm(prod, 1e-10, 2000).value, 1e-3);
    auto r = rademacher_probe(fam, 2.0, 3, 2);
    EXPECT_GT(r.value, 0.0);
}

TEST(SequenceNorm, DiagonalMultipliersReachTheirMaximum) {
    Grid g(1, 1.0, 32);
    std::vector<Operator> diag;
    for (double s : {0.5, 2.0, 1.0})
        diag.push_back(ops::multiply(GridFunction::sample(g, [s](const Vec& x) { return s * (1.5 + x[0]); })));
    double v = sequence_norm(diag, 2.0, 8, 1);
    EXPECT_LE(v, 5.0 + 1e-9);
    EXPECT_GT(v, 4.9);
    EXPECT_EQ(sequence_norm({}, 2.0, 3, 1), 0.0);
    SequenceFamily fam = [&](const std::vector<int>& k) {
        std::vector<Operator> d;
        d.push_back(ops::multiply(GridFunction::sample(g, [&](const Vec&) { return std::exp2(-double(k[0])); })));
        return d;
    };
    auto fit = vector_valued_decay(fam, {{0}, {1}, {2}, {3}}, 2.0, 4, "vvT");
    EXPECT_NEAR(fit.eps, 1.0, 1e-6);
}

TEST(Bootstrap, ExactSequence) {
    auto q = bootstrap_pset(20);
    ASSERT_EQ(q.size(), 21u);
    for (int n = 0; n <= 20; ++n) {
        double e = std::exp2(n + 1) / (std::exp2(n + 1) - 1.0);
        EXPECT_NEAR(q[n], e, 1e-15);
    }
    EXPECT_THROW(bootstrap_pset(0), InputError);
}

TEST(Csv, Headers) {
    DecayFit f;
    f.mode = "DD*";
    f.pairs = {{1, 0.5}};
    auto s = decay_csv({f});
    EXPECT_EQ(s.substr(0, s.find('\n')), "mode,p,separation,norm,fitted_eps,r2,seed");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
    NormEstimate n;
    n.label = "T";
    auto t = norm_csv({n});
    EXPECT_EQ(t.substr(0, t.find('\n')), "label,p,value,method,iters,residual");
}
