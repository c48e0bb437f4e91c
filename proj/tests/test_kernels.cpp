#include "radonlab/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace radonlab;
using namespace radonlab::kernels;
using vfalg::FormalDegree;

namespace {
// independent 1-d integral by a fine midpoint rule
double midpoint_integral(const std::function<double(double)>& f, double lo, double hi, int n = 200000) {
    double h = (hi - lo) / n, s = 0.0;
    for (int i = 0; i < n; ++i) s += f(lo + (i + 0.5) * h);
    return s * h;
}

DilationExponents two_param_e() { return {FormalDegree({1, 0}), FormalDegree({0, 1})}; }
}  // namespace

TEST(Factor, ProfilesHaveUnitAbsoluteMass) {
    for (auto name : {"poly4", "poly6", "odd4"}) {
        auto b = make_tensor_bump({name}, 0.7);
        auto f = b.atoms()[0].f[0];
        double abs_mass = midpoint_integral([&](double x) { return std::abs(f(x)); }, -0.7, 0.7);
        EXPECT_NEAR(abs_mass, 1.0, 1e-8) << name;
        double d = midpoint_integral([&](double x) { return f.derivative(x); }, -0.7, 0.3);
        EXPECT_NEAR(d, f(0.3) - f(-0.7), 1e-8) << name;
    }
    EXPECT_THROW(profile_from_name("gauss"), InputError);
    EXPECT_THROW(make_bump("odd4", 1, 1.0), InputError);
}

TEST(Bump, PolyBumpIntegratesToOne) {
    for (int N : {1, 2, 3}) {
        auto b = make_bump("poly4", N, 1.0);
        EXPECT_NEAR(b.integral(), 1.0, 1e-13);
        auto box = b.box();
        for (double w : box) EXPECT_NEAR(w, 1.0 / std::sqrt(N), 1e-15);
    }
}

TEST(Bump, GradientMatchesFiniteDifference) {
    auto b = tensor(make_tensor_bump({"odd4"}, 1.0), make_bump("poly6", 1, 0.5));
    Vec t(2);
    t << 0.3, -0.1;
    Vec g = b.gradient(t);
    for (int k = 0; k < 2; ++k) {
        Vec e = Vec::Zero(2);
        e[k] = 1e-6;
        EXPECT_NEAR(g[k], (b(t + e) - b(t - e)) / 2e-6, 1e-5);
    }
}

TEST(Bump, DilationPreservesIntegral) {
    auto b = tensor(make_bump("poly4", 1, 1.0), make_bump("poly6", 2, 0.8));
    for (auto lam : {std::vector<double>{2, 1, 4}, {0.5, 8, 1.5}}) {
        auto d = dilate_axes(b, lam);
        EXPECT_NEAR(d.integral(), b.integral(), 1e-8);
        Vec t(3);
        t << 0.1, 0.02, -0.05;
        Vec u(3);
        for (int i = 0; i < 3; ++i) u[i] = lam[i] * t[i];
        EXPECT_NEAR(d(t), lam[0] * lam[1] * lam[2] * b(u), 1e-10);
    }
    EXPECT_THROW(dilate_axes(b, {1, 0, 1}), InputError);
}

TEST(Bump, DilateByIndexUsesExponents) {
    auto b = make_bump("poly4", 2, 1.0);
    DilationExponents e{FormalDegree({1, 0}), FormalDegree({0, 2})};
    auto d = dilate_bump(b, {1, 2}, e);
    auto box = d.box();
    EXPECT_NEAR(box[0], b.box()[0] / 2, 1e-15);
    EXPECT_NEAR(box[1], b.box()[1] / 16, 1e-15);
}

TEST(Cancellation, EnforcedMomentsVanish) {
    auto e = two_param_e();
    auto b = make_tensor_bump({"poly6", "poly4"}, 1.0);
    auto c = enforce_cancellation(b, {0}, e);
    EXPECT_LE(marginal_max(c, {0}, 16), 1e-12);
    EXPECT_GT(marginal_max(c, {1}, 16), 1e-3);
    auto c2 = enforce_cancellation(b, {0, 1}, e);
    EXPECT_LE(marginal_max(c2, {0}, 16), 1e-12);
    EXPECT_LE(marginal_max(c2, {1}, 16), 1e-12);
    EXPECT_NEAR(c2.integral(), 0.0, 1e-14);
}

TEST(Cancellation, RequiredAwayFromBoundaryIndices) {
    EXPECT_FALSE(cancellation_required({0, 3}, 0, 2));
    EXPECT_TRUE(cancellation_required({2, 3}, 0, 2));
    EXPECT_TRUE(cancellation_required({2, 2}, 1, 2));
    // flag case: equal neighbouring indices relax the condition
    EXPECT_FALSE(cancellation_required({2, 2}, 1, 1));
    EXPECT_TRUE(cancellation_required({3, 2}, 1, 1));
}

TEST(SynthKernel, RejectsPiecesWithoutCancellation) {
    auto e = two_param_e();
    auto rule = [](const std::vector<int>&) { return make_bump("poly4", 2, 1.0); };
    try {
        synth_kernel(rule, 2, 2, 1, e, 1.0);
        FAIL() << "expected KernelClassError";
    } catch (const KernelClassError& err) {
        EXPECT_EQ(err.j.size(), 2u);
        EXPECT_GE(err.mu, 1);
    }
    auto odd = [](const std::vector<int>&) { return make_tensor_bump({"odd4", "odd4"}, 1.0); };
    auto K = synth_kernel(odd, 2, 2, 3, e, 1.0);
    EXPECT_EQ(K.pieces.size(), 16u);
    EXPECT_EQ(K.dilated.size(), 16u);
}

TEST(SynthKernel, IndexSetCardinalities) {
    auto e = two_param_e();
    auto odd = [](const std::vector<int>&) { return make_tensor_bump({"odd4", "odd4"}, 1.0); };
    for (int J = 0; J <= 4; ++J) {
        EXPECT_EQ(synth_kernel(odd, 2, 2, J, e, 1.0).pieces.size(), static_cast<size_t>((J + 1) * (J + 1)));
        EXPECT_EQ(synth_kernel(odd, 1, 2, J, e, 1.0).pieces.size(), static_cast<size_t>((J + 1) * (J + 2) / 2));
        EXPECT_EQ(index_set(1, 2, J).size(), static_cast<size_t>((J + 1) * (J + 2) / 2));
    }
}

TEST(DeltaFamily, TelescopesToTopScaleBump) {
    auto phi = make_bump("poly4", 1, 1.0);
    const int J = 4;
    for (double d : {1.0, 2.0}) {
        Bump sum = make_phi_j(phi, 0, {d});
        for (int j = 1; j <= J; ++j) sum = sum + dilate_axes(make_phi_j(phi, j, {d}), {std::exp2(j * d)});
        auto top = dilate_axes(phi, {std::exp2(J * d)});
        for (int i = 0; i <= 400; ++i) {
            Vec t(1);
            t[0] = -1.0 + 2.0 * i / 400;
            EXPECT_NEAR(sum(t), top(t), 1e-9 * std::max(1.0, std::abs(top(t))));
        }
    }
}

TEST(DeltaFamily, ProductKernelSumsToTensorOfTopBumps) {
    auto p1 = make_bump("poly4", 1, 1.0), p2 = make_bump("poly6", 1, 1.0);
    const int J = 3;
    auto K = make_delta0_family({p1, p2}, {{1.0}, {2.0}}, J);
    EXPECT_EQ(K.pieces.size(), 16u);
    auto top = tensor(dilate_axes(p1, {std::exp2(J)}), dilate_axes(p2, {std::exp2(2 * J)}));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-0.2, 0.2);
    for (int k = 0; k < 50; ++k) {
        Vec t(2);
        t << U(rng), 0.05 * U(rng);
        EXPECT_NEAR(kernel_eval(K, t), top(t), 1e-8 * std::max(1.0, std::abs(top(t))));
    }
    EXPECT_THROW(make_delta0_family({make_tensor_bump({"odd4"}, 1.0)}, {{1.0}}, 2), InputError);
}

TEST(ProductKernel, TensorOfOneParameterFamilies) {
    DilationExponents e1{FormalDegree({1})};
    auto odd = [](const std::vector<int>&) { return make_tensor_bump({"odd4"}, 1.0); };
    auto A = synth_kernel(odd, 1, 1, 2, e1, 1.0);
    auto K = make_product_kernel({A, A}, {1, 1});
    EXPECT_EQ(K.index.nu, 2);
    EXPECT_EQ(K.pieces.size(), 9u);
    Vec t(2);
    t << 0.1, -0.3;
    Vec a(1), b(1);
    a << 0.1;
    b << -0.3;
    EXPECT_NEAR(K.pieces.at({1, 2})(t), A.pieces.at({1})(a) * A.pieces.at({2})(b), 1e-14);
    EXPECT_THROW(make_product_kernel({A}, {2}), InputError);
}

TEST(ProductEstimate, DerivativeSizeBoundIsScaleUniform) {
    // |d^alpha K(t)| |t_1|^{1+a1} |t_2|^{1+a2} stays bounded as the samples approach the axes
    DilationExponents e{FormalDegree({1, 0}), FormalDegree({0, 1})};
    auto odd = [](const std::vector<int>&) { return make_tensor_bump({"odd4", "odd4"}, 1.0); };
    std::vector<double> worst;
    for (int J : {3, 5}) {
        auto K = synth_kernel(odd, 2, 2, J, e, 1.0);
        auto s = product_samples({1, 1}, {0.7, 0.7}, J);
        worst.push_back(product_estimate_check(K, {1, 0}, {1, 1}, s));
    }
    EXPECT_GT(worst[0], 0.0);
    EXPECT_LT(worst[1], 2.0 * worst[0]);
}

TEST(Manifest, RoundTripAndBuild) {
    std::string text =
        "N,nu,mu0,J,a\n2,2,2,2,1\ne\n1,0\n0,1\npieces\n0 0,poly4,00\n*,poly4,auto\n";
    auto m = parse_manifest(text);
    EXPECT_EQ(m.lines.size(), 2u);
    auto again = parse_manifest(write_manifest(m));
    EXPECT_EQ(write_manifest(again), write_manifest(m));
    auto K = build_kernel(m);
    EXPECT_EQ(K.pieces.size(), 9u);
    EXPECT_NEAR(K.pieces.at({0, 0}).integral(), 1.0, 1e-12);
    EXPECT_LE(marginal_max(K.pieces.at({2, 1}), {0}), 1e-12);
    EXPECT_THROW(parse_manifest("N,nu\n"), InputError);
    EXPECT_THROW(parse_manifest("N,nu,mu0,J,a\n1,1,1,1,1\ne\n1\npieces\n0,poly4,2\n"), InputError);
    // a piece flagged without cancellation where it is required fails validation
    auto bad = parse_manifest("N,nu,mu0,J,a\n1,1,1,1,1\ne\n1\npieces\n*,poly4,0\n");
    EXPECT_THROW(build_kernel(bad), KernelClassError);
}

TEST(Bump, CsvDumpHasHeaderAndGrid) {
    auto b = make_bump("poly4", 2, 1.0);
    auto csv = dump_bump_csv(b, 3);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t1,t2,value");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
}
