#include "radonlab/flow.hpp"
#include "radonlab/heis.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

using namespace radonlab;
using namespace radonlab::flow;
using vfalg::FormalDegree;
using vfalg::Polynomial;

namespace {
Vec vec(std::initializer_list<double> v) {
    Vec x(static_cast<long>(v.size()));
    long i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

FieldList euclid2() {
    auto X = VectorFieldSpec::symbolic({Polynomial::parse("1:0,0", 2), Polynomial(2)});
    auto Y = VectorFieldSpec::symbolic({Polynomial(2), Polynomial::parse("1:0,0", 2)});
    return {{X, FormalDegree({1})}, {Y, FormalDegree({1})}};
}

FieldList heis_single() {
    auto f = heis::heis_fields();
    return {{f[0].field, FormalDegree({1})}, {f[1].field, FormalDegree({1})}, {f[2].field, FormalDegree({2})}};
}

std::vector<VectorFieldSpec> fields_of(const FieldList& l) {
    std::vector<VectorFieldSpec> out;
    for (const auto& f : l) out.push_back(f.field);
    return out;
}
}  // namespace

TEST(Flow, HeisenbergConstantControlMatchesExponential) {
    auto f = fields_of(heis_single());
    for (auto [a, b, c] : {std::array<double, 3>{0.3, -0.7, 0.2}, {1.5, 0.4, -2.0}}) {
        Vec x0 = vec({0.2, -0.1, 0.5});
        Vec got = flow_constant(f, vec({a, b, c}), x0);
        EXPECT_LT((got - heis::heis_exp(a, b, c, x0)).norm(), 1e-12);
        FlowConfig adaptive;
        adaptive.integrator = Integrator::RK45;
        EXPECT_LT((flow_constant(f, vec({a, b, c}), x0, adaptive) - heis::heis_exp(a, b, c, x0)).norm(), 1e-9);
    }
}

TEST(Flow, PiecewiseControlsComposeInOrder) {
    auto f = fields_of(heis_single());
    Controls ctl{{vec({0.8, 0, 0}), vec({0, -0.6, 0})}};
    Vec x0 = vec({0.1, 0.2, 0.3});
    Vec expect = heis::heis_exp(0, -0.3, 0, heis::heis_exp(0.4, 0, 0, x0));
    EXPECT_LT((flow::flow(f, ctl, x0) - expect).norm(), 1e-12);
}

TEST(Flow, RotationAgreesWithClosedForm) {
    auto R = VectorFieldSpec::symbolic({Polynomial::parse("-1:0,1", 2), Polynomial::parse("1:1,0", 2)});
    Vec x0 = vec({1.0, 0.0});
    for (double th : {0.5, 2.0}) {
        Vec exact = vec({std::cos(th), std::sin(th)});
        EXPECT_LT((flow_constant({R}, vec({th}), x0) - exact).norm(), 1e-6);
        FlowConfig c;
        c.integrator = Integrator::RK45;
        EXPECT_LT((flow_constant({R}, vec({th}), x0, c) - exact).norm(), 1e-8);
    }
}

TEST(Flow, EscapeAndInputErrors) {
    auto f = fields_of(euclid2());
    FlowConfig c;
    c.domain_half_width = 1.0;
    EXPECT_THROW(flow_constant(f, vec({5.0, 0.0}), vec({0, 0}), c), EscapeError);
    EXPECT_THROW(flow_constant(f, vec({1.0}), vec({0, 0})), InputError);
    EXPECT_THROW(flow_constant(f, vec({NAN, 0.0}), vec({0, 0})), InputError);
    FlowConfig bad;
    bad.h_ode = 0.0;
    EXPECT_THROW(flow_constant(f, vec({0.1, 0.0}), vec({0, 0}), bad), InputError);
}

TEST(DetMinorMax, MatchesHandComputedMinors) {
    Mat A(3, 2);
    A << 1, 2, 3, 4, 5, 7;
    // minors: rows01 -2, rows02 -3, rows12 1
    EXPECT_NEAR(det_minor_max(A), 3.0, 1e-12);
    Mat sq(2, 2);
    sq << 2, 1, 1, 3;
    EXPECT_NEAR(det_minor_max(sq), 5.0, 1e-12);
    EXPECT_EQ(det_minor_max(Mat(2, 3)), 0.0);
}

TEST(Frame, HeisenbergPicksXYTWithDegreeSumScaling) {
    auto l = heis_single();
    for (double d : {1.0, 0.5, 0.125}) {
        auto fr = select_frame(l, {d}, vec({0, 0, 0}));
        EXPECT_EQ(fr.n0, 3);
        EXPECT_EQ(fr.J0, (std::vector<int>{0, 1, 2}));
        EXPECT_NEAR(fr.det, std::pow(d, 4), 1e-15);
    }
    auto z = VectorFieldSpec::symbolic({Polynomial(1)});
    EXPECT_THROW(select_frame({{z, FormalDegree({1})}}, {1.0}, vec({0})), DegeneratePoint);
}

TEST(Chart, HeisenbergJacobianEqualsFrameDeterminant) {
    auto f = heis::heis_fields();
    for (double d1 : {1.0, 0.25})
        for (double d3 : {0.5, 1.0}) {
            auto ch = exp_chart(f, {d1, 0.5, d3}, vec({0, 0, 0}));
            const double ref = ch.frame().det;
            EXPECT_NEAR(ref, d1 * 0.5 * d3, 1e-15);
            for (auto u : halton_points(20, 3, -0.5, 0.5)) EXPECT_NEAR(ch.det(u) / ref, 1.0, 1e-6);
            EXPECT_TRUE(ch.check_injectivity(50, 3));
        }
}

TEST(Chart, PullbackOfEuclideanFieldsIsTheStandardBasis) {
    auto l = euclid2();
    auto ch = exp_chart(l, {0.5}, vec({0.3, -0.2}));
    auto pb = pullback_fields(ch, l);
    ASSERT_EQ(pb.size(), 2u);
    Vec u = vec({0.1, 0.2});
    EXPECT_LT((pb[0](u) - vec({1, 0})).norm(), 1e-8);
    EXPECT_LT((pb[1](u) - vec({0, 1})).norm(), 1e-8);
}

TEST(Membership, EuclideanBallBoundary) {
    auto l = euclid2();
    Vec x0 = vec({0, 0});
    EXPECT_TRUE(ball_membership(vec({0.3, 0.2}), x0, l, {0.5}).reachable);
    auto far = ball_membership(vec({0.6, 0.0}), x0, l, {0.5});
    EXPECT_FALSE(far.reachable);
    EXPECT_NEAR(far.gap, 0.1, 1e-3);
}

TEST(Membership, HeisenbergReachesTheCenterDirection) {
    // exp(X/4) exp(Y/4) exp(-X/4) exp(-Y/4) 0 = (0, 0, 1/4)
    auto l = heis_single();
    auto r = ball_membership(vec({0, 0, 0.1}), vec({0, 0, 0}), l, {1.0});
    EXPECT_TRUE(r.reachable);
}

TEST(Distance, EuclideanDistanceIsTheNorm) {
    auto l = euclid2();
    auto d = cc_distance(vec({0, 0}), vec({0.3, 0.4}), l, 2.0, {}, {}, {}, 20);
    EXPECT_TRUE(d.reached);
    EXPECT_NEAR(d.estimate, 0.5, 5e-3);
    EXPECT_FALSE(cc_distance(vec({0, 0}), vec({3, 4}), l, 2.0).reached);
}

TEST(BallVolume, EuclideanDiscIsQuarterPi) {
    auto t0 = std::chrono::steady_clock::now();
    auto e = ball_volume(vec({0, 0}), euclid2(), {0.5}, 10000, 11);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_NEAR(e.volume / (std::numbers::pi / 4.0), 1.0, 0.05);
    EXPECT_NEAR(e.det_prediction, 0.25, 1e-15);
    EXPECT_GT(e.stderr_, 0.0);
    EXPECT_LT(secs, 10.0);
    EXPECT_THROW(ball_volume(vec({0, 0}), euclid2(), {0.5}, 10, 1), InputError);
}

TEST(BallVolume, SameSeedSameEstimate) {
    auto a = ball_volume(vec({0, 0}), euclid2(), {0.25}, 2000, 5);
    auto b = ball_volume(vec({0, 0}), euclid2(), {0.25}, 2000, 5);
    EXPECT_EQ(a.volume, b.volume);
    EXPECT_EQ(a.endpoints.size(), b.endpoints.size());
}

TEST(BallVolume, CsvHasOneRowPerEstimate) {
    auto a = ball_volume(vec({0, 0}), euclid2(), {0.25}, 1000, 5);
    auto csv = ball_estimate_csv({a, a});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "delta_1,volume,stderr,det_prediction,ratio,samples,seed");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
