#pragma once

#include "radonlab/analysis.hpp"

#include <array>

namespace radonlab::heis {

using ops::GridFunction;
using ops::Grid;

struct HeisPoint {
    double x = 0.0, y = 0.0, t = 0.0;
    bool operator==(const HeisPoint&) const = default;
};

// X = d_x - 2y d_t, Y = d_y + 2x d_t, T = d_t.
// Three-parameter degrees (1,0,0),(0,1,0),(0,0,1); two-parameter (1,0),(0,1),(1,1).
vfalg::FieldList heis_fields(bool two_parameter = false);

HeisPoint heis_dilate(double r, const HeisPoint& p);
Vec heis_dilate(double r, const Vec& p);

// exp(aX + bY + cT) p in closed form
Vec heis_exp(double a, double b, double c, const Vec& p);

// gamma_t(x) = exp(t1 X + t2 Y) x, exponents (1,0),(0,1)
vfalg::GammaSpec heis_gamma();
// one-dimensional flows along X (mu = 1) or Y (mu = 2)
vfalg::GammaSpec heis_gamma_hat(int mu);
vfalg::DilationExponents heis_exponents();

using Delta3 = std::array<double, 3>;
// {cap 2^-k : k < levels}^3
std::vector<Delta3> strong_delta_grid(double cap, int levels);

// sup over deltas of the unit-ball average of |f(exp(u1 d1 X + u2 d2 Y + u3 d3 T) xi)|
Vec strong_maximal_at(const GridFunction& f, const std::vector<Delta3>& deltas, const std::vector<Vec>& points,
                      int radial = 6);
// evaluated at grid points with |x_i| <= eval_radius, zero elsewhere
GridFunction strong_maximal(const GridFunction& f, const std::vector<Delta3>& deltas, double eval_radius,
                            int radial = 6);

struct CovarianceResult {
    double discrepancy = 0.0;
    double budget = 0.0;
    double weight = 0.0;  // discrete unit-ball volume
    double E_f = 0.0, E_F = 0.0;
    int points = 0;
};

// compares (M_{delta/r} f^{(r)_p})^{(1/r)_p} with M_delta f on the t = 0 plane; g1 carries f, g2 the dilate,
// with equal P (odd) and g2.L = g1.L / r
CovarianceResult dilation_covariance_check(const std::function<double(const Vec&)>& f, double r, double p, double N,
                                           const Grid& g1, const Grid& g2, double eval_radius, int levels = 3,
                                           int radial = 6);

struct XstReport {
    std::vector<int> J;
    std::vector<double> maximal_ratio;
    double maximal_slope = 0.0;  // fitted slope of log2 ratio against J
    std::vector<double> T_norm;
};

// gamma_{s,t}(x) = x - st on a one-dimensional grid
vfalg::GammaSpec xst_gamma();
XstReport xst_experiment(int J_min, int J_max, double p, const Grid& g, double a, int probes, std::uint64_t seed,
                         bool with_T = true);

struct LPScenario {
    Grid grid;
    ops::CutoffChain chain;
    std::vector<ops::BlockSpec> blocks;
};
// two-parameter Littlewood-Paley blocks along X and Y with a poly4 bump of radius a
LPScenario heis_lp_scenario(int P, double L, double a);

}  // namespace radonlab::heis
