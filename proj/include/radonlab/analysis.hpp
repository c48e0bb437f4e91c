#pragma once

#include "radonlab/ops.hpp"

#include <random>

namespace radonlab::analysis {

using ops::Grid;
using ops::GridFunction;
using ops::LPFamily;
using ops::Operator;

struct NormEstimate {
    std::string label;
    double p = 2.0;
    double value = 0.0;
    std::string method;  // power-iteration | random-probe
    int iters = 0;
    double residual = 0.0;
    bool converged = true;
    GridFunction maximizer;
};

// sqrt of the top eigenvalue of T*T; residual is the last relative change of the Rayleigh quotient
NormEstimate l2_opnorm(const Operator& T, double tol = 1e-6, int max_iter = 200, std::uint64_t seed = 1,
                       const std::string& label = "");

enum class ProbeFamily { Gaussian, Chessboard, SmoothNoise };
GridFunction make_probe(const Grid& g, ProbeFamily fam, std::mt19937_64& rng);
// cycles through the three families
GridFunction make_probe(const Grid& g, int index, std::mt19937_64& rng);

// max over probes of |Tf|_p / |f|_p; a lower bound only
NormEstimate lp_opnorm_lower(const Operator& T, double p, int trials, std::uint64_t seed = 1,
                             const std::string& label = "");

struct DecayPoint {
    double separation;
    double norm;
};

struct DecayFit {
    std::string mode;
    double p = 2.0;
    std::vector<DecayPoint> pairs;
    double eps = 0.0;
    double r2 = 0.0;
    double s_min = 0.0, s_max = 0.0;
    bool zero_family = false;
    std::uint64_t seed = 0;
    // group maxima used in the fit
    std::vector<DecayPoint> groups;
};

constexpr double kNoiseFloor = 1e-12;

// slope of -log2(group max) against separation; FitError below three usable groups
DecayFit fit_decay(std::vector<DecayPoint> pairs, const std::string& mode, double p, std::uint64_t seed);

enum class DecayMode { DDstar, DstarD, BD, TD };
std::string mode_name(DecayMode m);

using BlockFn = std::function<Operator(const std::vector<int>&)>;
struct DecayInputs {
    BlockFn D;
    BlockFn B;  // BD mode
    BlockFn T;  // TD mode
};

// each tuple holds two indices (DD*, D*D, BD) or three (TD: j1, j2, j3)
DecayFit orthogonality_decay(const DecayInputs& in, const std::vector<std::vector<std::vector<int>>>& tuples,
                             DecayMode mode, std::uint64_t seed = 1, double tol = 1e-6);

int linf_dist(const std::vector<int>& a, const std::vector<int>& b);
int diam(const std::vector<std::vector<int>>& js);

// all j in [0,J]^nu, lexicographic
std::vector<std::vector<int>> full_index(int nu, int J);
// D_j f (or D_j* f) for every j of full_index, sharing partial compositions
std::vector<Vec> all_blocks(const LPFamily& fam, const Vec& f, bool adjoint = false);

struct PairSums {
    Operator U;
    Operator R;
    Operator literal_sum;  // (sum_j D_j)^2
    Operator psi_power;    // psi_{-3}^{4 nu}
    double boundary_discrepancy = 0.0;
};
// |l| measured in l1
PairSums build_UM_RM(const LPFamily& fam, int M, std::uint64_t seed = 1);

struct Neumann {
    Operator V;
    double contraction = 0.0;
    int m_max = 0;
    double tail = 0.0;
};
Neumann build_VM(const Operator& R, const GridFunction& psi, int m_max, std::uint64_t seed = 1);

// |psi_{-2} f - psi_{-2} U V f|_2
double reproducing_residual(const Operator& U, const Operator& V, const GridFunction& psi_m2, const GridFunction& f);

GridFunction square_function(const LPFamily& fam, const GridFunction& f);

struct SquareFunctionInterval {
    double lo = 0.0, hi = 0.0;
    std::vector<double> ratios;
    double C() const { return std::max(hi, 1.0 / lo); }
};
// ratios |psi_{-2} f|_p / |S psi_{-2} f|_p over probes
SquareFunctionInterval square_function_interval(const LPFamily& fam, const GridFunction& psi_m2, double p, int probes,
                                                std::uint64_t seed);

// max over sign draws of the norm of sum_j (prod_mu eps^mu_{j_mu}) D_j
NormEstimate rademacher_probe(const LPFamily& fam, double p, int trials, std::uint64_t seed, bool all_plus = false);

// diagonal entries of a block-diagonal sequence operator; empty when the shift leaves the truncation
using SequenceFamily = std::function<std::vector<Operator>(const std::vector<int>& k)>;
// L^p(l^2) norm lower bound over random sequence probes; p = 2 also seeds with per-entry maximizers
double sequence_norm(const std::vector<Operator>& diag, double p, int trials, std::uint64_t seed);
DecayFit vector_valued_decay(const SequenceFamily& fam, const std::vector<std::vector<int>>& ks, double p, int trials,
                             const std::string& mode, std::uint64_t seed = 1);

// q_0 = 2, q_{n+1} = 2 q_n / (q_n + 1); left endpoints of (q, 2]
std::vector<double> bootstrap_pset(int steps);

std::string decay_csv(const std::vector<DecayFit>& fits);
std::string norm_csv(const std::vector<NormEstimate>& est);

}  // namespace radonlab::analysis
