#pragma once

#include "radonlab/flow.hpp"
#include "radonlab/kernels.hpp"

#include <memory>
#include <optional>

namespace radonlab::ops {

using vfalg::FieldList;
using vfalg::GammaSpec;

struct Grid {
    int n = 1;
    double L = 1.0;
    int P = 8;

    Grid() = default;
    Grid(int n_, double L_, int P_);
    double h() const { return 2.0 * L / (P - 1); }
    long size() const;
    Vec point(long idx) const;
    long index(const std::vector<int>& multi) const;
    std::vector<int> multi(long idx) const;
    bool operator==(const Grid& o) const { return n == o.n && L == o.L && P == o.P; }
};

class GridFunction {
  public:
    GridFunction() = default;
    GridFunction(Grid g, Vec v);
    static GridFunction zeros(const Grid& g);
    static GridFunction sample(const Grid& g, const std::function<double(const Vec&)>& f);

    const Grid& grid() const { return grid_; }
    const Vec& values() const { return v_; }
    Vec& values() { return v_; }

    double lp_norm(double p) const;
    double inner(const GridFunction& o) const;
    // multilinear interpolation; nullopt outside the box
    std::optional<double> interpolate(const Vec& x) const;

    std::string to_csv() const;
    static GridFunction from_csv(const std::string& text, const Grid& g);
    std::string to_binary() const;
    static GridFunction from_binary(const std::string& bytes);

  private:
    Grid grid_;
    Vec v_;
};

// (index, weight) pairs for multilinear interpolation; empty if outside the box
void interpolation_weights(const Grid& g, const Vec& x, std::vector<std::pair<long, double>>& out);

struct Cutoff {
    double r_in = 0.0;  // as a fraction of L
    double r_out = 1.0;
    double L = 1.0;
    double operator()(const Vec& x) const;
};

struct CutoffChain {
    Cutoff psi1, psi2, psi0, psi_m1, psi_m2, psi_v, psi_m3;
    static CutoffChain standard(double L);
    // psi_next == 1 wherever psi_prev > 0 on the grid
    bool check_nesting(const Grid& g) const;
    GridFunction sample(const Cutoff& c, const Grid& g) const;
};

struct WindowSigma {
    double b = 1.0;
    double sigma0(double s) const;
    double operator()(const Vec& t) const;
    // per-axis nodes on [-b,b] and the matching discrete mass
    const Quadrature1D& nodes() const;
    // each of the three panels split into `factor` equal pieces
    Quadrature1D refined(int factor) const;
    double mass1d() const;
};

// CSR stencil: out[r] = sum val * in[col]
struct Stencil {
    std::vector<long> row_ptr;
    std::vector<long> col;
    std::vector<double> val;
    void apply(const Vec& in, Vec& out) const;
    void apply_adjoint(const Vec& in, Vec& out) const;
    size_t nnz() const { return val.size(); }
};

class Operator {
  public:
    using Fn = std::function<Vec(const Vec&)>;
    Operator() = default;
    Operator(Grid g, std::string label, Fn apply, Fn adjoint = {});

    const Grid& grid() const { return grid_; }
    const std::string& label() const { return label_; }
    bool has_adjoint() const { return static_cast<bool>(adj_); }
    Vec apply(const Vec& f) const;
    Vec apply_adjoint(const Vec& f) const;
    GridFunction operator()(const GridFunction& f) const;
    Operator adjoint() const;

  private:
    Grid grid_;
    std::string label_;
    Fn fn_;
    Fn adj_;
};

Operator from_stencil(const Grid& g, std::shared_ptr<const Stencil> s, const std::string& label);
Operator multiply(const GridFunction& psi, const std::string& label = "mult");
Operator identity(const Grid& g);
Operator compose(const Operator& A, const Operator& B);  // A o B
Operator combine(const std::vector<std::pair<double, Operator>>& terms, const std::string& label);
Operator zero(const Grid& g);

struct QuadNode {
    Vec t;
    double w;
};

// out(x) = outer(x) * sum_q w_q kappa(t_q,x) inner(y_q) f(y_q),  y_q = gamma(t_q, x)
std::shared_ptr<const Stencil> build_average(const Grid& g, const std::vector<QuadNode>& nodes,
                                             const std::function<Vec(const Vec&, const Vec&)>& gamma,
                                             const Cutoff& outer, const Cutoff& inner,
                                             const std::function<double(const Vec&, const Vec&)>& kappa = {});

// tensor Gauss-Legendre nodes on the support box of b, weighted by b(u), mapped t = lambda^{-1} u
std::vector<QuadNode> bump_nodes(const kernels::Bump& b, const std::vector<double>& lambda, int per_axis);
std::vector<QuadNode> bump_nodes(const kernels::Bump& b, const std::vector<double>& lambda,
                                 const std::vector<int>& counts);
// per-axis node counts so that t-spacing times the flow speed stays below h / density (at least min_count)
std::vector<int> resolved_counts(const GammaSpec& gamma, const Grid& g, const Cutoff& where,
                                 const std::vector<double>& t_half_width, double density, int min_count);
std::vector<QuadNode> ball_nodes(int N, double a, int radial = 12);

using Kappa = std::function<double(const Vec& t, const Vec& x)>;

Operator make_Tj(const kernels::Bump& piece, const std::vector<int>& j, const vfalg::DilationExponents& e,
                 const GammaSpec& gamma, const Grid& g, const CutoffChain& chain, const Kappa& kappa = {},
                 int per_axis = 16);
GridFunction apply_Tj(const kernels::Bump& piece, const std::vector<int>& j, const vfalg::DilationExponents& e,
                      const GammaSpec& gamma, const CutoffChain& chain, const Kappa& kappa, const GridFunction& f,
                      int per_axis = 16);
Operator make_T(const kernels::DyadicKernel& K, const GammaSpec& gamma, const Grid& g, const CutoffChain& chain,
                const Kappa& kappa = {}, int per_axis = 16);
GridFunction apply_T(const kernels::DyadicKernel& K, const GammaSpec& gamma, const CutoffChain& chain,
                     const Kappa& kappa, const GridFunction& f, int per_axis = 16);

using kernels::make_phi_j;

GammaSpec build_gamma_hat(const std::vector<vfalg::VectorFieldSpec>& fields, const flow::FlowConfig& cfg = {});

struct Sublist {
    FieldList fields;
    std::vector<double> degs;  // single-parameter degree d^mu per field
};
// mu and mu0 1-based; general=true groups fields with vanishing degree before mu (for mu > mu0)
Sublist extract_sublist(const FieldList& fields, int mu, int mu0, bool general = false);

struct BlockSpec {
    GammaSpec gamma_hat;
    std::vector<double> degs;
    kernels::Bump phi;
};

class LPFamily {
  public:
    // node_density > 0 raises the per-axis node count at coarse scales (see resolved_counts)
    LPFamily(Grid g, CutoffChain chain, std::vector<BlockSpec> blocks, int J, bool closed_top, int per_axis = 16,
             double node_density = 2.0);

    int nu() const { return static_cast<int>(blocks_.size()); }
    int J() const { return J_; }
    const Grid& grid() const { return grid_; }
    const CutoffChain& chain() const { return chain_; }
    bool closed_top() const { return closed_; }
    const Operator& block(int mu, int k) const { return D_[mu][k]; }
    // psi_m3(x) int f(gh_t x) psi_m3(gh_t x) phi^{(2^k)}(t) dt
    const Operator& windowed(int mu, int k) const { return avg_[mu][k]; }
    Operator D(const std::vector<int>& j) const;
    Operator sum_mu(int mu) const;

  private:
    Grid grid_;
    CutoffChain chain_;
    std::vector<BlockSpec> blocks_;
    int J_;
    bool closed_;
    std::vector<std::vector<Operator>> avg_;
    std::vector<std::vector<Operator>> D_;
};

GridFunction apply_D(const LPFamily& fam, const std::vector<int>& j, const GridFunction& f);

struct AverageSpec {
    GammaSpec gamma_hat;
    std::vector<double> degs;
};

class AFamily {
  public:
    AFamily(Grid g, CutoffChain chain, std::vector<AverageSpec> blocks, WindowSigma sigma, int per_axis = 16,
            double node_density = 2.0);
    int nu() const { return static_cast<int>(blocks_.size()); }
    Operator A_mu(int mu, int j) const;  // j may be kInf
    Operator A(const std::vector<int>& j) const;
    const WindowSigma& sigma() const { return sigma_; }

  private:
    Grid grid_;
    CutoffChain chain_;
    std::vector<AverageSpec> blocks_;
    WindowSigma sigma_;
    int per_axis_;
    double density_;
    mutable std::map<std::pair<int, int>, Operator> cache_;
};

GridFunction apply_A(const AFamily& fam, const std::vector<int>& j, const GridFunction& f);

std::vector<int> jE_index(const std::vector<int>& E, const std::vector<int>& j, int mu0);

Operator make_M(const std::vector<int>& j, const GammaSpec& gamma, const vfalg::DilationExponents& e, const Grid& g,
                const CutoffChain& chain, const WindowSigma& sigma);
GridFunction apply_M_jE(const std::vector<int>& E, const std::vector<int>& j, int mu0, const GammaSpec& gamma,
                        const vfalg::DilationExponents& e, const CutoffChain& chain, const WindowSigma& sigma,
                        const GridFunction& f);
Operator make_B(const std::vector<int>& j, int mu0, const AFamily& A, const GammaSpec& gamma,
                const vfalg::DilationExponents& e, const Grid& g, const CutoffChain& chain);
GridFunction apply_B(const std::vector<int>& j, int mu0, const AFamily& A, const GammaSpec& gamma,
                     const vfalg::DilationExponents& e, const CutoffChain& chain, const GridFunction& f);

// dyadic-plus-midpoint values 2^-k and 3*2^-(k+2), k <= J, tensorized and filtered to the chain condition
std::vector<std::vector<double>> default_delta_grid(int nu, int mu0, int J);

GridFunction maximal_M(const GammaSpec& gamma, const vfalg::DilationExponents& e, const CutoffChain& chain, double a,
                       const std::vector<std::vector<double>>& delta_grid, const GridFunction& f, int radial = 12);

// columns K(., y) for the listed grid indices y
Mat schwartz_kernel(const Operator& op, const std::vector<long>& columns);

}  // namespace radonlab::ops
