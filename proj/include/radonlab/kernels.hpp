#pragma once

#include "radonlab/vfalg.hpp"

#include <map>
#include <set>
#include <string>

namespace radonlab::kernels {

using vfalg::DilationExponents;
using vfalg::ParamIndexSet;

enum class Profile { Poly4, Poly6, Odd4 };
Profile profile_from_name(const std::string& name);
std::string profile_name(Profile p);

// x -> s * p(x / w) on |x| < w
struct Factor {
    Profile profile = Profile::Poly4;
    double w = 1.0;
    double s = 1.0;
    double operator()(double x) const;
    double derivative(double x) const;
    double integral() const;
};

// sum of separable atoms  c_k * prod_i f_{k,i}(t_i)
struct Atom {
    double c = 1.0;
    std::vector<Factor> f;
};

class Bump {
  public:
    Bump() = default;
    Bump(int N, double a, std::vector<Atom> atoms, std::string tag);

    int N() const { return N_; }
    double support_radius() const { return a_; }
    const std::string& tag() const { return tag_; }
    const std::vector<Atom>& atoms() const { return atoms_; }

    double operator()(const double* t) const;
    double operator()(const Vec& t) const { return (*this)(t.data()); }
    Vec gradient(const Vec& t) const;
    double integral() const;
    // per-axis half-widths of the support box
    std::vector<double> box() const;
    // sampled C0 and C1 norms
    double c0_norm(int per_axis = 17) const;
    double c1_norm(int per_axis = 17) const;

    Bump operator-(const Bump& o) const;
    Bump operator+(const Bump& o) const;
    Bump scaled(double c) const;

  private:
    int N_ = 0;
    double a_ = 0.0;
    std::vector<Atom> atoms_;
    std::string tag_;
};

std::vector<std::vector<int>> index_set(int mu0, int nu, int J);

Bump make_bump(const std::string& profile, int N, double a);
// per-axis profiles, each axis normalized to unit absolute mass
Bump make_tensor_bump(const std::vector<std::string>& profiles, double a);
Bump tensor(const Bump& A, const Bump& B);

// coordinates i with e_i^mu != 0
std::vector<int> block(const DilationExponents& e, int mu);

Bump enforce_cancellation(const Bump& b, const std::set<int>& mus, const DilationExponents& e);
Bump dilate_bump(const Bump& b, const std::vector<int>& j, const DilationExponents& e);
Bump dilate_axes(const Bump& b, const std::vector<double>& lambda);

// integral over the coordinates in idx, evaluated at t (other coordinates fixed), by
// composite Gauss-Legendre between atom breakpoints
double marginal(const Bump& b, const std::vector<int>& idx, const Vec& t, int nodes = 32);
double marginal_max(const Bump& b, const std::vector<int>& idx, int samples = 8);

// true when the block integral over t_mu must vanish for piece j (mu 0-based, mu0 1-based)
bool cancellation_required(const std::vector<int>& j, int mu, int mu0);

struct DyadicKernel {
    ParamIndexSet index;
    DilationExponents e;
    int N = 0;
    double a = 0.0;
    std::map<std::vector<int>, Bump> pieces;
    std::map<std::vector<int>, Bump> dilated;
    double sup_bound = 0.0;
};

using FamilyRule = std::function<Bump(const std::vector<int>& j)>;
DyadicKernel synth_kernel(const FamilyRule& rule, int mu0, int nu, int J, const DilationExponents& e, double a,
                          double tol = 1e-12);
void validate_kernel(const DyadicKernel& K, double tol = 1e-12);

DyadicKernel make_product_kernel(const std::vector<DyadicKernel>& factors, const std::vector<int>& n_split);
// factor mu has coordinate degrees degs[mu] (one per coordinate)
DyadicKernel make_delta0_family(const std::vector<Bump>& phis, const std::vector<std::vector<double>>& degs, int J);
// phi_{mu,j} with dilations so that sum_{j<=J} phi_{mu,j}^{(2^j)} = phi^{(2^J)}
Bump make_phi_j(const Bump& phi, int j, const std::vector<double>& degs);

double kernel_eval(const DyadicKernel& K, const Vec& t);

double product_estimate_check(const DyadicKernel& K, const std::vector<int>& alpha, const std::vector<int>& n_split,
                              const std::vector<Vec>& samples);
std::vector<Vec> product_samples(const std::vector<int>& n_split, const std::vector<double>& radii, int kmax);

struct ManifestLine {
    bool is_default = false;
    std::vector<int> j;
    std::vector<std::string> profiles;
    std::string flags;  // nu chars of 0/1, or "auto"
};
struct Manifest {
    int N = 1, nu = 1, mu0 = 1, J = 0;
    double a = 1.0;
    DilationExponents e;
    std::vector<ManifestLine> lines;
};
Manifest parse_manifest(const std::string& text);
std::string write_manifest(const Manifest& m);
DyadicKernel build_kernel(const Manifest& m);

std::string dump_bump_csv(const Bump& b, int per_axis);

}  // namespace radonlab::kernels
