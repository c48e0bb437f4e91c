#pragma once

#include "radonlab/common.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace radonlab::vfalg {

class FormalDegree {
  public:
    FormalDegree() = default;
    explicit FormalDegree(std::vector<double> c);

    int nu() const { return static_cast<int>(c_.size()); }
    double operator[](int mu) const { return c_[mu]; }
    const std::vector<double>& components() const { return c_; }

    FormalDegree operator+(const FormalDegree& o) const;
    bool leq(const FormalDegree& cap) const;
    bool operator==(const FormalDegree& o) const { return c_ == o.c_; }
    // index of the single nonzero component, or -1
    int pure_component() const;
    std::string str() const;

  private:
    std::vector<double> c_;
};

using DilationExponents = std::vector<FormalDegree>;

// delta^d = prod_mu delta_mu^{d^mu} with 0^0 = 1
double dilation_factor(const std::vector<double>& delta, const FormalDegree& d);

class Polynomial {
  public:
    using Monomial = std::vector<int>;

    explicit Polynomial(int nvars = 0) : nvars_(nvars) {}
    static Polynomial constant(int nvars, double c);
    static Polynomial variable(int nvars, int i, double c = 1.0);

    int nvars() const { return nvars_; }
    const std::map<Monomial, double>& terms() const { return terms_; }
    void add_term(const Monomial& m, double c);

    double eval(const Vec& x) const;
    Polynomial derivative(int i) const;
    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial scaled(double c) const;
    bool is_zero() const { return terms_.empty(); }

    std::string str() const;
    static Polynomial parse(const std::string& line, int nvars);

  private:
    int nvars_;
    std::map<Monomial, double> terms_;
};

class VectorFieldSpec {
  public:
    using Evaluator = std::function<Vec(const Vec&)>;

    VectorFieldSpec() = default;
    static VectorFieldSpec symbolic(std::vector<Polynomial> coords, double domain_scale = 1.0);
    static VectorFieldSpec numeric(int n, Evaluator f, double domain_scale = 1.0);

    int dim() const { return n_; }
    Vec operator()(const Vec& x) const { return eval_(x); }
    bool is_symbolic() const { return !polys_.empty(); }
    const std::vector<Polynomial>& polys() const { return polys_; }
    double domain_scale() const { return scale_; }
    VectorFieldSpec scaled(double c) const;

  private:
    int n_ = 0;
    double scale_ = 1.0;
    Evaluator eval_;
    std::vector<Polynomial> polys_;
};

struct WeightedField {
    VectorFieldSpec field;
    FormalDegree degree;
};
using FieldList = std::vector<WeightedField>;

struct ParamIndexSet {
    int mu0;  // 1-based
    int nu;
    int J;
    std::vector<std::vector<int>> enumerate() const;
    bool contains(const std::vector<int>& j) const;
};

struct GammaSpec {
    int N = 0;
    int n = 0;
    std::function<Vec(const Vec& t, const Vec& x)> eval;
    double rho = 1.0;
};

std::vector<double> dilate_param(const std::vector<double>& delta, const DilationExponents& e,
                                 const std::vector<double>& t);
Vec dilate_param(const std::vector<double>& delta, const DilationExponents& e, const Vec& t);

std::vector<VectorFieldSpec> scale_fields(const std::vector<double>& delta, const FieldList& fields);

VectorFieldSpec commutator(const VectorFieldSpec& X, const VectorFieldSpec& Y);

struct GenerateOptions {
    int size_bound = 64;
    int samples = 32;
    double rel_tol = 1e-8;
    double numeric_rel_tol = 1e-5;
    double sample_half_width = 1.0;
};
FieldList generate_finite_list(const FieldList& seeds, const FormalDegree& degree_cap,
                               const GenerateOptions& opt = {});

struct WOptions {
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    double jac_step = 1e-7;
    double eps_step = 1e-5;
};
Vec invert_gamma(const GammaSpec& g, const Vec& t, const Vec& x, const WOptions& opt = {});
Vec compute_W(const GammaSpec& g, const Vec& t, const Vec& x, const WOptions& opt = {});

struct TaylorField {
    std::vector<int> alpha;
    VectorFieldSpec field;
    FormalDegree degree;
};
struct TaylorOptions {
    double radius_fraction = 0.1;
    int points_per_axis = 5;
    double max_condition = 1e12;
    WOptions w;
};
std::vector<TaylorField> taylor_fields(const GammaSpec& g, const DilationExponents& e, int order,
                                       const TaylorOptions& opt = {});
std::vector<TaylorField> pure_power_fields(const std::vector<TaylorField>& all);

struct CertificateResult {
    double max_residual = 0.0;
    double max_coefficient = 0.0;
};
CertificateResult check_commutator_certificate(const FieldList& fields, const std::vector<double>& delta,
                                               const std::vector<Vec>& samples);

std::string write_field(const VectorFieldSpec& X);
std::string write_field_list(const FieldList& fields);
FieldList read_field_list(const std::string& text);

}  // namespace radonlab::vfalg
