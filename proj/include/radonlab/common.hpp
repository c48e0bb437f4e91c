#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace radonlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : Error { using Error::Error; };
struct UnsupportedInput : Error { using Error::Error; };
struct GrowthError : Error { using Error::Error; };
struct InversionError : Error { using Error::Error; };
struct ConditioningError : Error { using Error::Error; };
struct EscapeError : Error { using Error::Error; };
struct DegeneratePoint : Error { using Error::Error; };
struct ChartDegenerate : Error { using Error::Error; };
struct CoverageError : Error { using Error::Error; };
struct FitError : Error { using Error::Error; };
struct PreconditionFailure : Error { using Error::Error; };

struct KernelClassError : Error {
    std::vector<int> j;
    int mu;
    KernelClassError(std::vector<int> j_, int mu_, const std::string& msg)
        : Error(msg), j(std::move(j_)), mu(mu_) {}
};

constexpr int kInf = std::numeric_limits<int>::max();

// 0^0 = 1.
double pow0(double base, double e);

// Radical-inverse (Halton) points in [lo,hi]^dim.
std::vector<Vec> halton_points(int count, int dim, double lo, double hi);

// Gauss-Legendre nodes and weights on [-1,1].
struct Quadrature1D {
    std::vector<double> x;
    std::vector<double> w;
};
const Quadrature1D& gauss_legendre(int n);

// 17 significant digits.
std::string fmt_double(double v);

// Best rational p/q with q <= max_den if it matches v to 1e-12, else decimal.
std::string fmt_rational(double v, int max_den = 1000);
double parse_rational(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Neumaier compensated sum.
class KahanSum {
  public:
    void add(double v);
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

void parallel_for(int count, const std::function<void(int)>& fn);
void set_jobs(int jobs);
int jobs();

}  // namespace radonlab
