#pragma once

#include "radonlab/vfalg.hpp"

#include <cstdint>
#include <optional>

namespace radonlab::flow {

using vfalg::FieldList;
using vfalg::VectorFieldSpec;

enum class Integrator { RK4, RK45 };

struct FlowConfig {
    Integrator integrator = Integrator::RK4;
    double h_ode = 1.0 / 32.0;
    double tol = 1e-10;
    double domain_half_width = 10.0;
};

// K pieces of equal duration 1/K; pieces[k] has one entry per field
struct Controls {
    std::vector<Vec> pieces;
};

Vec flow(const std::vector<VectorFieldSpec>& fields, const Controls& a, const Vec& x0, const FlowConfig& cfg = {});
Vec flow_constant(const std::vector<VectorFieldSpec>& fields, const Vec& a, const Vec& x0, const FlowConfig& cfg = {});

// |det_{k x k} A|_inf over all k x k minors of an n x k matrix
double det_minor_max(const Mat& A);

struct Frame {
    std::vector<int> J0;
    int n0 = 0;
    double det = 0.0;
};
Frame select_frame(const FieldList& fields, const std::vector<double>& delta, const Vec& x0);

class ExpChart {
  public:
    ExpChart(std::vector<VectorFieldSpec> scaled, Frame frame, Vec x0, double eta1, FlowConfig cfg);

    Vec operator()(const Vec& u) const;
    Mat jacobian(const Vec& u) const;
    double det(const Vec& u) const;
    const Frame& frame() const { return frame_; }
    const Vec& base() const { return x0_; }
    double radius() const { return eta1_; }
    int n0() const { return frame_.n0; }
    const std::vector<VectorFieldSpec>& scaled_fields() const { return scaled_; }
    const FlowConfig& config() const { return cfg_; }
    // false if two sampled u with |u-u'| > 1e-9 map within 1e-12
    bool check_injectivity(int samples, std::uint64_t seed) const;

  private:
    std::vector<VectorFieldSpec> scaled_;
    std::vector<VectorFieldSpec> frame_fields_;
    Frame frame_;
    Vec x0_;
    double eta1_;
    FlowConfig cfg_;
};

ExpChart exp_chart(const FieldList& fields, const std::vector<double>& delta, const Vec& x0, double eta1 = 0.5,
                   const FlowConfig& cfg = {});

struct MembershipBudget {
    int pieces = 8;
    int restarts = 4;
    int max_evals = 600;
    double gap_tol = 1e-3;
    std::uint64_t seed = 1;
};

struct MembershipResult {
    bool reachable = false;
    double gap = 0.0;
    Controls control;
};

MembershipResult ball_membership(const Vec& y, const Vec& x0, const FieldList& fields, const std::vector<double>& delta,
                                 const MembershipBudget& budget = {}, const FlowConfig& cfg = {});

struct VolumeOptions {
    double chart_extent = 1.5;
    int max_growth = 3;
    MembershipBudget membership{8, 1, 96, 1e-3, 1};
};

struct BallEstimate {
    std::vector<double> delta;
    std::vector<Vec> endpoints;
    double volume = 0.0;
    double stderr_ = 0.0;
    double det_prediction = 0.0;
    double ratio = 0.0;
    int samples = 0;
    std::uint64_t seed = 0;
};

BallEstimate ball_volume(const Vec& x0, const FieldList& fields, const std::vector<double>& delta, int samples,
                         std::uint64_t seed, const VolumeOptions& opt = {}, const FlowConfig& cfg = {});

struct DoublingResult {
    double measured = 0.0;
    double predicted = 0.0;
    BallEstimate small;
    BallEstimate large;
};
DoublingResult doubling_ratio(const Vec& x0, const FieldList& fields, const std::vector<double>& delta, int samples,
                              std::uint64_t seed, const VolumeOptions& opt = {}, const FlowConfig& cfg = {});

std::vector<VectorFieldSpec> pullback_fields(const ExpChart& chart, const FieldList& fields);

struct DistanceEstimate {
    double estimate = 0.0;
    bool reached = false;
    double gap = 0.0;
};
// bisection on a scalar delta0; delta = delta0 * scalarization
DistanceEstimate cc_distance(const Vec& x, const Vec& y, const FieldList& fields, double delta_max,
                             const MembershipBudget& budget = {}, const std::vector<double>& scalarization = {},
                             const FlowConfig& cfg = {}, int bisections = 30);

std::string ball_estimate_csv(const std::vector<BallEstimate>& rows);

}  // namespace radonlab::flow
