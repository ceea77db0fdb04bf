#pragma once

#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lindistflow.hpp"

namespace vg {

enum class Rule { Unconstrained, Projected, Pgd, Dpgd, Apgd, Ieee1547 };

const char* rule_name(Rule r);
Rule rule_from_name(const std::string& name);

/// Step-size selection: an explicit value, or a fraction of one of the
/// certified bounds computed from the model matrices.
enum class MuBoundKind { Prop3, Lmax, Prop6, Explicit };

struct MuPolicy {
    MuBoundKind bound = MuBoundKind::Lmax;
    double fraction = 1.0;
    double explicit_value = 0.0;

    double resolve(const EigenSummary& eig) const;
};

/// Increasing piecewise-linear volt-var curve q = S(v0 - v), clamped at the
/// first and last breakpoints.
struct DroopCurve {
    std::vector<std::pair<double, double>> points;  // (deviation, injection), sorted

    double eval(double deviation) const;
    /// Deadband-saturation shape: zero inside +-deadband, then linear with
    /// the given slope until saturating at +-q_limit.
    static DroopCurve deadband_shape(double deadband, double slope, double q_limit);
};

struct ControlConfig {
    Rule rule = Rule::Pgd;
    MuPolicy mu;
    /// APGD restart window: nullopt = ceil(2 sqrt(kappa)), 0 = never restart.
    std::optional<int> restart_every;
    Eigen::VectorXd cost;     // c_n >= 0 per controlled entry
    Eigen::VectorXd q_limit;  // qbar_n >= 0 per controlled entry
    Eigen::VectorXd d_scale;  // DPGD scaling d_n; empty selects 1/diag(X)
    std::vector<DroopCurve> droop;  // per controlled entry (ieee1547)
    double tol = 1e-8;
    int max_iter = 10000;
};

struct ControlState {
    int t = 0;  // completed synchronous updates
    Eigen::VectorXd q, v;
    Eigen::VectorXd y_prev;  // APGD memory, set after the first step
    double beta = 0.0;       // momentum coefficient used by the last step
    bool converged = false;
    double dq_inf = std::numeric_limits<double>::quiet_NaN();
    double dq_norm2 = 0.0;      // ||q^t - q^{t-1}||_2
    double contraction = 0.0;   // dq_norm2 ratio against the previous step
};

/// Computes v(q) for the configured plant (linear model or AC solver).
class Plant {
public:
    virtual ~Plant() = default;
    virtual Eigen::VectorXd voltages(const Eigen::VectorXd& q_ctrl) const = 0;
    virtual double v0_squared() const = 0;
};

/// v(q) = base + X q with base = R p + X q_fixed + v0 1. Self-contained: the
/// matrices are copied so the plant stays valid independently of the builder.
class LinearPlant final : public Plant {
public:
    LinearPlant(const GridMatrices& mats, const Eigen::VectorXd& p_net,
                const Eigen::VectorXd& q_fixed, double v0_squared);
    Eigen::VectorXd voltages(const Eigen::VectorXd& q_ctrl) const override;
    double v0_squared() const override { return v0sq_; }

private:
    Eigen::MatrixXd x_;
    Eigen::VectorXd base_;
    double v0sq_;
};

/// qbar_n = sqrt(s_n^2 - p_n^2) per served entry; 0 where no PV is installed.
Eigen::VectorXd capability_limits(const Feeder& feeder,
                                  const std::vector<std::pair<int, Phase>>& mask);
Eigen::VectorXd compensation_costs(const Feeder& feeder,
                                   const std::vector<std::pair<int, Phase>>& mask);

/// Closed-form single-phase minimizer computed along both algebraic routes:
/// q* = -X^-1 R p and the power-flow form A^T diag(r/x) P with P = -F^T p.
/// The two must agree to 1e-10.
struct ClosedForm {
    Eigen::VectorXd q_direct;
    Eigen::VectorXd q_flow;
};
ClosedForm closed_form_qstar(const GridMatrices& mats, const Eigen::VectorXd& p);

/// Soft-threshold by mu*c, then clamp to [-qbar, qbar].
double prox_scalar(double y, double mu, double c, double qbar);

/// Momentum coefficient (t'-1)/(t'+2) with t' counted from the last restart.
double beta_schedule(int t, std::optional<int> restart_every);

ControlState init_state(const Plant& plant, const Eigen::VectorXd& q0);

/// One synchronous update of all controlled entries. Each entry reads only its
/// own voltage measurement and memory; the new voltages come from the plant.
ControlState step(const ControlState& state, const Plant& plant, const GridMatrices& mats,
                  const ControlConfig& config);

/// Voltage-deviation cost through the rotated norm, (1/2)||v - v0 1||^2_{X^-1}.
/// Single-phase matrices only.
double f2_rotated(const GridMatrices& mats, const Eigen::VectorXd& v, double v0_squared);

/// The telescoped equivalent (1/4) sum over lines and served phases of
/// (v_parent - v_child)^2 / x. Defined for both model kinds.
double f2_by_lines(const Feeder& feeder, const GridMatrices& mats, const Eigen::VectorXd& v,
                   double v0_squared);

double c2_cost(const Eigen::VectorXd& cost, const Eigen::VectorXd& q);


}  // namespace vg
