#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ac_oracle.hpp"
#include "control.hpp"

namespace vg {

enum class ModelKind { SinglePhase, Multiphase };
enum class PlantKind { Linear, Ac };

/// One control rule to run under the scenario's injections.
struct RuleSpec {
    std::string label;  // defaults to the rule name
    Rule rule = Rule::Pgd;
    MuPolicy mu;
    std::optional<int> restart_every;  // APGD; nullopt = default window, 0 = off
    std::optional<double> tol;
    std::optional<double> droop_slope;  // ieee1547; default 1/mu
};

struct Scenario {
    std::string name;
    Feeder feeder;
    ModelKind model = ModelKind::SinglePhase;
    PlantKind plant = PlantKind::Linear;
    int horizon = 500;
    double load_scale = 1.0;
    double pv_scale = 1.0;
    std::optional<double> v0_squared;   // feeder override
    std::optional<double> pv_hour;      // clear-day generation profile hour
    double tol = 1e-8;
    unsigned seed = 0;
    std::vector<RuleSpec> rules;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& base_dir);

/// One row per (rule, iteration, bus, phase).
struct TraceRecord {
    std::string scenario;
    std::string rule;
    int t = 0;
    std::string bus;
    char phase = 'a';
    double v = 0.0;
    double q = 0.0;
    double f2 = 0.0;
    double c2 = 0.0;
    double h2 = 0.0;
    double rel_err = 0.0;
    double contraction = 0.0;
};

struct RuleOutcome {
    std::string label;
    Rule rule = Rule::Pgd;
    double mu = 0.0;
    bool converged = false;
    int iterations = 0;                   // steps actually taken
    int iterations_to_convergence = -1;   // first t after which |rel_err| stays < 1e-4
    double final_rel_err = 0.0;
    double final_dq_inf = 0.0;
    double fixed_point_residual = 0.0;    // ||q - rule(q)||_inf at the final iterate
    double h2_final = 0.0;
    double linear_vs_ac_error = 0.0;      // max |v_lin - v_ac| at the final iterate
    double speedup_vs_pgd = 0.0;
    double wall_ms = 0.0;
};

struct RunResult {
    std::vector<TraceRecord> trace;
    std::vector<RuleOutcome> rules;
    double h2_reference = 0.0;           // for the initial topology
    double max_linear_vs_ac_error = 0.0;
    bool aborted = false;
    std::string error;
    Status error_status = Status::Ok;
};

RunResult run_scenario(const Scenario& scenario);

std::string trace_to_csv(const std::vector<TraceRecord>& trace);
std::string summary_to_json(const Scenario& scenario, const RunResult& result);

/// Relative-error threshold defining "iterations to convergence".
inline constexpr double kConvergenceRelErr = 1e-4;

/// Unique minimizer of f2 + c2 over the capability box, found by plain
/// proximal gradient iterations at mu = 1/lambda_max to the given tolerance
/// (1e-12 by default). For multiphase matrices the same iteration converges
/// to the equilibrium point instead, which serves as the trace reference;
/// likewise for an AC plant, whose own solver tolerance bounds the achievable
/// tolerance here.
struct Optimum {
    Eigen::VectorXd q;
    double h2 = 0.0;
    int iterations = 0;
};
Optimum best_known_optimum(const Feeder& feeder, const GridMatrices& mats, const Plant& plant,
                           const Eigen::VectorXd& cost, const Eigen::VectorXd& q_limit,
                           double tol = 1e-12);

/// Plant backed by the nonlinear AC solver at fixed loads.
class AcPlant final : public Plant {
public:
    AcPlant(Feeder feeder, Eigen::VectorXd p_net, Eigen::VectorXd q_fixed);
    Eigen::VectorXd voltages(const Eigen::VectorXd& q_ctrl) const override;
    double v0_squared() const override { return feeder_.v0_squared; }

private:
    Feeder feeder_;
    Eigen::VectorXd p_net_, q_fixed_;
};

struct ProbeRow {
    double multiplier = 0.0;
    double mu = 0.0;
    std::string outcome;  // converged | oscillating | diverged
    double final_dq_inf = 0.0;
    int iterations = 0;
};

/// Run the proximal rule at mu = m * prop6_bound for each multiplier and
/// classify the tail behavior of ||dq||. Divergence is a recorded outcome,
/// not an error; iterates are capped at 1e6 to stop overflow.
std::vector<ProbeRow> divergence_probe(const Feeder& feeder, const GridMatrices& mats,
                                       const std::vector<double>& multipliers,
                                       int horizon = 3000, double tol = 1e-8);

std::string probe_to_json(const std::vector<ProbeRow>& rows);

/// Clear-day generation factor in [0, 1] for an hour of day (sunrise 6h,
/// peak noon, sunset 18h).
double clear_day_factor(double hour);

/// Scenario-ready copy of a feeder: loads and PV generation scaled, optional
/// feeder-voltage override applied, collapsed to single phase when requested.
Feeder prepare_feeder(const Scenario& scenario);

}  // namespace vg
