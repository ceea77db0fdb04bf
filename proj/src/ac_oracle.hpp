#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feeder.hpp"

namespace vg {

struct AcOptions {
    double tol = 1e-10;   // max complex voltage update between sweeps
    int max_sweeps = 200;
};

/// Converged forward-backward sweep solution. Vectors run over the served
/// (bus, phase) pairs in bus-major order; line n shares the mask of bus n.
struct AcSolution {
    std::vector<std::pair<int, Phase>> mask;
    Eigen::VectorXcd bus_voltage;
    Eigen::VectorXcd line_current;  // flowing parent -> child
    Eigen::VectorXd v_squared;
    int sweeps = 0;
    double mismatch = 0.0;
};

/// Full nonlinear AC power flow for a radial feeder with constant-power net
/// injections p + jq per served (bus, phase) pair. The feeder bus is held at
/// the declared magnitude with balanced reference angles (0, -120, +120 deg).
AcSolution solve_ac(const Feeder& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const AcOptions& options = {});

/// Per-pair gap between the linearized model and the AC solution, in squared
/// voltage magnitude units.
struct ModelCompareReport {
    std::vector<std::pair<int, Phase>> mask;
    Eigen::VectorXd v_linear;
    Eigen::VectorXd v_ac;
    Eigen::VectorXd abs_error;
    double max_abs_error = 0.0;
    double mean_abs_error = 0.0;

    std::string to_json(const Feeder& feeder) const;
};

ModelCompareReport compare_models(const Feeder& feeder, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& q, const AcOptions& options = {});

}  // namespace vg
