#include "control.hpp"

#include <algorithm>
#include <cmath>

namespace vg {

const char* rule_name(Rule r) {
    switch (r) {
        case Rule::Unconstrained: return "unconstrained";
        case Rule::Projected: return "projected";
        case Rule::Pgd: return "pgd";
        case Rule::Dpgd: return "dpgd";
        case Rule::Apgd: return "apgd";
        case Rule::Ieee1547: return "ieee1547";
    }
    return "?";
}

Rule rule_from_name(const std::string& name) {
    for (Rule r : {Rule::Unconstrained, Rule::Projected, Rule::Pgd, Rule::Dpgd, Rule::Apgd,
                   Rule::Ieee1547})
        if (name == rule_name(r)) return r;
    throw ConfigError("unknown control rule '" + name + "'");
}

double MuPolicy::resolve(const EigenSummary& eig) const {
    double mu = 0.0;
    switch (bound) {
        case MuBoundKind::Explicit: mu = explicit_value; break;
        case MuBoundKind::Prop3: mu = fraction * eig.prop3_bound; break;
        case MuBoundKind::Lmax: mu = fraction * eig.lmax_bound; break;
        case MuBoundKind::Prop6: mu = fraction * eig.prop6_bound; break;
    }
    if (!(mu > 0.0)) throw ConfigError("step size resolved to a non-positive value");
    return mu;
}

double DroopCurve::eval(double deviation) const {
    if (points.empty()) throw ConfigError("droop curve has no breakpoints");
    if (deviation <= points.front().first) return points.front().second;
    if (deviation >= points.back().first) return points.back().second;
    for (std::size_t k = 1; k < points.size(); ++k) {
        if (deviation <= points[k].first) {
            const auto& [u0, q0] = points[k - 1];
            const auto& [u1, q1] = points[k];
            if (u1 == u0) return q1;
            return q0 + (q1 - q0) * (deviation - u0) / (u1 - u0);
        }
    }
    return points.back().second;
}

DroopCurve DroopCurve::deadband_shape(double deadband, double slope, double q_limit) {
    if (deadband < 0.0 || slope <= 0.0 || q_limit < 0.0)
        throw ConfigError("droop shape needs deadband >= 0, slope > 0, q_limit >= 0");
    DroopCurve c;
    if (q_limit == 0.0) {
        c.points = {{-deadband, 0.0}, {deadband, 0.0}};
        return c;
    }
    const double knee = deadband + q_limit / slope;
    c.points = {{-knee, -q_limit}, {-deadband, 0.0}, {deadband, 0.0}, {knee, q_limit}};
    return c;
}

LinearPlant::LinearPlant(const GridMatrices& mats, const Eigen::VectorXd& p_net,
                         const Eigen::VectorXd& q_fixed, double v0_squared)
    : x_(mats.X), v0sq_(v0_squared) {
    if (p_net.size() != mats.dim() || q_fixed.size() != mats.dim())
        throw ConfigError("linear plant: injection vectors do not match the model dimension");
    base_ = mats.R * p_net + mats.X * q_fixed +
            Eigen::VectorXd::Constant(mats.dim(), v0_squared);
}

Eigen::VectorXd LinearPlant::voltages(const Eigen::VectorXd& q_ctrl) const {
    if (q_ctrl.size() != x_.rows())
        throw ConfigError("linear plant: control vector does not match the model dimension");
    return base_ + x_ * q_ctrl;
}

Eigen::VectorXd capability_limits(const Feeder& feeder,
                                  const std::vector<std::pair<int, Phase>>& mask) {
    Eigen::VectorXd qbar = Eigen::VectorXd::Zero(mask.size());
    for (std::size_t k = 0; k < mask.size(); ++k) {
        const auto& pv = feeder.buses[mask[k].first].pv[static_cast<int>(mask[k].second)];
        if (!pv) continue;
        if (pv->p_gen > pv->capacity_s)
            throw ValidationError("bus '" + feeder.buses[mask[k].first].id +
                                  "': pv active injection exceeds apparent capacity");
        qbar(k) = pv->q_limit();
    }
    return qbar;
}

Eigen::VectorXd compensation_costs(const Feeder& feeder,
                                   const std::vector<std::pair<int, Phase>>& mask) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(mask.size());
    for (std::size_t k = 0; k < mask.size(); ++k) {
        const auto& pv = feeder.buses[mask[k].first].pv[static_cast<int>(mask[k].second)];
        if (pv) c(k) = pv->cost_c;
    }
    return c;
}

ClosedForm closed_form_qstar(const GridMatrices& mats, const Eigen::VectorXd& p) {
    if (mats.multiphase)
        throw ConfigError("closed-form minimizer: single-phase model required");
    if (p.size() != mats.dim())
        throw ValidationError("closed-form minimizer: p does not match the model dimension");

    ClosedForm out;
    out.q_direct = -mats.X.llt().solve(mats.R * p);

    // flow route with per-line flows measured at the receiving end (-P of the
    // sending-end convention); with sending-end flows the two routes differ
    // by an overall sign and could not both regulate v to v0
    const Eigen::VectorXd recv_flows = mats.F.transpose() * p;
    out.q_flow = mats.inc.A.transpose() * mats.r.cwiseQuotient(mats.x).asDiagonal() * recv_flows;

    const double gap = (out.q_direct - out.q_flow).cwiseAbs().maxCoeff();
    if (gap > 1e-10)
        throw NumericError("closed-form minimizer: algebraic routes disagree by " +
                           std::to_string(gap));
    return out;
}

double prox_scalar(double y, double mu, double c, double qbar) {
    if (!(mu > 0.0) || c < 0.0 || qbar < 0.0)
        throw ValidationError("prox: need mu > 0, c >= 0, qbar >= 0");
    const double threshold = mu * c;
    double w = 0.0;
    if (y > threshold)
        w = y - threshold;
    else if (y < -threshold)
        w = y + threshold;
    return std::clamp(w, -qbar, qbar);
}

double beta_schedule(int t, std::optional<int> restart_every) {
    if (t < 1) throw StateError("beta schedule is defined for t >= 1");
    int tw = t;
    if (restart_every && *restart_every > 0) tw = (t - 1) % *restart_every + 1;
    return static_cast<double>(tw - 1) / static_cast<double>(tw + 2);
}

ControlState init_state(const Plant& plant, const Eigen::VectorXd& q0) {
    ControlState s;
    s.q = q0;
    s.v = plant.voltages(q0);
    return s;
}

ControlState step(const ControlState& state, const Plant& plant, const GridMatrices& mats,
                  const ControlConfig& config) {
    const int dim = mats.dim();
    if (state.q.size() != dim || state.v.size() != dim)
        throw StateError("control state does not match the model dimension");

    const bool needs_limits = config.rule != Rule::Unconstrained && config.rule != Rule::Ieee1547;
    if (needs_limits && (config.q_limit.size() != dim || config.cost.size() != dim))
        throw ConfigError("control config: cost and q_limit must match the model dimension");

    const double mu = config.mu.resolve(mats.eig);
    const double v0sq = plant.v0_squared();
    const Eigen::VectorXd dv = state.v.array() - v0sq;
    const int t_now = state.t + 1;  // index of the update being taken

    ControlState next;
    next.t = t_now;
    next.q.resize(dim);

    switch (config.rule) {
        case Rule::Unconstrained: {
            next.q = state.q - mu * dv;
            break;
        }
        case Rule::Projected: {
            next.q = (state.q - mu * dv).cwiseMax(-config.q_limit).cwiseMin(config.q_limit);
            break;
        }
        case Rule::Pgd: {
            const Eigen::VectorXd y = state.q - mu * dv;
            for (int i = 0; i < dim; ++i)
                next.q(i) = prox_scalar(y(i), mu, config.cost(i), config.q_limit(i));
            break;
        }
        case Rule::Dpgd: {
            Eigen::VectorXd d = config.d_scale;
            if (d.size() == 0) d = mats.X.diagonal().cwiseInverse();
            if (d.size() != dim || d.minCoeff() <= 0.0)
                throw ConfigError("dpgd: scaling vector must be positive and match the dimension");
            const Eigen::VectorXd u = state.q - mu * d.cwiseProduct(dv);
            // per-bus minimizer of d c |q| + (1/(2 mu)) (q - u)^2 over the box
            for (int i = 0; i < dim; ++i)
                next.q(i) = prox_scalar(u(i), mu, d(i) * config.cost(i), config.q_limit(i));
            break;
        }
        case Rule::Apgd: {
            const Eigen::VectorXd y = state.q - mu * dv;
            next.beta = beta_schedule(t_now, config.restart_every
                                                 ? config.restart_every
                                                 : std::optional<int>(static_cast<int>(
                                                       std::ceil(2.0 * std::sqrt(mats.eig.kappa)))));
            Eigen::VectorXd y_tilde;
            if (t_now == 1 || next.beta == 0.0) {
                y_tilde = y;
            } else {
                if (state.y_prev.size() != dim)
                    throw StateError("apgd: previous-iterate memory is not initialized");
                y_tilde = (1.0 + next.beta) * y - next.beta * state.y_prev;
            }
            for (int i = 0; i < dim; ++i)
                next.q(i) = prox_scalar(y_tilde(i), mu, config.cost(i), config.q_limit(i));
            next.y_prev = y;
            break;
        }
        case Rule::Ieee1547: {
            if (config.droop.size() != static_cast<std::size_t>(dim))
                throw ConfigError("ieee1547: one droop curve per controlled entry is required");
            for (int i = 0; i < dim; ++i) next.q(i) = config.droop[i].eval(-dv(i));
            break;
        }
    }

    if (config.rule != Rule::Apgd) next.y_prev = state.y_prev;

    const Eigen::VectorXd dq = next.q - state.q;
    next.dq_inf = dq.cwiseAbs().maxCoeff();
    next.dq_norm2 = dq.norm();
    next.contraction = (state.t >= 1 && state.dq_norm2 > 0.0) ? next.dq_norm2 / state.dq_norm2 : 0.0;
    next.converged = next.dq_inf < config.tol;
    next.v = plant.voltages(next.q);
    return next;
}

double f2_rotated(const GridMatrices& mats, const Eigen::VectorXd& v, double v0_squared) {
    if (mats.multiphase)
        throw ConfigError("rotated-norm cost: single-phase model required");
    const Eigen::VectorXd u = v.array() - v0_squared;
    return 0.5 * u.dot(mats.X.llt().solve(u));
}

double f2_by_lines(const Feeder& feeder, const GridMatrices& mats, const Eigen::VectorXd& v,
                   double v0_squared) {
    double acc = 0.0;
    for (int bus = 1; bus <= feeder.n_buses(); ++bus) {
        const Line& line = feeder.line_to(bus);
        const int parent = line.from;
        for (int ph = 0; ph < 3; ++ph) {
            if (!has_phase(line.phases, ph)) continue;
            const int ci = mats.index_of(bus, static_cast<Phase>(ph));
            if (ci < 0) continue;
            const double v_child = v(ci);
            double v_parent = v0_squared;
            if (parent != 0) {
                const int cp = mats.index_of(parent, static_cast<Phase>(ph));
                if (cp < 0) throw StateError("parent bus does not serve a child phase");
                v_parent = v(cp);
            }
            const double drop = v_parent - v_child;
            acc += drop * drop / line.z(ph, ph).imag();
        }
    }
    return 0.25 * acc;
}

double c2_cost(const Eigen::VectorXd& cost, const Eigen::VectorXd& q) {
    return cost.dot(q.cwiseAbs());
}


}  // namespace vg
