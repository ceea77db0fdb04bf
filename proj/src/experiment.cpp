#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace vg {

using nlohmann::json;

namespace {

ModelKind model_from_name(const std::string& s) {
    if (s == "single_phase") return ModelKind::SinglePhase;
    if (s == "multiphase") return ModelKind::Multiphase;
    throw ParseError("model: expected 'single_phase' or 'multiphase', got '" + s + "'");
}

PlantKind plant_from_name(const std::string& s) {
    if (s == "linear") return PlantKind::Linear;
    if (s == "ac") return PlantKind::Ac;
    throw ParseError("plant: expected 'linear' or 'ac', got '" + s + "'");
}

MuBoundKind bound_from_name(const std::string& s) {
    if (s == "prop3") return MuBoundKind::Prop3;
    if (s == "lmax") return MuBoundKind::Lmax;
    if (s == "prop6") return MuBoundKind::Prop6;
    throw ParseError("mu_bound: expected prop3 | lmax | prop6, got '" + s + "'");
}

/// Default step-size policy per rule when the scenario does not pin one.
MuPolicy default_mu_policy(Rule rule, ModelKind model) {
    MuPolicy mu;
    if (rule == Rule::Unconstrained) {
        mu.bound = model == ModelKind::Multiphase ? MuBoundKind::Prop6 : MuBoundKind::Prop3;
        mu.fraction = 0.99;
    } else if (model == ModelKind::Multiphase) {
        mu.bound = MuBoundKind::Prop6;
        mu.fraction = 0.99;
    } else {
        mu.bound = MuBoundKind::Lmax;
        mu.fraction = 1.0;
    }
    return mu;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Working set for one topology epoch of one rule run.
struct Epoch {
    Feeder feeder;
    GridMatrices mats;
    Eigen::VectorXd p_net, q_load, qbar, cost;
    std::unique_ptr<Plant> plant;  // self-contained; survives Epoch moves
    double v0sq = 0.0;
    double h2_reference = 0.0;
};

Eigen::VectorXd net_active(const Feeder& f, const std::vector<std::pair<int, Phase>>& mask) {
    Eigen::VectorXd p(mask.size());
    for (std::size_t k = 0; k < mask.size(); ++k) {
        const Bus& b = f.buses[mask[k].first];
        const int ph = static_cast<int>(mask[k].second);
        p(k) = (b.pv[ph] ? b.pv[ph]->p_gen : 0.0) - b.load_p[ph];
    }
    return p;
}

Eigen::VectorXd reactive_load(const Feeder& f, const std::vector<std::pair<int, Phase>>& mask) {
    Eigen::VectorXd q(mask.size());
    for (std::size_t k = 0; k < mask.size(); ++k)
        q(k) = -f.buses[mask[k].first].load_q[static_cast<int>(mask[k].second)];
    return q;
}

Epoch make_epoch(const Feeder& feeder, ModelKind model, PlantKind plant_kind,
                 bool with_reference) {
    Epoch e;
    e.feeder = model == ModelKind::SinglePhase && !is_single_phase(feeder) ? to_single_phase(feeder)
                                                                           : feeder;
    e.mats = model == ModelKind::SinglePhase ? build_single_phase(e.feeder)
                                             : build_multiphase(e.feeder);
    e.p_net = net_active(e.feeder, e.mats.mask);
    e.q_load = reactive_load(e.feeder, e.mats.mask);
    e.qbar = capability_limits(e.feeder, e.mats.mask);
    e.cost = compensation_costs(e.feeder, e.mats.mask);
    e.v0sq = e.feeder.v0_squared;
    if (plant_kind == PlantKind::Ac)
        e.plant = std::make_unique<AcPlant>(e.feeder, e.p_net, e.q_load);
    else
        e.plant = std::make_unique<LinearPlant>(e.mats, e.p_net, e.q_load, e.v0sq);
    if (with_reference) {
        // the AC solver's own tolerance bounds how tightly the reference
        // equilibrium can be pinned down
        const double ref_tol = plant_kind == PlantKind::Ac ? 1e-8 : 1e-12;
        e.h2_reference =
            best_known_optimum(e.feeder, e.mats, *e.plant, e.cost, e.qbar, ref_tol).h2;
    }
    return e;
}

ControlConfig make_config(const RuleSpec& spec, const Epoch& epoch, double scenario_tol,
                          int horizon) {
    ControlConfig cfg;
    cfg.rule = spec.rule;
    cfg.mu = spec.mu;
    cfg.restart_every = spec.restart_every;
    cfg.cost = epoch.cost;
    cfg.q_limit = epoch.qbar;
    cfg.tol = spec.tol.value_or(scenario_tol);
    cfg.max_iter = horizon;
    if (spec.rule == Rule::Ieee1547) {
        const double mu = spec.mu.resolve(epoch.mats.eig);
        const double slope = spec.droop_slope.value_or(1.0 / mu);
        cfg.droop.reserve(epoch.mats.dim());
        for (int i = 0; i < epoch.mats.dim(); ++i)
            cfg.droop.push_back(DroopCurve::deadband_shape(mu * epoch.cost(i), slope, epoch.qbar(i)));
    }
    return cfg;
}

/// Carry a per-pair vector from one topology epoch to the next via external
/// bus ids; pairs absent in the new epoch are dropped, new pairs start at 0.
Eigen::VectorXd remap_vector(const Eigen::VectorXd& values, const Epoch& from, const Epoch& to) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(to.mats.dim());
    for (int k = 0; k < to.mats.dim(); ++k) {
        const auto [bus, phase] = to.mats.mask[k];
        const std::string& id = to.feeder.buses[bus].id;
        auto it = from.feeder.bus_index.find(id);
        if (it == from.feeder.bus_index.end()) continue;
        const int old_idx = from.mats.index_of(it->second, phase);
        if (old_idx >= 0) out(k) = values(old_idx);
    }
    return out;
}

}  // namespace

double clear_day_factor(double hour) {
    if (hour <= 6.0 || hour >= 18.0) return 0.0;
    return std::sin(M_PI * (hour - 6.0) / 12.0);
}

Feeder prepare_feeder(const Scenario& scenario) {
    Feeder f = scenario.feeder;
    if (scenario.v0_squared) f.v0_squared = *scenario.v0_squared;
    double gen_scale = scenario.pv_scale;
    if (scenario.pv_hour) gen_scale *= clear_day_factor(*scenario.pv_hour);
    for (Bus& b : f.buses) {
        for (int ph = 0; ph < 3; ++ph) {
            b.load_p[ph] *= scenario.load_scale;
            b.load_q[ph] *= scenario.load_scale;
            if (b.pv[ph]) b.pv[ph]->p_gen = std::min(b.pv[ph]->p_gen * gen_scale, b.pv[ph]->capacity_s);
        }
    }
    if (scenario.model == ModelKind::SinglePhase && !is_single_phase(f)) f = to_single_phase(f);
    return f;
}

Scenario parse_scenario(const std::string& json_text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("scenario: top level must be an object");

    Scenario s;
    s.name = doc.value("name", std::string("scenario"));
    if (!doc.contains("feeder")) throw ParseError("scenario: missing 'feeder'");
    if (doc["feeder"].is_string()) {
        std::filesystem::path p = doc["feeder"].get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        s.feeder = load_feeder(p.string());
    } else if (doc["feeder"].is_object()) {
        s.feeder = parse_feeder(doc["feeder"].dump());
    } else {
        throw ParseError("scenario: 'feeder' must be a path or an inline object");
    }
    s.model = model_from_name(doc.value("model", std::string("single_phase")));
    s.plant = plant_from_name(doc.value("plant", std::string("linear")));
    s.horizon = doc.value("horizon", 500);
    if (s.horizon < 1) throw ValidationError("scenario: horizon must be >= 1");
    s.load_scale = doc.value("load_scale", 1.0);
    s.pv_scale = doc.value("pv_scale", 1.0);
    if (s.load_scale < 0.0 || s.pv_scale < 0.0)
        throw ValidationError("scenario: scales must be non-negative");
    if (doc.contains("v0_squared")) s.v0_squared = doc["v0_squared"].get<double>();
    if (doc.contains("pv_hour")) s.pv_hour = doc["pv_hour"].get<double>();
    s.tol = doc.value("tol", 1e-8);
    s.seed = doc.value("seed", 0u);

    if (!doc.contains("rules") || !doc["rules"].is_array() || doc["rules"].empty())
        throw ParseError("scenario: 'rules' must be a non-empty array");
    for (const json& jr : doc["rules"]) {
        RuleSpec spec;
        if (!jr.contains("rule") || !jr["rule"].is_string())
            throw ParseError("scenario rule: missing 'rule' name");
        spec.rule = rule_from_name(jr["rule"].get<std::string>());
        spec.label = jr.value("label", std::string(rule_name(spec.rule)));
        spec.mu = default_mu_policy(spec.rule, s.model);
        if (jr.contains("mu")) {
            spec.mu.bound = MuBoundKind::Explicit;
            spec.mu.explicit_value = jr["mu"].get<double>();
        }
        if (jr.contains("mu_bound")) spec.mu.bound = bound_from_name(jr["mu_bound"].get<std::string>());
        if (jr.contains("mu_fraction")) spec.mu.fraction = jr["mu_fraction"].get<double>();
        if (jr.contains("restart")) {
            if (jr["restart"].is_string()) {
                if (jr["restart"].get<std::string>() != "off")
                    throw ParseError("scenario rule: restart must be an integer or 'off'");
                spec.restart_every = 0;
            } else {
                spec.restart_every = jr["restart"].get<int>();
            }
        }
        if (jr.contains("tol")) spec.tol = jr["tol"].get<double>();
        if (jr.contains("droop_slope")) spec.droop_slope = jr["droop_slope"].get<double>();
        s.rules.push_back(std::move(spec));
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), std::filesystem::path(path).parent_path().string());
}

AcPlant::AcPlant(Feeder feeder, Eigen::VectorXd p_net, Eigen::VectorXd q_fixed)
    : feeder_(std::move(feeder)), p_net_(std::move(p_net)), q_fixed_(std::move(q_fixed)) {}

Eigen::VectorXd AcPlant::voltages(const Eigen::VectorXd& q_ctrl) const {
    return solve_ac(feeder_, p_net_, q_fixed_ + q_ctrl).v_squared;
}

Optimum best_known_optimum(const Feeder& feeder, const GridMatrices& mats, const Plant& plant,
                           const Eigen::VectorXd& cost, const Eigen::VectorXd& q_limit,
                           double tol) {
    ControlConfig cfg;
    cfg.rule = Rule::Pgd;
    cfg.mu.bound = mats.multiphase ? MuBoundKind::Prop6 : MuBoundKind::Lmax;
    cfg.mu.fraction = mats.multiphase ? 0.99 : 1.0;
    cfg.cost = cost;
    cfg.q_limit = q_limit;
    cfg.tol = tol;
    constexpr int kMaxIter = 1'000'000;

    ControlState state = init_state(plant, Eigen::VectorXd::Zero(mats.dim()));
    for (int t = 0; t < kMaxIter && !state.converged; ++t) state = step(state, plant, mats, cfg);
    if (!state.converged)
        throw NumericError("optimum oracle: no convergence within 1e6 proximal iterations");

    Optimum opt;
    opt.q = state.q;
    opt.h2 = f2_by_lines(feeder, mats, state.v, plant.v0_squared()) + c2_cost(cost, state.q);
    opt.iterations = state.t;
    return opt;
}

RunResult run_scenario(const Scenario& scenario) {
    RunResult result;
    const Feeder base = prepare_feeder(scenario);

    std::vector<SwitchEvent> events = base.events;
    std::sort(events.begin(), events.end(),
              [](const SwitchEvent& a, const SwitchEvent& b) { return a.at_iteration < b.at_iteration; });

    try {
        std::optional<double> initial_reference;

        int pgd_iterations = -1;
        for (const RuleSpec& spec : scenario.rules) {
            const auto t_start = std::chrono::steady_clock::now();

            Epoch epoch =
                make_epoch(base, scenario.model, scenario.plant, !initial_reference.has_value());
            if (initial_reference)
                epoch.h2_reference = *initial_reference;
            else
                initial_reference = epoch.h2_reference;
            result.h2_reference = *initial_reference;
            auto plant = [&]() -> const Plant& { return *epoch.plant; };

            ControlConfig cfg = make_config(spec, epoch, scenario.tol, scenario.horizon);
            const double mu_resolved = cfg.mu.resolve(epoch.mats.eig);
            ControlState state = init_state(plant(), Eigen::VectorXd::Zero(epoch.mats.dim()));

            std::vector<double> rel_err_series;
            auto emit = [&](const ControlState& st) {
                const double f2 = f2_by_lines(epoch.feeder, epoch.mats, st.v, epoch.v0sq);
                const double c2 = c2_cost(epoch.cost, st.q);
                const double h2 = f2 + c2;
                const double denom = std::max(std::abs(epoch.h2_reference), 1e-12);
                const double rel = (h2 - epoch.h2_reference) / denom;
                rel_err_series.push_back(rel);
                for (int k = 0; k < epoch.mats.dim(); ++k) {
                    TraceRecord rec;
                    rec.scenario = scenario.name;
                    rec.rule = spec.label;
                    rec.t = st.t;
                    rec.bus = epoch.feeder.buses[epoch.mats.mask[k].first].id;
                    rec.phase = phase_letter(epoch.mats.mask[k].second);
                    rec.v = st.v(k);
                    rec.q = st.q(k);
                    rec.f2 = f2;
                    rec.c2 = c2;
                    rec.h2 = h2;
                    rec.rel_err = rel;
                    rec.contraction = st.contraction;
                    result.trace.push_back(std::move(rec));
                }
            };
            emit(state);

            std::size_t next_event = 0;
            while (state.t < scenario.horizon) {
                // events fire once the given number of control periods completed
                while (next_event < events.size() && events[next_event].at_iteration <= state.t) {
                    Epoch rebuilt = make_epoch(apply_switch_event(epoch.feeder, events[next_event]),
                                               scenario.model, scenario.plant, true);
                    ControlState carried;
                    carried.t = state.t;
                    carried.beta = state.beta;
                    carried.q = remap_vector(state.q, epoch, rebuilt)
                                    .cwiseMax(-rebuilt.qbar)
                                    .cwiseMin(rebuilt.qbar);
                    if (state.y_prev.size() > 0)
                        carried.y_prev = remap_vector(state.y_prev, epoch, rebuilt);
                    epoch = std::move(rebuilt);
                    cfg = make_config(spec, epoch, scenario.tol, scenario.horizon);
                    carried.v = plant().voltages(carried.q);
                    state = std::move(carried);
                    ++next_event;
                }
                state = step(state, plant(), epoch.mats, cfg);
                emit(state);
                // stop on convergence only once no reconfiguration is pending
                if (state.converged && next_event >= events.size()) break;
            }

            RuleOutcome out;
            out.label = spec.label;
            out.rule = spec.rule;
            out.mu = mu_resolved;
            out.converged = state.converged;
            out.iterations = state.t;
            out.final_rel_err = rel_err_series.back();
            out.final_dq_inf = state.dq_inf;
            out.h2_final = f2_by_lines(epoch.feeder, epoch.mats, state.v, epoch.v0sq) +
                           c2_cost(epoch.cost, state.q);
            // last index after which |rel_err| stays below the threshold
            int itc = -1;
            for (int t = static_cast<int>(rel_err_series.size()) - 1; t >= 0; --t) {
                if (std::abs(rel_err_series[t]) >= kConvergenceRelErr) break;
                itc = t;
            }
            out.iterations_to_convergence = itc;
            // Residual of the underlying proximal fixed-point map; momentum is
            // excluded so APGD is measured against the same equilibrium as PGD.
            ControlConfig residual_cfg = cfg;
            if (residual_cfg.rule == Rule::Apgd) residual_cfg.rule = Rule::Pgd;
            out.fixed_point_residual = step(state, plant(), epoch.mats, residual_cfg).dq_inf;
            try {
                out.linear_vs_ac_error =
                    compare_models(epoch.feeder, epoch.p_net, epoch.q_load + state.q).max_abs_error;
            } catch (const Error&) {
                out.linear_vs_ac_error = std::numeric_limits<double>::quiet_NaN();
            }
            out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                    t_start)
                              .count();
            result.rules.push_back(std::move(out));
            if (spec.rule == Rule::Pgd && pgd_iterations < 0)
                pgd_iterations = result.rules.back().iterations_to_convergence;
        }

        for (RuleOutcome& out : result.rules) {
            if (pgd_iterations > 0 && out.iterations_to_convergence > 0)
                out.speedup_vs_pgd =
                    static_cast<double>(pgd_iterations) / out.iterations_to_convergence;
            if (!std::isnan(out.linear_vs_ac_error))
                result.max_linear_vs_ac_error =
                    std::max(result.max_linear_vs_ac_error, out.linear_vs_ac_error);
        }
    } catch (const Error& e) {
        result.aborted = true;
        result.error = e.what();
        result.error_status = e.status();
    }
    return result;
}

std::string trace_to_csv(const std::vector<TraceRecord>& trace) {
    std::ostringstream out;
    out << "scenario,rule,t,bus,phase,v,q,f2,c2,h2,rel_err,contraction\n";
    for (const TraceRecord& r : trace) {
        out << r.scenario << ',' << r.rule << ',' << r.t << ',' << r.bus << ',' << r.phase << ','
            << format_double(r.v) << ',' << format_double(r.q) << ',' << format_double(r.f2) << ','
            << format_double(r.c2) << ',' << format_double(r.h2) << ','
            << format_double(r.rel_err) << ',' << format_double(r.contraction) << '\n';
    }
    return out.str();
}

std::string summary_to_json(const Scenario& scenario, const RunResult& result) {
    json doc;
    doc["scenario"] = scenario.name;
    doc["model"] = scenario.model == ModelKind::SinglePhase ? "single_phase" : "multiphase";
    doc["plant"] = scenario.plant == PlantKind::Linear ? "linear" : "ac";
    doc["h2_reference"] = result.h2_reference;
    doc["max_linear_vs_ac_error"] = result.max_linear_vs_ac_error;
    if (result.aborted) doc["error"] = result.error;
    json rules = json::array();
    for (const RuleOutcome& r : result.rules) {
        rules.push_back({{"label", r.label},
                         {"rule", rule_name(r.rule)},
                         {"mu", r.mu},
                         {"converged", r.converged},
                         {"iterations", r.iterations},
                         {"iterations_to_convergence", r.iterations_to_convergence},
                         {"final_rel_err", r.final_rel_err},
                         {"final_dq_inf", r.final_dq_inf},
                         {"fixed_point_residual", r.fixed_point_residual},
                         {"h2_final", r.h2_final},
                         {"linear_vs_ac_error", r.linear_vs_ac_error},
                         {"speedup_vs_pgd", r.speedup_vs_pgd},
                         {"wall_ms", r.wall_ms}});
    }
    doc["rules"] = std::move(rules);
    return doc.dump(2);
}

std::vector<ProbeRow> divergence_probe(const Feeder& feeder, const GridMatrices& mats,
                                       const std::vector<double>& multipliers, int horizon,
                                       double tol) {
    const Eigen::VectorXd p = net_active(feeder, mats.mask);
    const Eigen::VectorXd q_load = reactive_load(feeder, mats.mask);
    const Eigen::VectorXd qbar = capability_limits(feeder, mats.mask);
    const Eigen::VectorXd cost = compensation_costs(feeder, mats.mask);
    const LinearPlant plant(mats, p, q_load, feeder.v0_squared);

    std::vector<ProbeRow> rows;
    for (double m : multipliers) {
        ControlConfig cfg;
        cfg.rule = Rule::Pgd;
        cfg.mu.bound = MuBoundKind::Explicit;
        cfg.mu.explicit_value = m * mats.eig.prop6_bound;
        cfg.cost = cost;
        cfg.q_limit = qbar;
        cfg.tol = tol;

        ControlState state = init_state(plant, Eigen::VectorXd::Zero(mats.dim()));
        std::vector<double> dq;
        dq.reserve(horizon);
        bool capped = false;
        while (state.t < horizon) {
            state = step(state, plant, mats, cfg);
            dq.push_back(state.dq_inf);
            if (state.q.cwiseAbs().maxCoeff() > 1e6) {
                capped = true;
                break;
            }
            if (state.converged) break;
        }

        ProbeRow row;
        row.multiplier = m;
        row.mu = cfg.mu.explicit_value;
        row.final_dq_inf = dq.empty() ? 0.0 : dq.back();
        row.iterations = state.t;
        if (capped) {
            row.outcome = "diverged";
        } else if (state.converged) {
            row.outcome = "converged";
        } else {
            const int n = static_cast<int>(dq.size());
            const int win = std::min(100, n / 2);
            if (win < 1) {
                row.outcome = "oscillating";
            } else {
                double tail = 0.0, prev = 0.0, peak = 0.0;
                for (int i = n - win; i < n; ++i) tail += dq[i];
                for (int i = n - 2 * win; i < n - win; ++i) prev += dq[i];
                tail /= win;
                prev /= win;
                for (double d : dq) peak = std::max(peak, d);
                // growing trend, or sustained near-peak oscillation amplitude
                if (tail > 1.02 * prev || (tail > 0.5 * peak && tail > 1e3 * tol))
                    row.outcome = "diverged";
                else
                    row.outcome = "oscillating";
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string probe_to_json(const std::vector<ProbeRow>& rows) {
    json arr = json::array();
    for (const ProbeRow& r : rows)
        arr.push_back({{"multiplier", r.multiplier},
                       {"mu", r.mu},
                       {"outcome", r.outcome},
                       {"final_dq_inf", r.final_dq_inf},
                       {"iterations", r.iterations}});
    return json{{"probe", arr}}.dump(2);
}

}  // namespace vg
