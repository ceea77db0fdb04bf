#include "voltgrid.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "ac_oracle.hpp"
#include "control.hpp"
#include "experiment.hpp"
#include "feeder.hpp"
#include "lindistflow.hpp"

namespace {

thread_local std::string g_last_error;

vg_status fail(vg::Status status, const std::string& msg) {
    g_last_error = msg;
    return static_cast<vg_status>(status);
}

template <typename Fn>
vg_status guarded(Fn&& fn) {
    try {
        fn();
        return VG_OK;
    } catch (const vg::Error& e) {
        return fail(e.status(), e.what());
    } catch (const std::exception& e) {
        return fail(vg::Status::Numeric, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

struct vg_feeder {
    vg::Feeder feeder;
};

struct vg_model {
    vg::Feeder feeder;  // the feeder the matrices were built from (post conversion)
    vg::GridMatrices mats;
};

extern "C" {

const char* vg_version(void) { return "0.1.0"; }

const char* vg_last_error(void) { return g_last_error.c_str(); }

void vg_string_free(char* s) { delete[] s; }

vg_status vg_feeder_load(const char* path, vg_feeder** out) {
    if (!path || !out) return fail(vg::Status::Config, "null argument");
    return guarded([&] { *out = new vg_feeder{vg::load_feeder(path)}; });
}

vg_status vg_feeder_parse(const char* json_text, vg_feeder** out) {
    if (!json_text || !out) return fail(vg::Status::Config, "null argument");
    return guarded([&] { *out = new vg_feeder{vg::parse_feeder(json_text)}; });
}

void vg_feeder_free(vg_feeder* feeder) { delete feeder; }

int vg_feeder_bus_count(const vg_feeder* feeder) {
    return feeder ? feeder->feeder.n_buses() : -1;
}

int vg_feeder_bus_index(const vg_feeder* feeder, const char* id) {
    if (!feeder || !id) return -1;
    auto it = feeder->feeder.bus_index.find(id);
    return it == feeder->feeder.bus_index.end() ? -1 : it->second;
}

vg_status vg_feeder_apply_event(const vg_feeder* feeder, const char* open_line,
                                const char* close_line, vg_feeder** out) {
    if (!feeder || !out) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        vg::SwitchEvent ev;
        if (open_line) ev.open_line = std::string(open_line);
        if (close_line) ev.close_line = std::string(close_line);
        *out = new vg_feeder{vg::apply_switch_event(feeder->feeder, ev)};
    });
}

vg_status vg_model_build(const vg_feeder* feeder, vg_model_kind kind, vg_model** out) {
    if (!feeder || !out) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        auto model = std::make_unique<vg_model>();
        if (kind == VG_MODEL_SINGLE_PHASE) {
            model->feeder = vg::is_single_phase(feeder->feeder) ? feeder->feeder
                                                                : vg::to_single_phase(feeder->feeder);
            model->mats = vg::build_single_phase(model->feeder);
        } else {
            model->feeder = feeder->feeder;
            model->mats = vg::build_multiphase(model->feeder);
        }
        *out = model.release();
    });
}

void vg_model_free(vg_model* model) { delete model; }

int vg_model_dim(const vg_model* model) { return model ? model->mats.dim() : -1; }

int vg_model_bus_count(const vg_model* model) { return model ? model->mats.n_buses : -1; }

vg_status vg_model_matrix(const vg_model* model, const char* name, double* buf, size_t buflen) {
    if (!model || !name || !buf) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        const Eigen::MatrixXd* m = nullptr;
        const std::string which = name;
        if (which == "R") m = &model->mats.R;
        else if (which == "X") m = &model->mats.X;
        else if (which == "Xx") m = &model->mats.Xx;
        else if (which == "Xr") m = &model->mats.Xr;
        else if (which == "F") m = &model->mats.F;
        else if (which == "A") m = &model->mats.inc.A;
        else throw vg::ConfigError("unknown matrix name '" + which + "'");
        if (m->size() == 0) throw vg::StateError("matrix '" + which + "' is not populated for this model kind");
        if (buflen < static_cast<size_t>(m->size()))
            throw vg::ConfigError("buffer too small for matrix '" + which + "'");
        for (Eigen::Index i = 0; i < m->rows(); ++i)
            for (Eigen::Index j = 0; j < m->cols(); ++j) buf[i * m->cols() + j] = (*m)(i, j);
    });
}

vg_status vg_model_eigs(const vg_model* model, vg_eigs* out) {
    if (!model || !out) return fail(vg::Status::Config, "null argument");
    const vg::EigenSummary& e = model->mats.eig;
    out->lambda_min = e.lambda_min;
    out->lambda_max = e.lambda_max;
    out->kappa = e.kappa;
    out->lambda_max_xtx = e.lambda_max_xtx;
    out->prop3_bound = e.prop3_bound;
    out->lmax_bound = e.lmax_bound;
    out->prop5_bound = e.prop5_bound;
    out->prop6_bound = e.prop6_bound;
    return VG_OK;
}

vg_status vg_model_dump_json(const vg_model* model, char** out_json) {
    if (!model || !out_json) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        const vg::GridMatrices& m = model->mats;
        nlohmann::json doc;
        doc["model"] = m.multiphase ? "multiphase" : "single_phase";
        doc["n_buses"] = m.n_buses;
        doc["dim"] = m.dim();
        nlohmann::json mask = nlohmann::json::array();
        for (const auto& [bus, phase] : m.mask)
            mask.push_back({{"bus", model->feeder.buses[bus].id},
                            {"index", bus},
                            {"phase", std::string(1, vg::phase_letter(phase))}});
        doc["phase_mask"] = std::move(mask);
        doc["F"] = matrix_to_json(m.F);
        doc["R"] = matrix_to_json(m.R);
        doc["X"] = matrix_to_json(m.X);
        if (m.multiphase) {
            doc["Xx"] = matrix_to_json(m.Xx);
            doc["Xr"] = matrix_to_json(m.Xr);
        }
        doc["eig"] = {{"lambda_min", m.eig.lambda_min},
                      {"lambda_max", m.eig.lambda_max},
                      {"kappa", m.eig.kappa},
                      {"lambda_max_xtx", m.eig.lambda_max_xtx},
                      {"prop3_bound", m.eig.prop3_bound},
                      {"lmax_bound", m.eig.lmax_bound},
                      {"prop5_bound", m.eig.prop5_bound},
                      {"prop6_bound", m.eig.prop6_bound}};
        if (!m.warnings.empty()) doc["warnings"] = m.warnings;
        *out_json = dup_string(doc.dump(2));
    });
}

vg_status vg_model_coupling_csv(const vg_model* model, char** out_csv) {
    if (!model || !out_csv) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        *out_csv = dup_string(vg::build_coupling_report(model->mats).to_csv());
    });
}

vg_status vg_run_scenario(const char* scenario_path, const char* trace_csv_path,
                          const char* summary_json_path) {
    if (!scenario_path) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        const vg::Scenario scenario = vg::load_scenario(scenario_path);
        const vg::RunResult result = vg::run_scenario(scenario);
        if (trace_csv_path) {
            std::ofstream out(trace_csv_path);
            if (!out) throw vg::IoError(std::string("cannot write '") + trace_csv_path + "'");
            out << vg::trace_to_csv(result.trace);
        }
        if (summary_json_path) {
            std::ofstream out(summary_json_path);
            if (!out) throw vg::IoError(std::string("cannot write '") + summary_json_path + "'");
            out << vg::summary_to_json(scenario, result) << '\n';
        }
        if (result.aborted)
            throw vg::Error(result.error_status, "scenario aborted: " + result.error);
    });
}

vg_status vg_validate(const vg_feeder* feeder, vg_model_kind kind, double load_scale,
                      double pv_scale, char** out_json) {
    if (!feeder || !out_json) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        vg::Scenario s;
        s.feeder = feeder->feeder;
        s.model = kind == VG_MODEL_SINGLE_PHASE ? vg::ModelKind::SinglePhase
                                                : vg::ModelKind::Multiphase;
        s.load_scale = load_scale;
        s.pv_scale = pv_scale;
        const vg::Feeder prepared = vg::prepare_feeder(s);

        const vg::GridMatrices mats = s.model == vg::ModelKind::SinglePhase
                                          ? vg::build_single_phase(prepared)
                                          : vg::build_multiphase(prepared);
        Eigen::VectorXd p(mats.dim()), q(mats.dim());
        for (int k = 0; k < mats.dim(); ++k) {
            const auto [bus, phase] = mats.mask[k];
            const vg::Bus& b = prepared.buses[bus];
            const int ph = static_cast<int>(phase);
            p(k) = (b.pv[ph] ? b.pv[ph]->p_gen : 0.0) - b.load_p[ph];
            q(k) = -b.load_q[ph];
        }
        *out_json = dup_string(vg::compare_models(prepared, p, q).to_json(prepared));
    });
}

vg_status vg_divergence_probe(const vg_feeder* feeder, vg_model_kind kind, double load_scale,
                              double pv_scale, const double* multipliers, size_t count,
                              char** out_json) {
    if (!feeder || !multipliers || !out_json) return fail(vg::Status::Config, "null argument");
    return guarded([&] {
        vg::Scenario s;
        s.feeder = feeder->feeder;
        s.model = kind == VG_MODEL_SINGLE_PHASE ? vg::ModelKind::SinglePhase
                                                : vg::ModelKind::Multiphase;
        s.load_scale = load_scale;
        s.pv_scale = pv_scale;
        const vg::Feeder prepared = vg::prepare_feeder(s);
        const vg::GridMatrices mats = kind == VG_MODEL_SINGLE_PHASE
                                          ? vg::build_single_phase(prepared)
                                          : vg::build_multiphase(prepared);
        const std::vector<double> ms(multipliers, multipliers + count);
        *out_json = dup_string(vg::probe_to_json(vg::divergence_probe(prepared, mats, ms)));
    });
}

}  // extern "C"
