// Command-line front end. Links only the C API so it doubles as a smoke test
// of the shared-library surface.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voltgrid.h"

namespace {

constexpr int kExitUsage = 64;

int exit_code_for(vg_status status) {
    switch (status) {
        case VG_OK: return 0;
        case VG_ERR_NUMERIC:
        case VG_ERR_STATE: return 2;
        default: return 1;
    }
}

int report_failure(vg_status status) {
    std::cerr << "error: " << vg_last_error() << "\n";
    return exit_code_for(status);
}

struct FeederHandle {
    vg_feeder* ptr = nullptr;
    ~FeederHandle() { vg_feeder_free(ptr); }
};

struct ModelHandle {
    vg_model* ptr = nullptr;
    ~ModelHandle() { vg_model_free(ptr); }
};

struct StringHandle {
    char* ptr = nullptr;
    ~StringHandle() { vg_string_free(ptr); }
};

int write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return 0;
    }
    std::ofstream out(out_path);
    if (!out) {
        std::cerr << "error: cannot write '" << out_path << "'\n";
        return 1;
    }
    out << text;
    return 0;
}

vg_model_kind kind_from(const std::string& s) {
    return s == "mp" || s == "multiphase" ? VG_MODEL_MULTIPHASE : VG_MODEL_SINGLE_PHASE;
}

int open_feeder(const std::string& path, FeederHandle& feeder) {
    const vg_status st = vg_feeder_load(path.c_str(), &feeder.ptr);
    return st == VG_OK ? 0 : report_failure(st);
}

int open_model(const std::string& path, const std::string& kind, FeederHandle& feeder,
               ModelHandle& model) {
    if (int rc = open_feeder(path, feeder)) return rc;
    const vg_status st = vg_model_build(feeder.ptr, kind_from(kind), &model.ptr);
    return st == VG_OK ? 0 : report_failure(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voltgrid: linearized distribution-grid models and local volt-var control"};
    app.require_subcommand(1);

    std::string feeder_path, out_path, model_kind = "sp", format = "json";

    auto add_common = [&](CLI::App* cmd, bool with_model = true) {
        cmd->add_option("--feeder", feeder_path, "feeder JSON file")->required();
        cmd->add_option("--out", out_path, "output path (default: stdout)");
        if (with_model)
            cmd->add_option("--model", model_kind, "model kind: sp | mp")
                ->check(CLI::IsMember({"sp", "mp", "single_phase", "multiphase"}));
    };

    CLI::App* cmd_matrices = app.add_subcommand("matrices", "dump model matrices and eigen summaries");
    add_common(cmd_matrices);
    cmd_matrices->add_option("--format", format, "json")->check(CLI::IsMember({"json"}));

    CLI::App* cmd_bounds = app.add_subcommand("bounds", "print step-size bounds and condition number");
    add_common(cmd_bounds);

    CLI::App* cmd_coupling = app.add_subcommand("coupling", "inter-phase coupling sign report (CSV)");
    cmd_coupling->add_option("--feeder", feeder_path, "feeder JSON file")->required();
    cmd_coupling->add_option("--out", out_path, "output path (default: stdout)");

    std::string scenario_path, trace_path, summary_path;
    std::string rule_override, mu_bound_override, restart_override;
    double mu_fraction_override = -1.0, mu_override = -1.0, tol_override = -1.0;
    int max_iter_override = -1;
    std::string plant_override;
    unsigned seed = 0;
    CLI::App* cmd_run = app.add_subcommand("run", "execute a scenario file");
    cmd_run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    cmd_run->add_option("--trace", trace_path, "trace CSV output path");
    cmd_run->add_option("--summary", summary_path, "summary JSON output path");
    cmd_run->add_option("--rule", rule_override,
                        "run a single rule instead of the scenario's list")
        ->check(CLI::IsMember({"unconstrained", "projected", "pgd", "dpgd", "apgd", "ieee1547"}));
    cmd_run->add_option("--mu", mu_override, "explicit step size");
    cmd_run->add_option("--mu-fraction", mu_fraction_override, "fraction of the selected bound");
    cmd_run->add_option("--mu-bound", mu_bound_override, "bound: prop3 | lmax | prop6")
        ->check(CLI::IsMember({"prop3", "lmax", "prop6"}));
    cmd_run->add_option("--restart", restart_override, "APGD restart window (integer or 'off')");
    cmd_run->add_option("--tol", tol_override, "convergence tolerance on ||dq||_inf");
    cmd_run->add_option("--max-iter", max_iter_override, "iteration horizon override");
    cmd_run->add_option("--plant", plant_override, "plant override: linear | ac")
        ->check(CLI::IsMember({"linear", "ac"}));
    cmd_run->add_option("--seed", seed, "scenario seed override");

    double load_scale = 1.0, pv_scale = 1.0;
    CLI::App* cmd_validate = app.add_subcommand("validate", "linear model vs AC power flow");
    add_common(cmd_validate);
    cmd_validate->add_option("--load-scale", load_scale, "load scaling factor");
    cmd_validate->add_option("--pv-scale", pv_scale, "PV generation scaling factor");

    std::vector<double> multipliers{0.5, 1.0, 2.0, 3.0, 3.5, 4.0};
    double probe_load_scale = 1.0, probe_pv_scale = 1.0;
    CLI::App* cmd_probe = app.add_subcommand("probe", "step-size divergence sweep");
    add_common(cmd_probe);
    cmd_probe->add_option("--multipliers", multipliers, "multiples of prop6_bound to try");
    cmd_probe->add_option("--load-scale", probe_load_scale, "load scaling factor");
    cmd_probe->add_option("--pv-scale", probe_pv_scale, "PV generation scaling factor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (cmd_matrices->parsed()) {
        FeederHandle feeder;
        ModelHandle model;
        if (int rc = open_model(feeder_path, model_kind, feeder, model)) return rc;
        StringHandle json;
        if (vg_status st = vg_model_dump_json(model.ptr, &json.ptr); st != VG_OK)
            return report_failure(st);
        return write_output(json.ptr, out_path);
    }

    if (cmd_bounds->parsed()) {
        FeederHandle feeder;
        ModelHandle model;
        if (int rc = open_model(feeder_path, model_kind, feeder, model)) return rc;
        vg_eigs e{};
        if (vg_status st = vg_model_eigs(model.ptr, &e); st != VG_OK) return report_failure(st);
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "lambda_min     %.12g\n"
                      "lambda_max     %.12g\n"
                      "kappa          %.12g\n"
                      "lambda_max_xtx %.12g\n"
                      "prop3_bound    %.12g\n"
                      "lmax_bound     %.12g\n"
                      "prop5_bound    %.12g\n"
                      "prop6_bound    %.12g\n",
                      e.lambda_min, e.lambda_max, e.kappa, e.lambda_max_xtx, e.prop3_bound,
                      e.lmax_bound, e.prop5_bound, e.prop6_bound);
        return write_output(buf, out_path);
    }

    if (cmd_coupling->parsed()) {
        FeederHandle feeder;
        ModelHandle model;
        if (int rc = open_model(feeder_path, "mp", feeder, model)) return rc;
        StringHandle csv;
        if (vg_status st = vg_model_coupling_csv(model.ptr, &csv.ptr); st != VG_OK)
            return report_failure(st);
        return write_output(csv.ptr, out_path);
    }

    if (cmd_run->parsed()) {
        // Flag overrides rewrite the scenario document into a staged temp file;
        // the C API consumes scenario files only.
        std::string effective_path = scenario_path;
        std::filesystem::path staged_path;
        const bool needs_rewrite = !rule_override.empty() || mu_override > 0.0 ||
                                   mu_fraction_override > 0.0 || !mu_bound_override.empty() ||
                                   !restart_override.empty() || tol_override > 0.0 ||
                                   max_iter_override > 0 || !plant_override.empty() ||
                                   cmd_run->count("--seed") > 0;
        if (needs_rewrite) {
            std::ifstream in(scenario_path);
            if (!in) {
                std::cerr << "error: cannot open scenario '" << scenario_path << "'\n";
                return 1;
            }
            nlohmann::json doc;
            try {
                in >> doc;
            } catch (const std::exception& e) {
                std::cerr << "error: scenario is not valid JSON: " << e.what() << "\n";
                return 1;
            }
            if (doc.contains("feeder") && doc["feeder"].is_string()) {
                std::filesystem::path fp = doc["feeder"].get<std::string>();
                if (fp.is_relative())
                    fp = std::filesystem::absolute(
                        std::filesystem::path(scenario_path).parent_path() / fp);
                doc["feeder"] = fp.string();
            }
            if (!rule_override.empty())
                doc["rules"] = nlohmann::json::array({{{"rule", rule_override}}});
            if (doc.contains("rules") && doc["rules"].is_array()) {
                for (nlohmann::json& rule : doc["rules"]) {
                    if (mu_override > 0.0) rule["mu"] = mu_override;
                    if (mu_fraction_override > 0.0) rule["mu_fraction"] = mu_fraction_override;
                    if (!mu_bound_override.empty()) rule["mu_bound"] = mu_bound_override;
                    if (!restart_override.empty()) {
                        if (restart_override == "off")
                            rule["restart"] = "off";
                        else
                            rule["restart"] = std::stoi(restart_override);
                    }
                    if (tol_override > 0.0) rule["tol"] = tol_override;
                }
            }
            if (max_iter_override > 0) doc["horizon"] = max_iter_override;
            if (!plant_override.empty()) doc["plant"] = plant_override;
            if (cmd_run->count("--seed") > 0) doc["seed"] = seed;

            staged_path = std::filesystem::temp_directory_path() /
                          ("voltgrid_scenario_" + std::to_string(::getpid()) + ".json");
            std::ofstream out(staged_path);
            out << doc.dump(2);
            if (!out) {
                std::cerr << "error: cannot stage scenario overrides\n";
                return 1;
            }
            out.close();
            effective_path = staged_path.string();
        }
        const vg_status st = vg_run_scenario(effective_path.c_str(),
                                             trace_path.empty() ? nullptr : trace_path.c_str(),
                                             summary_path.empty() ? nullptr : summary_path.c_str());
        if (!staged_path.empty()) std::filesystem::remove(staged_path);
        if (st != VG_OK) return report_failure(st);
        if (trace_path.empty() && summary_path.empty())
            std::cout << "scenario completed (no --trace/--summary outputs requested)\n";
        return 0;
    }

    if (cmd_validate->parsed()) {
        FeederHandle feeder;
        if (int rc = open_feeder(feeder_path, feeder)) return rc;
        StringHandle json;
        if (vg_status st = vg_validate(feeder.ptr, kind_from(model_kind), load_scale, pv_scale,
                                       &json.ptr);
            st != VG_OK)
            return report_failure(st);
        return write_output(json.ptr, out_path);
    }

    if (cmd_probe->parsed()) {
        FeederHandle feeder;
        if (int rc = open_feeder(feeder_path, feeder)) return rc;
        StringHandle json;
        if (vg_status st = vg_divergence_probe(feeder.ptr, kind_from(model_kind), probe_load_scale,
                                               probe_pv_scale, multipliers.data(),
                                               multipliers.size(), &json.ptr);
            st != VG_OK)
            return report_failure(st);
        return write_output(json.ptr, out_path);
    }

    return kExitUsage;
}
