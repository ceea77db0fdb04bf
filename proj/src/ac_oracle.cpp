#include "ac_oracle.hpp"

#include <cmath>
#include <complex>

#include <json.hpp>

#include "lindistflow.hpp"

namespace vg {

using Complex = std::complex<double>;

AcSolution solve_ac(const Feeder& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const AcOptions& options) {
    const int n = feeder.n_buses();
    const auto mask = feeder.served_pairs();
    const int dim = static_cast<int>(mask.size());
    if (p.size() != dim || q.size() != dim)
        throw ValidationError("ac solve: injection vectors must cover the served (bus, phase) pairs");

    std::vector<int> compact(3 * (n + 1), -1);
    for (int k = 0; k < dim; ++k)
        compact[3 * mask[k].first + static_cast<int>(mask[k].second)] = k;

    // balanced reference: phase a at 0 deg, b at -120, c at +120
    const double v_ref = std::sqrt(feeder.v0_squared);
    const std::array<Complex, 3> unit = {Complex(1.0, 0.0), std::polar(1.0, -2.0 * M_PI / 3.0),
                                         std::polar(1.0, +2.0 * M_PI / 3.0)};

    // voltages indexed [bus][phase]; unserved slots stay zero and unused
    std::vector<std::array<Complex, 3>> volt(n + 1, {Complex(0, 0), Complex(0, 0), Complex(0, 0)});
    for (int bus = 0; bus <= n; ++bus)
        for (int ph = 0; ph < 3; ++ph)
            if (has_phase(feeder.buses[bus].phases, ph)) volt[bus][ph] = v_ref * unit[ph];

    std::vector<std::array<Complex, 3>> current(n + 1);
    double mismatch = 0.0;
    int sweep = 0;
    for (sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        // backward: aggregate line currents from the leaves
        for (auto& c : current) c = {Complex(0, 0), Complex(0, 0), Complex(0, 0)};
        for (int bus = n; bus >= 1; --bus) {
            const int parent = feeder.parent_of(bus);
            for (int ph = 0; ph < 3; ++ph) {
                const int k = compact[3 * bus + ph];
                if (k < 0) continue;
                const Complex v = volt[bus][ph];
                if (std::abs(v) < 1e-8)
                    throw NumericError("ac solve: voltage collapse at bus '" +
                                       feeder.buses[bus].id + "'");
                const Complex s(p(k), q(k));  // net injection
                current[bus][ph] -= std::conj(s / v);
            }
            for (int ph = 0; ph < 3; ++ph) current[parent][ph] += current[bus][ph];
        }
        // forward: propagate voltage drops from the feeder
        mismatch = 0.0;
        for (int bus = 1; bus <= n; ++bus) {
            const Line& line = feeder.line_to(bus);
            for (int ph = 0; ph < 3; ++ph) {
                if (!has_phase(line.phases, ph)) continue;
                Complex drop(0.0, 0.0);
                for (int ps = 0; ps < 3; ++ps) drop += line.z(ph, ps) * current[bus][ps];
                const Complex v_new = volt[line.from][ph] - drop;
                mismatch = std::max(mismatch, std::abs(v_new - volt[bus][ph]));
                volt[bus][ph] = v_new;
            }
        }
        if (mismatch < options.tol) break;
    }
    if (mismatch >= options.tol)
        throw NumericError("ac solve: no convergence after " + std::to_string(options.max_sweeps) +
                           " sweeps (mismatch " + std::to_string(mismatch) + ")");

    AcSolution sol;
    sol.mask = mask;
    sol.bus_voltage.resize(dim);
    sol.line_current.resize(dim);
    sol.v_squared.resize(dim);
    for (int k = 0; k < dim; ++k) {
        const auto [bus, phase] = mask[k];
        const Complex v = volt[bus][static_cast<int>(phase)];
        sol.bus_voltage(k) = v;
        sol.line_current(k) = current[bus][static_cast<int>(phase)];
        sol.v_squared(k) = std::norm(v);
    }
    sol.sweeps = sweep;
    sol.mismatch = mismatch;
    return sol;
}

ModelCompareReport compare_models(const Feeder& feeder, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& q, const AcOptions& options) {
    const GridMatrices mats =
        is_single_phase(feeder) ? build_single_phase(feeder) : build_multiphase(feeder);

    ModelCompareReport rep;
    rep.mask = mats.mask;
    rep.v_linear = mats.R * p + mats.X * q +
                   Eigen::VectorXd::Constant(mats.dim(), feeder.v0_squared);
    rep.v_ac = solve_ac(feeder, p, q, options).v_squared;
    rep.abs_error = (rep.v_linear - rep.v_ac).cwiseAbs();
    rep.max_abs_error = rep.abs_error.size() ? rep.abs_error.maxCoeff() : 0.0;
    rep.mean_abs_error = rep.abs_error.size() ? rep.abs_error.mean() : 0.0;
    return rep;
}

std::string ModelCompareReport::to_json(const Feeder& feeder) const {
    nlohmann::json doc;
    doc["max_abs_error"] = max_abs_error;
    doc["mean_abs_error"] = mean_abs_error;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < mask.size(); ++k) {
        rows.push_back({{"bus", feeder.buses[mask[k].first].id},
                        {"phase", std::string(1, phase_letter(mask[k].second))},
                        {"v_linear", v_linear(k)},
                        {"v_ac", v_ac(k)},
                        {"abs_error", abs_error(k)}});
    }
    doc["pairs"] = std::move(rows);
    return doc.dump(2);
}

}  // namespace vg
