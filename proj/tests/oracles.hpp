// Test-only oracles and generators. Everything here computes expected values
// along routes independent of the library implementation under test.
#pragma once

#include <complex>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "feeder.hpp"

#ifndef VOLTGRID_DATA_DIR
#define VOLTGRID_DATA_DIR "data"
#endif

namespace oracle {

inline std::string data_path(const std::string& name) {
    return std::string(VOLTGRID_DATA_DIR) + "/" + name;
}

// ---------------------------------------------------------------------------
// random feeder generation (through the public JSON schema, so the parser and
// per-unit conversion run on every generated instance; bases are 1 kV / 1000
// kVA, making file ohms and kW equal to per-unit values x1000)

inline nlohmann::json random_tree_json(std::mt19937_64& rng, int n_buses, bool multiphase,
                                       bool shuffle_labels = false) {
    std::uniform_real_distribution<double> imp(0.05, 1.0);
    std::uniform_real_distribution<double> mutual(0.0, 0.15);
    std::uniform_real_distribution<double> load(0.0, 80.0);
    std::uniform_int_distribution<int> parent_pick(0, 1 << 20);

    nlohmann::json doc;
    doc["base_kva"] = 1000.0;
    doc["base_kv"] = 1.0;
    doc["v0_squared"] = 1.0;

    std::vector<std::string> ids;
    ids.push_back("b0");
    for (int n = 1; n <= n_buses; ++n) ids.push_back("b" + std::to_string(n));

    std::vector<std::string> phase_of(n_buses + 1, multiphase ? "abc" : "a");
    if (multiphase) {
        static const char* kSubsets[] = {"a", "b", "c", "ab", "bc", "ac", "abc"};
        for (int n = 1; n <= n_buses; ++n) {
            // child phases must be a subset of the parent's; parents are
            // chosen below from lower indices, so constrain against b0..n-1
            phase_of[n] = kSubsets[parent_pick(rng) % 7];
        }
    }

    std::vector<int> parent(n_buses + 1, 0);
    for (int n = 2; n <= n_buses; ++n) parent[n] = parent_pick(rng) % n;

    if (multiphase) {
        // enforce the subset constraint down the tree
        for (int n = 1; n <= n_buses; ++n) {
            std::string allowed = phase_of[parent[n]];
            std::string mine;
            for (char c : phase_of[n])
                if (allowed.find(c) != std::string::npos) mine += c;
            if (mine.empty()) mine = allowed.substr(0, 1);
            phase_of[n] = mine;
        }
    }

    nlohmann::json buses = nlohmann::json::array();
    for (int n = 0; n <= n_buses; ++n) {
        nlohmann::json b;
        b["id"] = ids[n];
        b["phases"] = phase_of[n];
        if (n > 0) {
            nlohmann::json jload;
            for (char c : phase_of[n])
                jload[std::string(1, c)] = {load(rng), 0.5 * load(rng)};
            b["load"] = jload;
        }
        buses.push_back(b);
    }

    nlohmann::json lines = nlohmann::json::array();
    for (int n = 1; n <= n_buses; ++n) {
        nlohmann::json z;
        const std::string& ph = phase_of[n];
        for (char c : ph) {
            std::string key{c, c};
            z[key] = {imp(rng), imp(rng)};
        }
        for (std::size_t i = 0; i < ph.size(); ++i)
            for (std::size_t j = i + 1; j < ph.size(); ++j) {
                std::string key{ph[i], ph[j]};
                z[key] = {mutual(rng), mutual(rng)};
            }
        lines.push_back({{"id", "l" + std::to_string(n)},
                         {"from", ids[parent[n]]},
                         {"to", ids[n]},
                         {"z", z}});
    }

    if (shuffle_labels) {
        // list buses in scrambled order (feeder stays first) and flip some
        // line orientations; canonicalization has to undo all of it
        std::shuffle(buses.begin() + 1, buses.end(), rng);
        for (auto& l : lines)
            if (parent_pick(rng) % 2) std::swap(l["from"], l["to"]);
        std::shuffle(lines.begin(), lines.end(), rng);
    }
    doc["buses"] = std::move(buses);
    doc["lines"] = std::move(lines);
    return doc;
}

inline vg::Feeder random_tree(std::mt19937_64& rng, int n_buses, bool multiphase = false,
                              bool shuffle_labels = false) {
    return vg::parse_feeder(random_tree_json(rng, n_buses, multiphase, shuffle_labels).dump());
}

// ---------------------------------------------------------------------------
// brute-force path enumeration: entry (n, k) of F is 1 exactly when line k
// lies on the feeder-to-bus-n path

inline Eigen::MatrixXd path_matrix(const vg::Feeder& f) {
    const int n = f.n_buses();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int bus = 1; bus <= n; ++bus)
        for (int hop = bus; hop != 0; hop = f.parent_of(hop)) m(bus - 1, hop - 1) = 1.0;
    return m;
}

// ---------------------------------------------------------------------------
// scalar proximal step by grid search over [-qbar, qbar] at the given
// resolution: argmin mu*c*|w| + 0.5*(w - y)^2

inline double prox_grid_search(double y, double mu, double c, double qbar,
                               double resolution = 1e-4) {
    double best_w = -qbar;
    double best_val = std::numeric_limits<double>::infinity();
    const long steps = std::lround(2.0 * qbar / resolution);
    for (long i = 0; i <= steps; ++i) {
        const double w = -qbar + static_cast<double>(i) * resolution;
        const double val = mu * c * std::abs(w) + 0.5 * (w - y) * (w - y);
        if (val < best_val) {
            best_val = val;
            best_w = w;
        }
    }
    return best_w;
}

// ---------------------------------------------------------------------------
// projected coordinate descent for min_q f2(q) + sum c|q| over the box,
// using only X (for curvature/gradient) -- independent of the proximal path

inline Eigen::VectorXd coordinate_descent_optimum(const Eigen::MatrixXd& x_mat,
                                                  const Eigen::VectorXd& v_base_minus_v0,
                                                  const Eigen::VectorXd& cost,
                                                  const Eigen::VectorXd& qbar, int sweeps = 200000,
                                                  double tol = 1e-13) {
    const int n = static_cast<int>(x_mat.rows());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd grad = v_base_minus_v0;  // v(q) - v0*1 at q = 0
    for (int s = 0; s < sweeps; ++s) {
        double moved = 0.0;
        for (int i = 0; i < n; ++i) {
            const double a = x_mat(i, i);
            const double target = q(i) - grad(i) / a;  // unconstrained coordinate minimum
            double w = 0.0;
            const double thr = cost(i) / a;
            if (target > thr)
                w = target - thr;
            else if (target < -thr)
                w = target + thr;
            w = std::clamp(w, -qbar(i), qbar(i));
            const double delta = w - q(i);
            if (delta != 0.0) {
                grad += delta * x_mat.col(i);
                q(i) = w;
                moved = std::max(moved, std::abs(delta));
            }
        }
        if (moved < tol) break;
    }
    return q;
}

// ---------------------------------------------------------------------------
// exact one-line single-phase power flow from the branch-flow equations:
// squared current from the quadratic |l z - s|^2 = v0 l, then the voltage
// drop identity

struct OneLineSolution {
    double ell;  // squared current magnitude
    double v1;   // squared voltage at the load bus
};

inline OneLineSolution one_line_exact(double v0, std::complex<double> z,
                                      std::complex<double> s_injection) {
    const double a = std::norm(z);
    const double b = -(2.0 * (z * std::conj(s_injection)).real() + v0);
    const double c = std::norm(s_injection);
    // smaller (physical) root, in the cancellation-safe form
    const double disc = std::sqrt(b * b - 4.0 * a * c);
    const double ell = 2.0 * c / (-b + disc);
    const std::complex<double> flow = ell * z - s_injection;
    OneLineSolution sol;
    sol.ell = ell;
    sol.v1 = v0 - 2.0 * (std::conj(z) * flow).real() + ell * std::norm(z);
    return sol;
}

}  // namespace oracle
