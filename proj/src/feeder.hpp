#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace vg {

/// Phase index in positive-sequence order a -> b -> c.
enum class Phase : int { A = 0, B = 1, C = 2 };

inline char phase_letter(Phase p) { return "abc"[static_cast<int>(p)]; }

/// Bitmask over the three phases; bit i set means phase i is served.
using PhaseMask = unsigned;

inline bool has_phase(PhaseMask m, int phase) { return (m >> phase) & 1u; }
inline int phase_count(PhaseMask m) { return int(m & 1u) + int((m >> 1) & 1u) + int((m >> 2) & 1u); }

/// Inverter-interfaced generator on one phase of a bus. Per-unit throughout.
struct PvUnit {
    double capacity_s = 0.0;  // apparent power limit
    double p_gen = 0.0;       // current active injection, 0 <= p_gen <= capacity_s
    double cost_c = 0.0;      // reactive compensation marginal cost, >= 0

    double q_limit() const { return std::sqrt(std::max(0.0, capacity_s * capacity_s - p_gen * p_gen)); }
};

struct Bus {
    std::string id;                           // external label from the input file
    int index = -1;                           // canonical index, 0 = feeder bus
    PhaseMask phases = 0;                     // non-empty
    std::array<double, 3> load_p{};           // per-phase constant-power demand, per-unit
    std::array<double, 3> load_q{};
    std::array<std::optional<PvUnit>, 3> pv;  // per-phase PV, if any
};

/// Distribution line identified with its child bus after canonicalization.
struct Line {
    std::string id;
    int from = -1;  // parent bus index pi_n
    int to = -1;    // child bus index n
    Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();  // symmetric phase impedance block, per-unit;
                                                    // zero rows/cols on phases the line does not serve
    PhaseMask phases = 0;
};

struct SwitchEvent {
    int at_iteration = 0;
    std::optional<std::string> open_line;
    std::optional<std::string> close_line;
};

/// Canonical rooted-tree description of a radial feeder.
///
/// Invariants maintained by the constructors in this module:
///  - buses[k].index == k, buses[0] is the feeder/slack bus;
///  - lines.size() == buses.size()-1, lines[n-1].to == n and lines[n-1].from < n;
///  - the closed lines form a spanning tree.
struct Feeder {
    double base_kva = 0.0;  // per-phase power base
    double base_kv = 0.0;   // phase-to-neutral voltage base
    double v0_squared = 1.0;

    std::vector<Bus> buses;
    std::vector<Line> lines;       // closed (energized) lines, canonical order
    std::vector<Line> open_lines;  // normally-open ties; endpoints are canonical bus indices
    std::vector<SwitchEvent> events;

    std::unordered_map<std::string, int> bus_index;  // external id -> canonical index
    std::vector<int> permutation;                    // previous index -> canonical index

    int n_buses() const { return static_cast<int>(buses.size()) - 1; }  // N, non-feeder count
    int parent_of(int bus) const { return lines[bus - 1].from; }
    const Line& line_to(int bus) const { return lines[bus - 1]; }

    /// Served (bus, phase) pairs in bus-major order, feeder bus excluded.
    std::vector<std::pair<int, Phase>> served_pairs() const;
};

/// Parse and validate a feeder description; the result is canonical.
Feeder load_feeder(const std::string& path);
Feeder parse_feeder(const std::string& json_text);

/// Renumber buses breadth-first from the feeder bus (ties broken by external
/// label) so that every line satisfies parent < child. Idempotent.
Feeder canonicalize(const Feeder& feeder);

/// Toggle the event's lines in the closed set and re-canonicalize.
Feeder apply_switch_event(const Feeder& feeder, const SwitchEvent& event);

/// Collapse a multiphase feeder to its positive-sequence single-phase
/// equivalent: per line the mean of the served diagonal r and x, per bus the
/// loads and PV ratings summed across phases. Already-single-phase feeders
/// pass through unchanged up to relabeling onto phase a.
Feeder to_single_phase(const Feeder& feeder);

/// True when every bus serves exactly one phase (phase a).
bool is_single_phase(const Feeder& feeder);

}  // namespace vg
