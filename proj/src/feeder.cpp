#include "feeder.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace vg {

using nlohmann::json;

namespace {

constexpr double kZSymmetryTol = 1e-9;

int phase_from_char(char c) {
    switch (c) {
        case 'a': return 0;
        case 'b': return 1;
        case 'c': return 2;
        default: throw ParseError(std::string("phases: unknown phase letter '") + c + "'");
    }
}

PhaseMask parse_phase_string(const std::string& s, const std::string& field) {
    if (s.empty()) throw ParseError(field + ": phase set must be non-empty");
    PhaseMask m = 0;
    for (char c : s) m |= 1u << phase_from_char(c);
    return m;
}

double require_number(const json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_number())
        throw ParseError(field + ": expected a number");
    return j[field].get<double>();
}

const json& require_array(const json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_array())
        throw ParseError(field + ": expected an array");
    return j[field];
}

std::string require_string(const json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_string())
        throw ParseError(field + ": expected a string");
    return j[field].get<std::string>();
}

std::pair<double, double> parse_pair(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ParseError(field + ": expected [re, im] number pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

// Union-find over bus indices, used for the spanning-tree check.
struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

void check_spanning_tree(int n_buses, const std::vector<Line>& closed) {
    if (static_cast<int>(closed.size()) != n_buses - 1)
        throw TopologyError("closed-line set is not a spanning tree: " + std::to_string(closed.size()) +
                            " closed lines for " + std::to_string(n_buses) + " buses");
    DisjointSet ds(n_buses);
    for (const Line& l : closed)
        if (!ds.unite(l.from, l.to))
            throw TopologyError("closed-line set contains a cycle through line '" + l.id + "'");
    // n-1 successful unions on n nodes imply connectivity
}

void validate_line_block(const Line& line, const Bus& child, const Bus& parent) {
    if (line.phases != child.phases)
        throw ValidationError("line '" + line.id + "': served phases do not match child bus '" + child.id + "'");
    if ((line.phases & parent.phases) != line.phases)
        throw ValidationError("line '" + line.id + "': serves a phase missing at parent bus '" + parent.id + "'");
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            bool served = has_phase(line.phases, i) && has_phase(line.phases, j);
            if (!served && std::abs(line.z(i, j)) != 0.0)
                throw ValidationError("line '" + line.id + "': impedance entry on an unserved phase pair");
            if (served && std::abs(line.z(i, j) - line.z(j, i)) > kZSymmetryTol)
                throw ValidationError("line '" + line.id + "': impedance block is not symmetric");
        }
        if (has_phase(line.phases, i) && line.z(i, i).imag() <= 0.0)
            throw ValidationError("line '" + line.id + "': diagonal reactance must be positive on served phases");
    }
}

void validate_feeder(const Feeder& f) {
    for (const Bus& b : f.buses) {
        if (b.phases == 0) throw ValidationError("bus '" + b.id + "': empty phase set");
        for (int ph = 0; ph < 3; ++ph) {
            if (!has_phase(b.phases, ph) && (b.load_p[ph] != 0.0 || b.load_q[ph] != 0.0 || b.pv[ph]))
                throw ValidationError("bus '" + b.id + "': load or pv on an unserved phase");
            if (b.pv[ph]) {
                const PvUnit& u = *b.pv[ph];
                if (u.capacity_s < 0.0 || u.p_gen < 0.0)
                    throw ValidationError("bus '" + b.id + "': pv ratings must be non-negative");
                if (u.p_gen > u.capacity_s)
                    throw ValidationError("bus '" + b.id + "': pv active injection exceeds apparent capacity");
                if (u.cost_c < 0.0)
                    throw ValidationError("bus '" + b.id + "': pv cost must be non-negative");
            }
        }
    }
    for (int n = 1; n <= f.n_buses(); ++n) {
        const Line& l = f.line_to(n);
        validate_line_block(l, f.buses[n], f.buses[l.from]);
        // phases may only appear below a bus that carries them
        if ((f.buses[n].phases & f.buses[l.from].phases) != f.buses[n].phases)
            throw ValidationError("bus '" + f.buses[n].id + "': serves a phase its parent lacks");
    }
    if (f.v0_squared <= 0.0) throw ValidationError("v0_squared: must be positive");
}

// Pre-canonical feeder assembled straight from the file: lines are undirected
// edges between bus indices in file order.
struct RawGraph {
    std::vector<std::pair<int, int>> closed_ends;  // (end_u, end_v) per closed line
    std::vector<const Line*> closed;
    std::vector<const Line*> open;
};

}  // namespace

std::vector<std::pair<int, Phase>> Feeder::served_pairs() const {
    std::vector<std::pair<int, Phase>> out;
    for (int n = 1; n <= n_buses(); ++n)
        for (int ph = 0; ph < 3; ++ph)
            if (has_phase(buses[n].phases, ph)) out.emplace_back(n, static_cast<Phase>(ph));
    return out;
}

// Rebuild the canonical numbering from an arbitrary bus/line arrangement.
// `closed` lines are treated as undirected; orientation is re-derived by BFS
// from the root bus.
static Feeder canonicalize_impl(const Feeder& in, int root_index) {
    const int n_total = static_cast<int>(in.buses.size());
    check_spanning_tree(n_total, in.lines);

    // adjacency with child ordering by external label
    std::vector<std::vector<std::pair<int, const Line*>>> adj(n_total);
    for (const Line& l : in.lines) {
        adj[l.from].emplace_back(l.to, &l);
        adj[l.to].emplace_back(l.from, &l);
    }
    for (auto& nbrs : adj)
        std::sort(nbrs.begin(), nbrs.end(), [&](const auto& a, const auto& b) {
            return in.buses[a.first].id < in.buses[b.first].id;
        });

    std::vector<int> old_to_new(n_total, -1);
    std::vector<int> order;
    order.reserve(n_total);
    std::deque<int> frontier{root_index};
    old_to_new[root_index] = 0;
    order.push_back(root_index);
    std::vector<const Line*> line_into(n_total, nullptr);
    while (!frontier.empty()) {
        int u = frontier.front();
        frontier.pop_front();
        for (const auto& [v, line] : adj[u]) {
            if (old_to_new[v] >= 0) continue;
            old_to_new[v] = static_cast<int>(order.size());
            order.push_back(v);
            line_into[v] = line;
            frontier.push_back(v);
        }
    }

    Feeder out;
    out.base_kva = in.base_kva;
    out.base_kv = in.base_kv;
    out.v0_squared = in.v0_squared;
    out.events = in.events;
    out.permutation = old_to_new;

    out.buses.resize(n_total);
    for (int old = 0; old < n_total; ++old) {
        Bus b = in.buses[old];
        b.index = old_to_new[old];
        out.buses[b.index] = std::move(b);
    }
    for (const Bus& b : out.buses) out.bus_index[b.id] = b.index;

    out.lines.reserve(n_total - 1);
    for (int n = 1; n < n_total; ++n) {
        const int old_child = order[n];
        Line l = *line_into[old_child];
        l.from = old_to_new[l.from] == n ? old_to_new[l.to] : old_to_new[l.from];
        l.to = n;
        out.lines.push_back(std::move(l));
    }
    for (const Line& l : in.open_lines) {
        Line o = l;
        o.from = old_to_new[l.from];
        o.to = old_to_new[l.to];
        out.open_lines.push_back(std::move(o));
    }

    validate_feeder(out);
    return out;
}

Feeder canonicalize(const Feeder& feeder) { return canonicalize_impl(feeder, 0); }

Feeder parse_feeder(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("feeder: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("feeder: top level must be an object");

    Feeder f;
    f.base_kva = require_number(doc, "base_kva");
    f.base_kv = require_number(doc, "base_kv");
    f.v0_squared = require_number(doc, "v0_squared");
    if (f.base_kva <= 0.0) throw ValidationError("base_kva: must be positive");
    if (f.base_kv <= 0.0) throw ValidationError("base_kv: must be positive");

    const double z_base = f.base_kv * f.base_kv * 1000.0 / f.base_kva;  // ohm
    const double s_base = f.base_kva;                                   // kW per phase

    std::unordered_map<std::string, int> index_of;
    for (const json& jb : require_array(doc, "buses")) {
        Bus b;
        b.id = require_string(jb, "id");
        if (index_of.count(b.id)) throw ParseError("buses: duplicate bus id '" + b.id + "'");
        b.index = static_cast<int>(f.buses.size());
        b.phases = parse_phase_string(require_string(jb, "phases"), "bus '" + b.id + "' phases");
        if (jb.contains("load")) {
            if (!jb["load"].is_object()) throw ParseError("bus '" + b.id + "' load: expected object");
            for (const auto& [key, val] : jb["load"].items()) {
                if (key.size() != 1) throw ParseError("bus '" + b.id + "' load: bad phase key '" + key + "'");
                int ph = phase_from_char(key[0]);
                auto [p, q] = parse_pair(val, "bus '" + b.id + "' load." + key);
                b.load_p[ph] = p / s_base;
                b.load_q[ph] = q / s_base;
            }
        }
        if (jb.contains("pv")) {
            if (!jb["pv"].is_object()) throw ParseError("bus '" + b.id + "' pv: expected object");
            for (const auto& [key, val] : jb["pv"].items()) {
                if (key.size() != 1) throw ParseError("bus '" + b.id + "' pv: bad phase key '" + key + "'");
                int ph = phase_from_char(key[0]);
                PvUnit u;
                u.capacity_s = require_number(val, "s") / s_base;
                u.p_gen = require_number(val, "p") / s_base;
                u.cost_c = val.contains("c") ? require_number(val, "c") : 0.0;
                b.pv[ph] = u;
            }
        }
        index_of[b.id] = b.index;
        f.buses.push_back(std::move(b));
    }
    if (f.buses.empty()) throw ParseError("buses: at least the feeder bus is required");

    std::vector<Line> all_lines;
    std::unordered_map<std::string, int> line_of;
    for (const json& jl : require_array(doc, "lines")) {
        Line l;
        l.id = require_string(jl, "id");
        if (line_of.count(l.id)) throw ParseError("lines: duplicate line id '" + l.id + "'");
        const std::string from_id = require_string(jl, "from");
        const std::string to_id = require_string(jl, "to");
        if (!index_of.count(from_id)) throw ParseError("line '" + l.id + "': unknown bus '" + from_id + "'");
        if (!index_of.count(to_id)) throw ParseError("line '" + l.id + "': unknown bus '" + to_id + "'");
        l.from = index_of[from_id];
        l.to = index_of[to_id];
        if (l.from == l.to) throw TopologyError("line '" + l.id + "': self loop");
        if (!jl.contains("z") || !jl["z"].is_object())
            throw ParseError("line '" + l.id + "' z: expected object of phase-pair entries");
        for (const auto& [key, val] : jl["z"].items()) {
            if (key.size() != 2) throw ParseError("line '" + l.id + "' z: bad key '" + key + "'");
            int pi = phase_from_char(key[0]);
            int pj = phase_from_char(key[1]);
            auto [r, x] = parse_pair(val, "line '" + l.id + "' z." + key);
            std::complex<double> zpu(r / z_base, x / z_base);
            if (std::abs(l.z(pi, pj)) != 0.0 && std::abs(l.z(pi, pj) - zpu) > kZSymmetryTol)
                throw ValidationError("line '" + l.id + "': conflicting entries for z." + key);
            l.z(pi, pj) = zpu;
            if (pi != pj) {
                if (std::abs(l.z(pj, pi)) != 0.0 && std::abs(l.z(pj, pi) - zpu) > kZSymmetryTol)
                    throw ValidationError("line '" + l.id + "': impedance block is not symmetric");
                l.z(pj, pi) = zpu;
            }
        }
        for (int ph = 0; ph < 3; ++ph)
            if (std::abs(l.z(ph, ph)) != 0.0) l.phases |= 1u << ph;
        if (l.phases == 0) throw ValidationError("line '" + l.id + "': no diagonal impedance entries");
        line_of[l.id] = static_cast<int>(all_lines.size());
        all_lines.push_back(std::move(l));
    }

    std::vector<bool> open_flag(all_lines.size(), false);
    if (doc.contains("normally_open")) {
        for (const json& jid : require_array(doc, "normally_open")) {
            if (!jid.is_string()) throw ParseError("normally_open: expected line id strings");
            auto it = line_of.find(jid.get<std::string>());
            if (it == line_of.end())
                throw ParseError("normally_open: unknown line '" + jid.get<std::string>() + "'");
            open_flag[it->second] = true;
        }
    }
    if (doc.contains("events")) {
        for (const json& je : require_array(doc, "events")) {
            SwitchEvent ev;
            ev.at_iteration = static_cast<int>(require_number(je, "t"));
            if (je.contains("open")) {
                ev.open_line = require_string(je, "open");
                if (!line_of.count(*ev.open_line))
                    throw ParseError("events: unknown line '" + *ev.open_line + "'");
            }
            if (je.contains("close")) {
                ev.close_line = require_string(je, "close");
                if (!line_of.count(*ev.close_line))
                    throw ParseError("events: unknown line '" + *ev.close_line + "'");
            }
            f.events.push_back(std::move(ev));
        }
    }

    for (std::size_t i = 0; i < all_lines.size(); ++i)
        (open_flag[i] ? f.open_lines : f.lines).push_back(all_lines[i]);

    // the first listed bus is the feeder bus
    return canonicalize_impl(f, 0);
}

Feeder load_feeder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feeder file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_feeder(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

Feeder apply_switch_event(const Feeder& feeder, const SwitchEvent& event) {
    Feeder work = feeder;  // indices are shared between the copies
    auto take = [](std::vector<Line>& from, const std::string& id) -> std::optional<Line> {
        for (auto it = from.begin(); it != from.end(); ++it) {
            if (it->id == id) {
                Line l = *it;
                from.erase(it);
                return l;
            }
        }
        return std::nullopt;
    };
    if (event.open_line) {
        auto l = take(work.lines, *event.open_line);
        if (!l) throw TopologyError("switch event: line '" + *event.open_line + "' is not closed");
        work.open_lines.push_back(std::move(*l));
    }
    if (event.close_line) {
        auto l = take(work.open_lines, *event.close_line);
        if (!l) throw TopologyError("switch event: line '" + *event.close_line + "' is not open");
        work.lines.push_back(std::move(*l));
    }
    return canonicalize_impl(work, 0);
}

bool is_single_phase(const Feeder& feeder) {
    for (const Bus& b : feeder.buses)
        if (b.phases != 1u) return false;
    return true;
}

Feeder to_single_phase(const Feeder& feeder) {
    Feeder out = feeder;
    auto collapse_line = [](Line& l) {
        double r = 0.0, x = 0.0;
        int k = 0;
        for (int ph = 0; ph < 3; ++ph) {
            if (!has_phase(l.phases, ph)) continue;
            r += l.z(ph, ph).real();
            x += l.z(ph, ph).imag();
            ++k;
        }
        l.z = Eigen::Matrix3cd::Zero();
        l.z(0, 0) = {r / k, x / k};
        l.phases = 1u;
    };
    for (Line& l : out.lines) collapse_line(l);
    for (Line& l : out.open_lines) collapse_line(l);
    // Powers summed across phases are re-expressed on the three-phase base
    // (3x the per-phase base), so a balanced bus keeps its per-unit value
    // and the equivalent carries the same per-phase loading as the original.
    for (Bus& b : out.buses) {
        double p = 0.0, q = 0.0, s_cap = 0.0, p_gen = 0.0, cost = 0.0;
        int n_pv = 0;
        for (int ph = 0; ph < 3; ++ph) {
            p += b.load_p[ph];
            q += b.load_q[ph];
            if (b.pv[ph]) {
                s_cap += b.pv[ph]->capacity_s;
                p_gen += b.pv[ph]->p_gen;
                cost += b.pv[ph]->cost_c;
                ++n_pv;
            }
        }
        b.phases = 1u;
        b.load_p = {p / 3.0, 0.0, 0.0};
        b.load_q = {q / 3.0, 0.0, 0.0};
        b.pv = {};
        if (n_pv > 0) b.pv[0] = PvUnit{s_cap / 3.0, p_gen / 3.0, cost / n_pv};
    }
    out.base_kva = 3.0 * feeder.base_kva;
    out.base_kv = std::sqrt(3.0) * feeder.base_kv;
    return out;
}

}  // namespace vg
