#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridstab/errors.hpp"

namespace gridstab {

using ordered_json = nlohmann::ordered_json;

enum class BusKind { slack, pv, pq };

inline std::string to_string(BusKind k) {
    switch (k) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        default: return "pq";
    }
}

inline BusKind bus_kind_from_string(const std::string& s) {
    if (s == "slack") return BusKind::slack;
    if (s == "pv") return BusKind::pv;
    if (s == "pq") return BusKind::pq;
    throw ValidationError("unknown bus kind '" + s + "'");
}

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double active_demand = 0.0;    // MW
    double reactive_demand = 0.0;  // MVAr
    double base_voltage_kv = 0.0;
    double voltage_setpoint = 1.0;    // p.u.; meaningful for PV/slack
    double shunt_conductance = 0.0;   // p.u. on system base
    double shunt_susceptance = 0.0;   // p.u. on system base
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double resistance = 0.0;       // p.u.
    double reactance = 0.0;        // p.u.
    double line_charging = 0.0;    // total p.u. susceptance
    double tap_ratio = 1.0;        // 1 if absent
    double phase_shift = 0.0;      // radians
};

struct Generator {
    int bus = 0;
    double active_generation = 0.0;    // MW
    double reactive_generation = 0.0;  // MVAr
    double voltage_setpoint = 1.0;     // p.u.
    // Dynamic parameters; unset until merge_dynamics supplies them.
    double inertia = std::numeric_limits<double>::quiet_NaN();             // H, s
    double damping = std::numeric_limits<double>::quiet_NaN();             // D
    double transient_reactance = std::numeric_limits<double>::quiet_NaN(); // x'd, p.u.

    bool has_dynamics() const { return std::isfinite(inertia); }

    /// beta = D / (2H); recomputed from D and H so it can never go stale.
    double effective_damping() const { return damping / (2.0 * inertia); }
};

/// Printed-precision standard deviations captured while parsing; one entry
/// per perturbable raw parameter (see default_uncertainty in uncertainty.hpp).
struct CasePrecision {
    std::vector<double> bus_active_sd;
    std::vector<double> bus_reactive_sd;
    std::vector<double> gen_active_sd;
    std::vector<double> gen_reactive_sd;
    std::vector<double> branch_resistance_sd;
    std::vector<double> branch_reactance_sd;

    bool empty() const { return bus_active_sd.empty(); }
};

struct PowerSystemCase {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;  // order defines generator index i everywhere
    double base_mva = 100.0;
    double nominal_frequency_hz = 60.0;
    CasePrecision precision;
    std::vector<std::string> warnings;  // ignored-field notes from parsing

    int bus_position(int bus_id) const {
        auto it = bus_index_.find(bus_id);
        if (it == bus_index_.end()) {
            throw ValidationError("unknown bus id " + std::to_string(bus_id));
        }
        return it->second;
    }

    void rebuild_index() {
        bus_index_.clear();
        for (std::size_t i = 0; i < buses.size(); ++i) {
            if (!bus_index_.emplace(buses[i].id, static_cast<int>(i)).second) {
                throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
            }
        }
    }

    void validate() const {
        int slack_count = 0;
        for (const auto& b : buses) {
            if (b.kind == BusKind::slack) ++slack_count;
            if (!std::isfinite(b.active_demand) || !std::isfinite(b.reactive_demand)) {
                throw ValidationError("non-finite demand at bus " + std::to_string(b.id));
            }
            if (b.kind != BusKind::pq && b.voltage_setpoint <= 0.0) {
                throw ValidationError("non-positive voltage setpoint at bus " +
                                      std::to_string(b.id));
            }
        }
        if (slack_count != 1) {
            throw ValidationError("case must have exactly one slack bus, found " +
                                  std::to_string(slack_count));
        }
        for (std::size_t i = 0; i < branches.size(); ++i) {
            const auto& br = branches[i];
            if (br.resistance == 0.0 && br.reactance == 0.0) {
                throw ValidationError("branch " + std::to_string(i + 1) +
                                      " has zero impedance");
            }
            if (br.from_bus == br.to_bus) {
                throw ValidationError("branch " + std::to_string(i + 1) +
                                      " connects bus " + std::to_string(br.from_bus) +
                                      " to itself");
            }
            if (!bus_index_.count(br.from_bus) || !bus_index_.count(br.to_bus)) {
                throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                                      std::to_string(br.to_bus) +
                                      " references a missing bus");
            }
        }
        std::unordered_set<int> gen_buses;
        for (const auto& g : generators) {
            if (!bus_index_.count(g.bus)) {
                throw ValidationError("generator references missing bus " +
                                      std::to_string(g.bus));
            }
            if (!gen_buses.insert(g.bus).second) {
                throw ValidationError("more than one generator at bus " +
                                      std::to_string(g.bus));
            }
            if (g.has_dynamics() && g.inertia <= 0.0) {
                throw ValidationError("generator at bus " + std::to_string(g.bus) +
                                      " has non-positive inertia");
            }
        }
    }

  private:
    std::unordered_map<int, int> bus_index_;
};

// ---------------------------------------------------------------------------
// Printed-precision rule

/// One unit in the last printed decimal place: "160" -> 1, "0.001" -> 0.001,
/// "0.020" -> 0.001. A value printed as exact zero carries no information
/// and gets sigma 0.
inline double last_digit_sigma(std::string_view token) {
    double value = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{}) throw ValidationError("bad numeric token '" + std::string(token) + "'");
    if (value == 0.0) return 0.0;
    const auto epos = token.find_first_of("eE");
    double scale = 1.0;
    if (epos != std::string_view::npos) {
        int expo = 0;
        std::from_chars(token.data() + epos + 1, token.data() + token.size(), expo);
        scale = std::pow(10.0, expo);
        token = token.substr(0, epos);
    }
    const auto dot = token.find('.');
    if (dot == std::string_view::npos) return scale;
    const int decimals = static_cast<int>(token.size() - dot - 1);
    return scale * std::pow(10.0, -decimals);
}

/// Shortest round-trip decimal form of v; the printed-precision fallback for
/// values that did not come from a text token.
inline std::string shortest_repr(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double last_digit_sigma(double v) { return last_digit_sigma(shortest_repr(v)); }

// ---------------------------------------------------------------------------
// MATPOWER-format parsing (baseMVA / bus / gen / branch subset)

namespace detail {

struct Token {
    std::string text;
    int row = 0;
    int col = 0;
};

inline std::vector<std::vector<Token>> matpower_matrix(const std::string& text,
                                                       const std::string& name,
                                                       bool required) {
    const std::string key = "mpc." + name;
    auto pos = text.find(key);
    while (pos != std::string::npos) {
        auto eq = text.find('=', pos);
        auto open = text.find('[', eq == std::string::npos ? pos : eq);
        if (open == std::string::npos) break;
        auto close = text.find("];", open);
        if (close == std::string::npos) {
            throw ValidationError("unterminated matrix mpc." + name);
        }
        std::vector<std::vector<Token>> rows;
        std::istringstream body(text.substr(open + 1, close - open - 1));
        std::string line;
        int rowno = 0;
        while (std::getline(body, line)) {
            if (auto cpos = line.find('%'); cpos != std::string::npos) {
                line.erase(cpos);
            }
            std::replace(line.begin(), line.end(), ';', ' ');
            std::istringstream ls(line);
            std::vector<Token> row;
            std::string tok;
            int colno = 0;
            while (ls >> tok) {
                row.push_back({tok, rowno + 1, ++colno});
            }
            if (!row.empty()) {
                ++rowno;
                row.front().row = rowno;
                for (auto& t : row) t.row = rowno;
                rows.push_back(std::move(row));
            }
        }
        return rows;
    }
    if (required) throw ValidationError("matrix mpc." + name + " not found");
    return {};
}

inline double num(const Token& t, const std::string& matrix) {
    double v = 0.0;
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size()) {
        throw ValidationError("malformed " + matrix + " entry '" + t.text + "' at row " +
                              std::to_string(t.row) + ", column " + std::to_string(t.col));
    }
    return v;
}

inline void require_cols(const std::vector<Token>& row, std::size_t need,
                         const std::string& matrix) {
    if (row.size() < need) {
        throw ValidationError("malformed " + matrix + " row " +
                              std::to_string(row.front().row) + ": expected at least " +
                              std::to_string(need) + " columns, got " +
                              std::to_string(row.size()));
    }
}

}  // namespace detail

inline PowerSystemCase parse_matpower(const std::string& text) {
    using detail::num;
    PowerSystemCase cs;

    {
        auto pos = text.find("mpc.baseMVA");
        if (pos == std::string::npos) throw ValidationError("mpc.baseMVA not found");
        auto eq = text.find('=', pos);
        auto semi = text.find(';', eq);
        std::string tok = text.substr(eq + 1, semi - eq - 1);
        tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
        detail::Token t{tok, 0, 0};
        cs.base_mva = num(t, "baseMVA");
    }

    auto bus_rows = detail::matpower_matrix(text, "bus", true);
    auto gen_rows = detail::matpower_matrix(text, "gen", true);
    auto branch_rows = detail::matpower_matrix(text, "branch", true);
    if (!detail::matpower_matrix(text, "gencost", false).empty()) {
        cs.warnings.push_back("mpc.gencost ignored");
    }

    for (const auto& row : bus_rows) {
        detail::require_cols(row, 10, "bus");
        Bus b;
        b.id = static_cast<int>(num(row[0], "bus"));
        const int type = static_cast<int>(num(row[1], "bus"));
        switch (type) {
            case 1: b.kind = BusKind::pq; break;
            case 2: b.kind = BusKind::pv; break;
            case 3: b.kind = BusKind::slack; break;
            default:
                throw ValidationError("bus " + std::to_string(b.id) +
                                      ": unsupported bus type " + std::to_string(type));
        }
        b.active_demand = num(row[2], "bus");
        b.reactive_demand = num(row[3], "bus");
        b.shunt_conductance = num(row[4], "bus");  // MW at V=1; scaled below
        b.shunt_susceptance = num(row[5], "bus");  // MVAr at V=1; scaled below
        b.voltage_setpoint = num(row[7], "bus");
        b.base_voltage_kv = num(row[9], "bus");
        cs.buses.push_back(b);
        cs.precision.bus_active_sd.push_back(last_digit_sigma(row[2].text));
        cs.precision.bus_reactive_sd.push_back(last_digit_sigma(row[3].text));
    }
    // MATPOWER stores Gs/Bs in MW/MVAr at V=1; convert to p.u. admittance.
    for (auto& b : cs.buses) {
        b.shunt_conductance /= cs.base_mva;
        b.shunt_susceptance /= cs.base_mva;
    }

    for (const auto& row : gen_rows) {
        detail::require_cols(row, 8, "gen");
        if (row.size() >= 8 && num(row[7], "gen") == 0.0) {
            cs.warnings.push_back("out-of-service generator at bus " + row[0].text +
                                  " ignored");
            continue;
        }
        Generator g;
        g.bus = static_cast<int>(num(row[0], "gen"));
        g.active_generation = num(row[1], "gen");
        g.reactive_generation = num(row[2], "gen");
        g.voltage_setpoint = num(row[5], "gen");
        cs.generators.push_back(g);
        cs.precision.gen_active_sd.push_back(last_digit_sigma(row[1].text));
        cs.precision.gen_reactive_sd.push_back(last_digit_sigma(row[2].text));
    }

    for (const auto& row : branch_rows) {
        detail::require_cols(row, 11, "branch");
        if (num(row[10], "branch") == 0.0) {
            cs.warnings.push_back("out-of-service branch " + row[0].text + "-" +
                                  row[1].text + " ignored");
            continue;
        }
        Branch br;
        br.from_bus = static_cast<int>(num(row[0], "branch"));
        br.to_bus = static_cast<int>(num(row[1], "branch"));
        br.resistance = num(row[2], "branch");
        br.reactance = num(row[3], "branch");
        br.line_charging = num(row[4], "branch");
        const double ratio = num(row[8], "branch");
        br.tap_ratio = ratio == 0.0 ? 1.0 : ratio;
        br.phase_shift = num(row[9], "branch") * M_PI / 180.0;
        cs.branches.push_back(br);
        cs.precision.branch_resistance_sd.push_back(last_digit_sigma(row[2].text));
        cs.precision.branch_reactance_sd.push_back(last_digit_sigma(row[3].text));
    }

    cs.rebuild_index();
    cs.validate();
    return cs;
}

// ---------------------------------------------------------------------------
// Native JSON case format

inline ordered_json serialize_case(const PowerSystemCase& cs) {
    ordered_json j;
    j["schema"] = "gridstab-case-v1";
    j["base_mva"] = cs.base_mva;
    j["nominal_frequency_hz"] = cs.nominal_frequency_hz;
    j["buses"] = ordered_json::array();
    for (const auto& b : cs.buses) {
        ordered_json jb;
        jb["id"] = b.id;
        jb["kind"] = to_string(b.kind);
        jb["active_demand"] = b.active_demand;
        jb["reactive_demand"] = b.reactive_demand;
        jb["base_voltage_kv"] = b.base_voltage_kv;
        jb["voltage_setpoint"] = b.voltage_setpoint;
        jb["shunt_conductance"] = b.shunt_conductance;
        jb["shunt_susceptance"] = b.shunt_susceptance;
        j["buses"].push_back(jb);
    }
    j["branches"] = ordered_json::array();
    for (const auto& br : cs.branches) {
        ordered_json jb;
        jb["from_bus"] = br.from_bus;
        jb["to_bus"] = br.to_bus;
        jb["resistance"] = br.resistance;
        jb["reactance"] = br.reactance;
        jb["line_charging"] = br.line_charging;
        jb["tap_ratio"] = br.tap_ratio;
        jb["phase_shift"] = br.phase_shift;
        j["branches"].push_back(jb);
    }
    j["generators"] = ordered_json::array();
    for (const auto& g : cs.generators) {
        ordered_json jg;
        jg["bus"] = g.bus;
        jg["active_generation"] = g.active_generation;
        jg["reactive_generation"] = g.reactive_generation;
        jg["voltage_setpoint"] = g.voltage_setpoint;
        if (g.has_dynamics()) {
            jg["inertia"] = g.inertia;
            jg["damping"] = g.damping;
            jg["transient_reactance"] = g.transient_reactance;
            jg["effective_damping"] = g.effective_damping();
        }
        j["generators"].push_back(jg);
    }
    if (!cs.precision.empty()) {
        ordered_json jp;
        jp["bus_active_sd"] = cs.precision.bus_active_sd;
        jp["bus_reactive_sd"] = cs.precision.bus_reactive_sd;
        jp["gen_active_sd"] = cs.precision.gen_active_sd;
        jp["gen_reactive_sd"] = cs.precision.gen_reactive_sd;
        jp["branch_resistance_sd"] = cs.precision.branch_resistance_sd;
        jp["branch_reactance_sd"] = cs.precision.branch_reactance_sd;
        j["precision"] = jp;
    }
    return j;
}

inline PowerSystemCase parse_case_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad case JSON: ") + e.what());
    }
    PowerSystemCase cs;
    cs.base_mva = j.at("base_mva").get<double>();
    cs.nominal_frequency_hz = j.value("nominal_frequency_hz", 60.0);
    for (const auto& jb : j.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
        b.active_demand = jb.at("active_demand").get<double>();
        b.reactive_demand = jb.at("reactive_demand").get<double>();
        b.base_voltage_kv = jb.value("base_voltage_kv", 0.0);
        b.voltage_setpoint = jb.value("voltage_setpoint", 1.0);
        b.shunt_conductance = jb.value("shunt_conductance", 0.0);
        b.shunt_susceptance = jb.value("shunt_susceptance", 0.0);
        cs.buses.push_back(b);
    }
    for (const auto& jb : j.value("branches", ordered_json::array())) {
        Branch br;
        br.from_bus = jb.at("from_bus").get<int>();
        br.to_bus = jb.at("to_bus").get<int>();
        br.resistance = jb.at("resistance").get<double>();
        br.reactance = jb.at("reactance").get<double>();
        br.line_charging = jb.value("line_charging", 0.0);
        br.tap_ratio = jb.value("tap_ratio", 1.0);
        br.phase_shift = jb.value("phase_shift", 0.0);
        cs.branches.push_back(br);
    }
    for (const auto& jg : j.value("generators", ordered_json::array())) {
        Generator g;
        g.bus = jg.at("bus").get<int>();
        g.active_generation = jg.at("active_generation").get<double>();
        g.reactive_generation = jg.at("reactive_generation").get<double>();
        g.voltage_setpoint = jg.value("voltage_setpoint", 1.0);
        if (jg.contains("inertia")) {
            g.inertia = jg.at("inertia").get<double>();
            g.damping = jg.at("damping").get<double>();
            g.transient_reactance = jg.at("transient_reactance").get<double>();
        }
        cs.generators.push_back(g);
    }
    if (j.contains("precision")) {
        const auto& jp = j["precision"];
        cs.precision.bus_active_sd = jp.at("bus_active_sd").get<std::vector<double>>();
        cs.precision.bus_reactive_sd = jp.at("bus_reactive_sd").get<std::vector<double>>();
        cs.precision.gen_active_sd = jp.at("gen_active_sd").get<std::vector<double>>();
        cs.precision.gen_reactive_sd = jp.at("gen_reactive_sd").get<std::vector<double>>();
        cs.precision.branch_resistance_sd =
            jp.at("branch_resistance_sd").get<std::vector<double>>();
        cs.precision.branch_reactance_sd =
            jp.at("branch_reactance_sd").get<std::vector<double>>();
    }
    cs.rebuild_index();
    cs.validate();
    return cs;
}

/// Dispatch on content: a leading '{' means the native JSON format,
/// anything else is treated as a MATPOWER case file.
inline PowerSystemCase parse_case(const std::string& text) {
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        if (ch == '{') return parse_case_json(text);
        break;
    }
    return parse_matpower(text);
}

// ---------------------------------------------------------------------------
// Dynamics sidecar

struct DynamicsRow {
    int gen_index = 0;  // 1-based, in generator file order
    double inertia = 0.0;
    double damping = 0.0;
    double transient_reactance = 0.0;
};

/// CSV with header gen_index,H,D,xd_prime; '#' lines are comments.
inline std::vector<DynamicsRow> parse_dynamics_csv(const std::string& text) {
    std::vector<DynamicsRow> rows;
    std::istringstream in(text);
    std::string line;
    bool seen_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!seen_header) {
            if (line.rfind("gen_index", 0) != 0) {
                throw ValidationError("dynamics CSV must start with header "
                                      "gen_index,H,D,xd_prime");
            }
            seen_header = true;
            continue;
        }
        std::istringstream ls(line);
        std::string f0, f1, f2, f3;
        if (!std::getline(ls, f0, ',') || !std::getline(ls, f1, ',') ||
            !std::getline(ls, f2, ',') || !std::getline(ls, f3)) {
            throw ValidationError("dynamics CSV line " + std::to_string(lineno) +
                                  ": expected 4 comma-separated fields");
        }
        try {
            rows.push_back({std::stoi(f0), std::stod(f1), std::stod(f2), std::stod(f3)});
        } catch (const std::exception&) {
            throw ValidationError("dynamics CSV line " + std::to_string(lineno) +
                                  ": bad numeric field");
        }
    }
    return rows;
}

/// Attach H/D/x'd to the generators; every generator must receive exactly
/// one row. beta follows as D/(2H).
inline PowerSystemCase merge_dynamics(PowerSystemCase cs,
                                      const std::vector<DynamicsRow>& rows) {
    std::vector<bool> seen(cs.generators.size(), false);
    for (const auto& r : rows) {
        if (r.gen_index < 1 || r.gen_index > static_cast<int>(cs.generators.size())) {
            throw ValidationError("dynamics row references generator " +
                                  std::to_string(r.gen_index) + " but the case has " +
                                  std::to_string(cs.generators.size()) + " generators");
        }
        if (seen[r.gen_index - 1]) {
            throw ValidationError("duplicate dynamics row for generator " +
                                  std::to_string(r.gen_index));
        }
        if (r.inertia <= 0.0) {
            throw ValidationError("generator " + std::to_string(r.gen_index) +
                                  ": inertia must be positive");
        }
        seen[r.gen_index - 1] = true;
        auto& g = cs.generators[r.gen_index - 1];
        g.inertia = r.inertia;
        g.damping = r.damping;
        g.transient_reactance = r.transient_reactance;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw ValidationError("missing dynamics row for generator " +
                                  std::to_string(i + 1));
        }
    }
    return cs;
}

}  // namespace gridstab
