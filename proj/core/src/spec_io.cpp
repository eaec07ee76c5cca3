#include "qlab/spec_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "qlab/error.hpp"

namespace qlab {

using nlohmann::json;

std::string spec_to_json(const CircuitSpec& spec) {
    json modes = json::array();
    std::map<std::string, int> seen;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& m = spec.modes()[i];
        if (seen[m.label]++) throw InvalidInput(fmt::format("spec_to_json: duplicate label '{}'", m.label));
        json jm = {{"label", m.label}, {"component", m.component}, {"scale", m.scale}};
        if (spec.dissipation()[i] != 0.0) jm["nu"] = spec.dissipation()[i];
        if (spec.amplifier_seeded(i)) jm["seeded"] = true;
        modes.push_back(std::move(jm));
    }
    json terms = json::array();
    for (const auto& t : spec.terms()) {
        terms.push_back({{"out", t.out.label}, {"in1", t.in1.label}, {"in2", t.in2.label}, {"coeff", t.coeff}});
    }
    return json{{"modes", modes}, {"terms", terms}}.dump(2) + "\n";
}

CircuitSpec spec_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput(fmt::format("spec: {}", e.what()));
    }
    try {
        std::vector<ModeId> modes;
        std::map<std::string, ModeId> by_label;
        std::map<ModeKey, double> nu;
        std::set<ModeKey> seeded;
        for (const auto& jm : doc.at("modes")) {
            ModeId m{jm.at("label").get<std::string>(), jm.at("component").get<int>(), jm.at("scale").get<int>()};
            if (!by_label.emplace(m.label, m).second) throw InvalidInput(fmt::format("spec: duplicate label '{}'", m.label));
            if (jm.contains("nu")) nu[m.key()] = jm.at("nu").get<double>();
            if (jm.value("seeded", false)) seeded.insert(m.key());
            modes.push_back(std::move(m));
        }
        auto mode = [&](const json& j) {
            const auto label = j.get<std::string>();
            const auto it = by_label.find(label);
            if (it == by_label.end()) throw InvalidInput(fmt::format("spec: term references unknown mode '{}'", label));
            return it->second;
        };
        std::vector<InteractionTerm> terms;
        for (const auto& jt : doc.at("terms")) {
            terms.push_back({mode(jt.at("out")), mode(jt.at("in1")), mode(jt.at("in2")), jt.at("coeff").get<double>()});
        }
        return CircuitSpec(std::move(modes), std::move(terms), nu, seeded);
    } catch (const json::exception& e) {
        throw InvalidInput(fmt::format("spec: {}", e.what()));
    }
}

CircuitSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput(fmt::format("cannot open spec file '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return spec_from_json(ss.str());
}

std::string cancellation_report_json(const CancellationReport& report, double numeric_residual) {
    json v = json::array();
    for (const auto& t : report.violating_triples) {
        v.push_back({{"modes", {t.modes[0].label, t.modes[1].label, t.modes[2].label}},
                     {"coeff_sum", t.coeff_sum},
                     {"relative", t.relative}});
    }
    return json{{"pass", report.pass},
                {"max_residual", report.max_residual},
                {"numeric_residual", numeric_residual},
                {"violating_triples", v}}
               .dump(2) +
           "\n";
}

}  // namespace qlab
