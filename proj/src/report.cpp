#include "dmap/report.hpp"

#include <fstream>

namespace dmap::report {

nlohmann::ordered_json build_run_report(const sim::World& world,
                                        std::optional<std::uint64_t> runtime_ms) {
    nlohmann::ordered_json j;
    j["seed"] = world.config().seed;
    j["scheme"] = world.config().scheme;
    j["config"] = sim::config_to_json(world.config());
    j["metrics"] = sim::to_json(world.metrics());

    auto ledgers = nlohmann::ordered_json::array();
    for (const auto& [region, l] : world.ledgers().ledgers()) {
        nlohmann::ordered_json e;
        e["region"] = region;
        e["height"] = l.tip().height;
        e["tip"] = to_hex(l.tip().block_hash.bytes);
        ledgers.push_back(std::move(e));
    }
    j["ledgers"] = ledgers;

    auto invariants = nlohmann::ordered_json::array();
    bool all_ok = true;
    for (const auto& r : world.invariants()) {
        nlohmann::ordered_json e;
        e["name"] = r.name;
        e["ok"] = r.ok;
        if (!r.ok) e["detail"] = r.detail;
        all_ok = all_ok && r.ok;
        invariants.push_back(std::move(e));
    }
    j["invariants"] = invariants;
    j["invariants_ok"] = all_ok;

    auto market = nlohmann::ordered_json::array();
    for (const auto& o : world.market_outcomes()) {
        nlohmann::ordered_json e;
        e["label"] = o.label;
        e["time_ms"] = o.time_ms;
        e["result"] = o.result;
        e["records"] = o.records;
        market.push_back(std::move(e));
    }
    j["market"] = market;

    if (runtime_ms) j["runtime_ms"] = *runtime_ms;
    return j;
}

void emit_report(const nlohmann::ordered_json& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw WriteError("cannot open " + path.string() + " for writing");
    out << report.dump(2) << '\n';
    out.flush();
    if (!out) throw WriteError("write to " + path.string() + " failed");
}

}  // namespace dmap::report
