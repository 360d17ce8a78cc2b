#include "dmap/scenario.hpp"

#include <cmath>

namespace dmap::sim {

using nlohmann::json;
using nlohmann::ordered_json;

ConfigError::ConfigError(std::string f, const std::string& why)
    : std::invalid_argument(f + ": " + why), field(std::move(f)) {}

std::string_view to_string(AdversaryStrategy s) {
    switch (s) {
        case AdversaryStrategy::None: return "None";
        case AdversaryStrategy::FabricateEvent: return "FabricateEvent";
        case AdversaryStrategy::SuppressReports: return "SuppressReports";
        case AdversaryStrategy::ReplayStale: return "ReplayStale";
    }
    return "Unknown";
}

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

const json* member(const json& j, const std::string& key) {
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? nullptr : &*it;
}

std::uint64_t as_u64(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
        throw ConfigError(path, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::uint32_t as_u32(const json& v, const std::string& path) {
    const auto x = as_u64(v, path);
    if (x > 0xFFFFFFFFull) throw ConfigError(path, "out of range");
    return static_cast<std::uint32_t>(x);
}

std::int32_t as_i32(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path, "out of range");
    return static_cast<std::int32_t>(x);
}

double as_double(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const auto x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    const auto* v = member(j, key);
    if (v == nullptr) throw ConfigError(join(path, key), "missing");
    return *v;
}

const json& require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    return j;
}

const json& require_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array");
    return j;
}

tx::GeoPoint parse_point(const json& j, const std::string& path) {
    require_object(j, path);
    tx::GeoPoint p{as_i32(require(j, "lat_micro", path), join(path, "lat_micro")),
                   as_i32(require(j, "lon_micro", path), join(path, "lon_micro"))};
    if (!p.in_range()) throw ConfigError(path, "coordinates out of range");
    return p;
}

tx::Interval parse_interval(const json& j, const std::string& path) {
    require_array(j, path);
    if (j.size() != 2) throw ConfigError(path, "expected [start, end]");
    return {as_u64(j[0], index_path(path, 0)), as_u64(j[1], index_path(path, 1))};
}

tx::EventKind parse_kind(const json& j, const std::string& key, const std::string& path) {
    const auto kpath = join(path, key);
    tx::EventKind k;
    try {
        k.code = tx::parse_event_code(as_string(require(j, key, path), kpath));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(kpath, e.what());
    }
    if (k.code == tx::EventCode::TrafficSpeed) {
        const auto* s = member(j, "speed_kmh");
        if (s == nullptr) throw ConfigError(join(path, "speed_kmh"), "missing for TrafficSpeed");
        k.speed_kmh = as_u32(*s, join(path, "speed_kmh"));
    }
    return k;
}

std::vector<RegionId> parse_regions(const json& j, const std::string& path) {
    require_array(j, path);
    std::vector<RegionId> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_u32(j[i], index_path(path, i)));
    return out;
}

tx::DataScope parse_scope(const json& j, const std::string& path) {
    require_object(j, path);
    tx::DataScope s;
    s.regions = parse_regions(require(j, "regions", path), join(path, "regions"));
    s.period = parse_interval(require(j, "period", path), join(path, "period"));
    const auto* kinds = member(j, "kinds");
    if (kinds == nullptr) {
        s.kinds.assign(std::begin(tx::kAllEventCodes), std::end(tx::kAllEventCodes));
    } else {
        const auto kpath = join(path, "kinds");
        require_array(*kinds, kpath);
        for (std::size_t i = 0; i < kinds->size(); ++i) {
            try {
                s.kinds.push_back(tx::parse_event_code(as_string((*kinds)[i], index_path(kpath, i))));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::invalid_argument& e) {
                throw ConfigError(index_path(kpath, i), e.what());
            }
        }
    }
    return s;
}

MarketAction parse_action(const json& j, const std::string& path) {
    require_object(j, path);
    MarketAction a;
    a.at_ms = as_u64(require(j, "at_ms", path), join(path, "at_ms"));
    const auto type = as_string(require(j, "type", path), join(path, "type"));
    if (const auto* l = member(j, "label")) a.label = as_string(*l, join(path, "label"));
    if (type == "create_contract") {
        a.type = ActionType::CreateContract;
        a.owner = as_u32(require(j, "owner", path), join(path, "owner"));
        a.grantee = as_string(require(j, "grantee", path), join(path, "grantee"));
        a.timespan = parse_interval(require(j, "timespan", path), join(path, "timespan"));
        a.scope = parse_scope(require(j, "scope", path), join(path, "scope"));
        if (const auto* p = member(j, "price")) a.price = as_u64(*p, join(path, "price"));
    } else if (type == "data_request") {
        a.type = ActionType::DataRequest;
        a.sp = as_string(require(j, "sp", path), join(path, "sp"));
        const auto& area = require_object(require(j, "area", path), join(path, "area"));
        a.area.min = parse_point(require(area, "min", join(path, "area")), join(path, "area.min"));
        a.area.max = parse_point(require(area, "max", join(path, "area")), join(path, "area.max"));
        a.period = parse_interval(require(j, "period", path), join(path, "period"));
        a.target_regions =
            parse_regions(require(j, "target_regions", path), join(path, "target_regions"));
    } else if (type == "access") {
        a.type = ActionType::Access;
        a.sp = as_string(require(j, "sp", path), join(path, "sp"));
        a.query = parse_scope(require(j, "query", path), join(path, "query"));
        const auto* g = member(j, "grant");
        const auto gpath = join(path, "grant");
        if (g == nullptr) {
            a.grant = GrantSpecType::None;
        } else {
            require_object(*g, gpath);
            if (const auto* c = member(*g, "contract")) {
                a.grant = GrantSpecType::Contract;
                a.contract = as_string(*c, join(gpath, "contract"));
            } else if (const auto* o = member(*g, "owner_sig")) {
                a.grant = GrantSpecType::OwnerSig;
                a.grant_owner = as_u32(*o, join(gpath, "owner_sig"));
            } else {
                throw ConfigError(gpath, "expected {\"contract\": label} or {\"owner_sig\": vehicle}");
            }
        }
    } else {
        throw ConfigError(join(path, "type"), "unknown action type '" + type + "'");
    }
    return a;
}

ordered_json point_json(const tx::GeoPoint& p) {
    return {{"lat_micro", p.lat_micro}, {"lon_micro", p.lon_micro}};
}

ordered_json interval_json(const tx::Interval& i) { return ordered_json::array({i.start, i.end}); }

ordered_json scope_json(const tx::DataScope& s) {
    ordered_json kinds = ordered_json::array();
    for (auto k : s.kinds) kinds.push_back(tx::to_string(k));
    return {{"regions", s.regions}, {"period", interval_json(s.period)}, {"kinds", kinds}};
}

void kind_json(ordered_json& j, const tx::EventKind& k) {
    j["kind"] = tx::to_string(k.code);
    if (k.code == tx::EventCode::TrafficSpeed) j["speed_kmh"] = k.speed_kmh;
}

}  // namespace

ScenarioConfig config_from_json(const json& j) {
    require_object(j, "");
    ScenarioConfig c;
    if (const auto* v = member(j, "seed")) c.seed = as_u64(*v, "seed");
    if (const auto* v = member(j, "scheme")) c.scheme = as_string(*v, "scheme");

    const auto& grid = require_object(require(j, "grid", ""), "grid");
    c.grid.rows = as_u32(require(grid, "rows", "grid"), "grid.rows");
    c.grid.cols = as_u32(require(grid, "cols", "grid"), "grid.cols");
    c.grid.cell_size_m = as_double(require(grid, "cell_size_m", "grid"), "grid.cell_size_m");
    if (const auto* o = member(grid, "origin")) c.grid.origin = parse_point(*o, "grid.origin");

    const auto& veh = require_object(require(j, "vehicles", ""), "vehicles");
    c.vehicles.count = as_u32(require(veh, "count", "vehicles"), "vehicles.count");
    if (const auto* v = member(veh, "speed_min_mps")) {
        c.vehicles.speed_min_mps = as_double(*v, "vehicles.speed_min_mps");
    }
    if (const auto* v = member(veh, "speed_max_mps")) {
        c.vehicles.speed_max_mps = as_double(*v, "vehicles.speed_max_mps");
    }
    if (const auto* v = member(veh, "key_reuse_vehicles")) {
        c.vehicles.key_reuse_vehicles = parse_regions(*v, "vehicles.key_reuse_vehicles");
    }

    c.duration_ms = as_u64(require(j, "duration_ms", ""), "duration_ms");
    if (const auto* v = member(j, "window_ms")) c.window_ms = as_u64(*v, "window_ms");
    if (const auto* v = member(j, "sensing_radius_m")) {
        c.sensing_radius_m = as_double(*v, "sensing_radius_m");
    }
    if (const auto* v = member(j, "noise_sigma_m")) c.noise_sigma_m = as_double(*v, "noise_sigma_m");

    if (const auto* cons = member(j, "consistency")) {
        require_object(*cons, "consistency");
        if (const auto* v = member(*cons, "eps_distance_m")) {
            c.consistency.eps_distance_m = as_double(*v, "consistency.eps_distance_m");
        }
        if (const auto* v = member(*cons, "eps_time_ms")) {
            c.consistency.eps_time_ms = as_u64(*v, "consistency.eps_time_ms");
        }
        if (const auto* v = member(*cons, "min_corroboration")) {
            c.consistency.min_corroboration = as_u64(*v, "consistency.min_corroboration");
        }
    }
    if (const auto* miner = member(j, "miner")) {
        require_object(*miner, "miner");
        if (const auto* v = member(*miner, "m")) c.miner_m = as_u64(*v, "miner.m");
    }
    if (const auto* v = member(j, "uncertified_regions")) {
        c.uncertified_regions = parse_regions(*v, "uncertified_regions");
    }
    if (const auto* evs = member(j, "ground_truth_events")) {
        require_array(*evs, "ground_truth_events");
        for (std::size_t i = 0; i < evs->size(); ++i) {
            const auto path = index_path("ground_truth_events", i);
            const auto& e = require_object((*evs)[i], path);
            GroundTruthEvent g;
            g.region = as_u32(require(e, "region", path), join(path, "region"));
            g.loc = parse_point(require(e, "loc", path), join(path, "loc"));
            g.kind = parse_kind(e, "kind", path);
            g.active = parse_interval(require(e, "active", path), join(path, "active"));
            c.ground_truth_events.push_back(g);
        }
    }
    if (const auto* adv = member(j, "adversary")) {
        require_object(*adv, "adversary");
        if (const auto* v = member(*adv, "fraction")) {
            c.adversary.fraction = as_double(*v, "adversary.fraction");
        }
        if (const auto* s = member(*adv, "strategy")) {
            const auto& st = require_object(*s, "adversary.strategy");
            const auto type = as_string(require(st, "type", "adversary.strategy"),
                                        "adversary.strategy.type");
            if (type == "FabricateEvent") {
                c.adversary.strategy = AdversaryStrategy::FabricateEvent;
                c.adversary.fabricated_kind = parse_kind(st, "kind", "adversary.strategy");
                c.adversary.target = parse_point(require(st, "loc", "adversary.strategy"),
                                                 "adversary.strategy.loc");
            } else if (type == "SuppressReports") {
                c.adversary.strategy = AdversaryStrategy::SuppressReports;
            } else if (type == "ReplayStale") {
                c.adversary.strategy = AdversaryStrategy::ReplayStale;
            } else if (type == "None") {
                c.adversary.strategy = AdversaryStrategy::None;
            } else {
                throw ConfigError("adversary.strategy.type", "unknown strategy '" + type + "'");
            }
        }
        if (const auto* p = member(*adv, "placement")) {
            const auto placement = as_string(*p, "adversary.placement");
            if (placement == "uniform") {
                c.adversary.placement = AdversaryPlacement::Uniform;
            } else if (placement == "at_target") {
                c.adversary.placement = AdversaryPlacement::AtTarget;
            } else {
                throw ConfigError("adversary.placement", "expected 'uniform' or 'at_target'");
            }
        }
    }
    if (const auto* op = member(j, "owner_policy")) {
        require_object(*op, "owner_policy");
        if (const auto* v = member(*op, "auto_grant_probability")) {
            c.owner_policy.auto_grant_probability =
                as_double(*v, "owner_policy.auto_grant_probability");
        }
        if (const auto* v = member(*op, "price")) c.owner_policy.price = as_u64(*v, "owner_policy.price");
        if (const auto* v = member(*op, "grant_duration_ms")) {
            c.owner_policy.grant_duration_ms = as_u64(*v, "owner_policy.grant_duration_ms");
        }
    }
    if (const auto* ms = member(j, "market_script")) {
        require_array(*ms, "market_script");
        for (std::size_t i = 0; i < ms->size(); ++i) {
            c.market_script.push_back(parse_action((*ms)[i], index_path("market_script", i)));
        }
    }
    c.validate();
    return c;
}

void ScenarioConfig::validate() const {
    try {
        (void)crypto::scheme_by_name(scheme);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("scheme", e.what());
    }
    if (grid.rows == 0) throw ConfigError("grid.rows", "must be positive");
    if (grid.cols == 0) throw ConfigError("grid.cols", "must be positive");
    if (!(grid.cell_size_m > 0.0)) throw ConfigError("grid.cell_size_m", "must be positive");
    if (vehicles.speed_min_mps < 0.0) throw ConfigError("vehicles.speed_min_mps", "must be >= 0");
    if (vehicles.speed_max_mps < vehicles.speed_min_mps) {
        throw ConfigError("vehicles.speed_max_mps", "must be >= speed_min_mps");
    }
    for (std::size_t i = 0; i < vehicles.key_reuse_vehicles.size(); ++i) {
        if (vehicles.key_reuse_vehicles[i] >= vehicles.count) {
            throw ConfigError(index_path("vehicles.key_reuse_vehicles", i), "no such vehicle");
        }
    }
    if (duration_ms == 0) throw ConfigError("duration_ms", "must be positive");
    if (window_ms == 0) throw ConfigError("window_ms", "must be positive");
    if (window_ms % kTickMs != 0) throw ConfigError("window_ms", "must be a multiple of 100");
    if (!(sensing_radius_m > 0.0)) throw ConfigError("sensing_radius_m", "must be positive");
    if (noise_sigma_m < 0.0) throw ConfigError("noise_sigma_m", "must be >= 0");
    try {
        consistency.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("consistency.") + e.what(), "invalid");
    }
    if (miner_m == 0) throw ConfigError("miner.m", "must be >= 1");
    for (std::size_t i = 0; i < uncertified_regions.size(); ++i) {
        if (uncertified_regions[i] >= region_count()) {
            throw ConfigError(index_path("uncertified_regions", i), "no such region");
        }
    }
    for (std::size_t i = 0; i < ground_truth_events.size(); ++i) {
        const auto path = index_path("ground_truth_events", i);
        const auto& e = ground_truth_events[i];
        if (e.region >= region_count()) throw ConfigError(join(path, "region"), "no such region");
        if (e.active.empty()) throw ConfigError(join(path, "active"), "must satisfy start < end");
    }
    if (!(adversary.fraction >= 0.0 && adversary.fraction <= 1.0)) {
        throw ConfigError("adversary.fraction", "must lie in [0, 1]");
    }
    if (adversary.placement == AdversaryPlacement::AtTarget &&
        adversary.strategy != AdversaryStrategy::FabricateEvent) {
        throw ConfigError("adversary.placement", "at_target needs a FabricateEvent target");
    }
    if (!(owner_policy.auto_grant_probability >= 0.0 &&
          owner_policy.auto_grant_probability <= 1.0)) {
        throw ConfigError("owner_policy.auto_grant_probability", "must lie in [0, 1]");
    }
    for (std::size_t i = 0; i < market_script.size(); ++i) {
        const auto path = index_path("market_script", i);
        const auto& a = market_script[i];
        if (a.type == ActionType::CreateContract && a.owner >= vehicles.count) {
            throw ConfigError(join(path, "owner"), "no such vehicle");
        }
        if (a.type == ActionType::Access && a.grant == GrantSpecType::OwnerSig &&
            a.grant_owner >= vehicles.count) {
            throw ConfigError(join(path, "grant.owner_sig"), "no such vehicle");
        }
    }
}

ordered_json config_to_json(const ScenarioConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["scheme"] = c.scheme;
    j["grid"] = {{"rows", c.grid.rows},
                 {"cols", c.grid.cols},
                 {"cell_size_m", c.grid.cell_size_m},
                 {"origin", point_json(c.grid.origin)}};
    j["vehicles"] = {{"count", c.vehicles.count},
                     {"speed_min_mps", c.vehicles.speed_min_mps},
                     {"speed_max_mps", c.vehicles.speed_max_mps},
                     {"key_reuse_vehicles", c.vehicles.key_reuse_vehicles}};
    j["duration_ms"] = c.duration_ms;
    j["window_ms"] = c.window_ms;
    j["sensing_radius_m"] = c.sensing_radius_m;
    j["noise_sigma_m"] = c.noise_sigma_m;
    j["consistency"] = {{"eps_distance_m", c.consistency.eps_distance_m},
                        {"eps_time_ms", c.consistency.eps_time_ms},
                        {"min_corroboration", c.consistency.min_corroboration}};
    j["miner"] = {{"m", c.miner_m}};
    j["uncertified_regions"] = c.uncertified_regions;
    auto events = ordered_json::array();
    for (const auto& e : c.ground_truth_events) {
        ordered_json je;
        je["region"] = e.region;
        je["loc"] = point_json(e.loc);
        kind_json(je, e.kind);
        je["active"] = interval_json(e.active);
        events.push_back(std::move(je));
    }
    j["ground_truth_events"] = events;
    ordered_json adv;
    adv["fraction"] = c.adversary.fraction;
    ordered_json strategy;
    strategy["type"] = to_string(c.adversary.strategy);
    if (c.adversary.strategy == AdversaryStrategy::FabricateEvent) {
        kind_json(strategy, c.adversary.fabricated_kind);
        strategy["loc"] = point_json(c.adversary.target);
    }
    adv["strategy"] = strategy;
    adv["placement"] = c.adversary.placement == AdversaryPlacement::AtTarget ? "at_target" : "uniform";
    j["adversary"] = adv;
    j["owner_policy"] = {{"auto_grant_probability", c.owner_policy.auto_grant_probability},
                         {"price", c.owner_policy.price},
                         {"grant_duration_ms", c.owner_policy.grant_duration_ms}};
    auto script = ordered_json::array();
    for (const auto& a : c.market_script) {
        ordered_json ja;
        ja["at_ms"] = a.at_ms;
        ja["label"] = a.label;
        switch (a.type) {
            case ActionType::CreateContract:
                ja["type"] = "create_contract";
                ja["owner"] = a.owner;
                ja["grantee"] = a.grantee;
                ja["timespan"] = interval_json(a.timespan);
                ja["scope"] = scope_json(a.scope);
                ja["price"] = a.price;
                break;
            case ActionType::DataRequest:
                ja["type"] = "data_request";
                ja["sp"] = a.sp;
                ja["area"] = {{"min", point_json(a.area.min)}, {"max", point_json(a.area.max)}};
                ja["period"] = interval_json(a.period);
                ja["target_regions"] = a.target_regions;
                break;
            case ActionType::Access:
                ja["type"] = "access";
                ja["sp"] = a.sp;
                ja["query"] = scope_json(a.query);
                if (a.grant == GrantSpecType::Contract) {
                    ja["grant"] = {{"contract", a.contract}};
                } else if (a.grant == GrantSpecType::OwnerSig) {
                    ja["grant"] = {{"owner_sig", a.grant_owner}};
                } else {
                    ja["grant"] = nullptr;
                }
                break;
        }
        script.push_back(std::move(ja));
    }
    j["market_script"] = script;
    return j;
}

}  // namespace dmap::sim
