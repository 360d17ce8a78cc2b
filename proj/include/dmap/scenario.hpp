#pragma once

// Declarative scenario input for the simulator. The JSON schema mirrors the
// struct field names one to one.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmap/edge.hpp"
#include "dmap/txmodel.hpp"

namespace dmap::sim {

/// Invalid scenario; `field` is the dotted JSON path of the culprit.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& why);
    std::string field;
};

struct GridConfig {
    std::uint32_t rows = 1;
    std::uint32_t cols = 1;
    double cell_size_m = 500.0;
    /// South-west corner of the grid.
    tx::GeoPoint origin;
};

struct VehicleConfig {
    std::uint32_t count = 0;
    double speed_min_mps = 5.0;
    double speed_max_mps = 15.0;
    /// Deliberately misconfigured vehicles that sign every report with the
    /// same key. Only for exercising the linkability detector.
    std::vector<std::uint32_t> key_reuse_vehicles;
};

struct GroundTruthEvent {
    RegionId region = 0;
    tx::GeoPoint loc;
    tx::EventKind kind;
    tx::Interval active;
};

enum class AdversaryStrategy { None, FabricateEvent, SuppressReports, ReplayStale };
enum class AdversaryPlacement { Uniform, AtTarget };

struct AdversaryConfig {
    double fraction = 0.0;
    AdversaryStrategy strategy = AdversaryStrategy::None;
    /// FabricateEvent only.
    tx::EventKind fabricated_kind = tx::EventKind::clear();
    tx::GeoPoint target;
    /// AtTarget parks adversaries inside the sensing radius of the target.
    AdversaryPlacement placement = AdversaryPlacement::Uniform;
};

struct OwnerPolicy {
    /// Probability that a vehicle observing a data request grants it.
    double auto_grant_probability = 0.0;
    std::uint64_t price = 0;
    std::uint64_t grant_duration_ms = 60'000;
};

enum class ActionType { CreateContract, DataRequest, Access };

enum class GrantSpecType { None, Contract, OwnerSig };

struct MarketAction {
    std::uint64_t at_ms = 0;
    ActionType type = ActionType::Access;
    std::string label;

    // CreateContract
    std::uint32_t owner = 0;
    std::string grantee;
    tx::Interval timespan;
    tx::DataScope scope;
    std::uint64_t price = 0;

    // DataRequest
    std::string sp;
    tx::GeoBox area;
    tx::Interval period;
    std::vector<RegionId> target_regions;

    // Access (requester is `sp`)
    tx::DataScope query;
    GrantSpecType grant = GrantSpecType::None;
    /// Contract label for GrantSpecType::Contract.
    std::string contract;
    /// Owner vehicle for GrantSpecType::OwnerSig.
    std::uint32_t grant_owner = 0;
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    std::string scheme = "ed25519";
    GridConfig grid;
    VehicleConfig vehicles;
    std::uint64_t duration_ms = 60'000;
    std::uint64_t window_ms = edge::kDefaultWindowMs;
    double sensing_radius_m = 100.0;
    double noise_sigma_m = 5.0;
    edge::ConsistencyPolicy consistency;
    std::size_t miner_m = 2;
    std::vector<RegionId> uncertified_regions;
    std::vector<GroundTruthEvent> ground_truth_events;
    AdversaryConfig adversary;
    OwnerPolicy owner_policy;
    std::vector<MarketAction> market_script;

    [[nodiscard]] std::uint32_t region_count() const { return grid.rows * grid.cols; }
    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

inline constexpr std::uint64_t kTickMs = 100;

/// Throws ConfigError on missing, mistyped or invalid fields.
ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ScenarioConfig& c);

std::string_view to_string(AdversaryStrategy s);

}  // namespace dmap::sim
