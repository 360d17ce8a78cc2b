#pragma once

// Deterministic discrete-event world: mobile vehicles, one certified RSI per
// grid cell, adversaries, the marketplace, and end-of-run metrics and
// invariant sweeps.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmap/edge.hpp"
#include "dmap/ledger.hpp"
#include "dmap/market.hpp"
#include "dmap/scenario.hpp"

namespace dmap::sim {

/// Stateless counter-based generator: every draw is a pure function of
/// (seed, entity, counter), so results do not depend on processing order.
class CounterRng {
public:
    static std::uint64_t draw(std::uint64_t seed, std::uint64_t entity, std::uint64_t counter);
    static double uniform01(std::uint64_t seed, std::uint64_t entity, std::uint64_t counter);
};

/// A per-entity stream over CounterRng.
class EntityRng {
public:
    EntityRng(std::uint64_t seed, std::uint64_t entity) : seed_(seed), entity_(entity) {}

    std::uint64_t next_u64() { return CounterRng::draw(seed_, entity_, counter_++); }
    double uniform01() { return CounterRng::uniform01(seed_, entity_, counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    /// Box-Muller; consumes two draws.
    double gaussian();
    [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t entity_;
    std::uint64_t counter_ = 0;
};

enum class Origin { Honest, Fabricated, Replay };

std::string_view to_string(Origin o);

struct BufferedReport {
    tx::DataTransaction report;
    Origin origin = Origin::Honest;
    std::optional<std::size_t> event;
};

struct Vehicle {
    std::uint32_t id = 0;
    bool honest = true;
    crypto::Seed master_seed{};
    crypto::KeyPair grant_key;
    double x_m = 0.0;
    double y_m = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double speed = 0.0;
    std::uint64_t key_counter = 0;
    bool reuse_keys = false;
    edge::Association association;
    RegionId physical_region = 0;
    /// Last window in which each ground-truth event (and, at the end, the
    /// adversary target) was reported.
    std::vector<std::optional<std::uint64_t>> last_report_window;
    std::optional<std::uint64_t> last_replay_window;
    std::vector<BufferedReport> buffered;
    EntityRng rng{0, 0};
};


/// Everything an RSI was handed, with ground truth the protocol never sees.
struct Delivery {
    std::uint64_t time_ms = 0;
    RegionId region = 0;
    std::uint32_t vehicle = 0;
    Origin origin = Origin::Honest;
    tx::DataTransaction report;
    edge::IngestResult result = edge::IngestResult::Buffered;
    std::uint64_t window_id = 0;
    /// Index of the ground-truth event for honest reports.
    std::optional<std::size_t> event;
};

/// What an RSI emitted when a window closed and what the miners said.
struct Emission {
    RegionId region = 0;
    std::uint64_t window_id = 0;
    tx::RsiTransaction tx;
    tx::Verdict verdict;
};

struct RegionMetrics {
    RegionId region = 0;
    edge::WindowStats stats;
    std::uint64_t miner_rejects = 0;
    std::uint64_t height = 0;
    std::uint64_t records_stored = 0;
};

struct Metrics {
    std::vector<RegionMetrics> regions;
    edge::WindowStats totals;
    std::uint64_t miner_rejects = 0;
    std::uint64_t false_data_chained = 0;
    std::uint64_t false_data_injected = 0;
    double detection_rate = 1.0;
    std::uint64_t linkability_violations = 0;
    std::uint64_t access_granted = 0;
    std::uint64_t access_denied = 0;
    std::uint64_t unauthorized_served = 0;
    std::uint64_t records_served = 0;
    std::uint64_t contracts_chained = 0;
    std::uint64_t requests_observed = 0;
    std::uint64_t handovers = 0;
    std::uint64_t buffered_undelivered = 0;
};

nlohmann::ordered_json to_json(const Metrics& m);

struct LinkabilityReport {
    std::uint64_t violations = 0;
    std::vector<std::uint32_t> flagged_vehicles;
    std::uint64_t reports_scanned = 0;
};

struct InvariantResult {
    std::string name;
    bool ok = true;
    std::string detail;
};

class InvariantViolation : public std::runtime_error {
public:
    explicit InvariantViolation(std::vector<InvariantResult> results);
    std::vector<InvariantResult> results;
};

struct MarketOutcome {
    std::size_t action = 0;
    std::string label;
    std::uint64_t time_ms = 0;
    /// "submitted", "granted", "denied:<reason>", "rejected:<reason>", ...
    std::string result;
    std::uint64_t records = 0;
};

class World {
public:
    /// Throws ConfigError.
    static World load(const ScenarioConfig& config);

    World(World&&) noexcept = default;
    World& operator=(World&&) noexcept = default;
    World(const World&) = delete;
    World& operator=(const World&) = delete;
    ~World();

    void step();
    [[nodiscard]] bool finished() const { return finalized_; }

    /// Steps to the end, then computes metrics and runs every invariant
    /// sweep. Throws InvariantViolation if any sweep fails; metrics() and
    /// invariants() stay available either way.
    Metrics run();

    [[nodiscard]] const ScenarioConfig& config() const { return config_; }
    [[nodiscard]] std::uint64_t clock_ms() const { return clock_; }
    [[nodiscard]] const crypto::SignatureScheme& scheme() const { return *scheme_; }
    [[nodiscard]] const std::vector<Vehicle>& vehicles() const { return vehicles_; }
    [[nodiscard]] const std::map<RegionId, edge::RsiState>& rsis() const { return rsis_; }
    [[nodiscard]] const ledger::LedgerSet& ledgers() const { return *ledgers_; }
    [[nodiscard]] const market::RuleTable& rule_table() const { return *rule_table_; }
    [[nodiscard]] const std::vector<Delivery>& deliveries() const { return deliveries_; }
    [[nodiscard]] const std::vector<Emission>& emissions() const { return emissions_; }
    [[nodiscard]] const std::vector<MarketOutcome>& market_outcomes() const { return outcomes_; }
    [[nodiscard]] const std::vector<GroundTruthEvent>& events() const { return events_; }
    [[nodiscard]] const Metrics& metrics() const { return metrics_; }
    [[nodiscard]] const std::vector<InvariantResult>& invariants() const { return invariants_; }
    [[nodiscard]] std::uint64_t handover_count() const { return handovers_; }
    [[nodiscard]] const crypto::KeyPair& ca_key() const { return ca_key_; }

    /// Vehicle that produced a report key, from the simulator's private map.
    [[nodiscard]] std::optional<std::uint32_t> vehicle_of(const crypto::PublicKey& pk) const;
    [[nodiscard]] const crypto::KeyPair& sp_key(const std::string& name);
    [[nodiscard]] RegionId region_at(double x_m, double y_m) const;
    [[nodiscard]] tx::GeoPoint geo_of(double x_m, double y_m) const;
    [[nodiscard]] std::pair<double, double> local_of(const tx::GeoPoint& p) const;

    /// Soft handover of one vehicle between regions.
    void handover(std::uint32_t vehicle, RegionId from, RegionId to);

    /// Whether a chained payload agrees with some ground-truth event.
    [[nodiscard]] bool consistent_with_ground_truth(const tx::Payload& p) const;

    /// SHA-256 over the complete mutable state; equal digests mean equal worlds.
    [[nodiscard]] crypto::Digest state_digest() const;

    /// Test hook: place a vehicle and zero its velocity.
    void place_vehicle(std::uint32_t vehicle, double x_m, double y_m, double vx = 0.0,
                       double vy = 0.0);

private:
    World() = default;

    void window_boundary(std::uint64_t t);
    void fire_market_actions(std::uint64_t t);
    void move_vehicles();
    void emit_reports(std::uint64_t t);
    void flush_buffer(Vehicle& v, std::uint64_t t);
    void deliver(Vehicle& v, const tx::DataTransaction& report, Origin origin,
                 std::optional<std::size_t> event, std::uint64_t t);
    void ingest_at(RegionId region, Vehicle& v, const tx::DataTransaction& report, Origin origin,
                   std::optional<std::size_t> event, std::uint64_t t);
    crypto::KeyPair next_report_key(Vehicle& v);
    void observe_requests(std::uint64_t t);
    void run_market_action(std::size_t index, std::uint64_t t);
    void audit_grant(const tx::AccessTransaction& access, const market::Granted& granted,
                     std::uint64_t t);
    void finalize();
    void compute_metrics();
    void sweep_invariants();

    ScenarioConfig config_;
    const crypto::SignatureScheme* scheme_ = nullptr;
    std::uint64_t clock_ = 0;
    bool finalized_ = false;

    crypto::KeyPair ca_key_;
    crypto::KeyPair ruletable_key_;
    std::vector<GroundTruthEvent> events_;
    std::optional<tx::GeoPoint> fabricated_target_;
    std::vector<Vehicle> vehicles_;
    std::map<RegionId, edge::RsiState> rsis_;
    std::unique_ptr<ledger::LedgerSet> ledgers_;
    std::unique_ptr<market::RuleTable> rule_table_;
    std::shared_ptr<std::map<crypto::PublicKey, crypto::PublicKey>> owner_of_key_;
    std::map<crypto::PublicKey, std::uint32_t> vehicle_of_key_;
    std::map<std::string, crypto::KeyPair> sp_keys_;

    std::vector<Delivery> deliveries_;
    std::vector<Emission> emissions_;
    std::map<RegionId, std::uint64_t> miner_rejects_;
    std::uint64_t handovers_ = 0;
    std::uint64_t fabricated_created_ = 0;
    std::uint64_t store_failures_ = 0;

    std::vector<std::size_t> script_order_;
    std::size_t next_action_ = 0;
    std::map<std::string, crypto::Digest> contract_labels_;
    struct PendingRequest {
        std::string label;
        tx::DataRequestTransaction request;
        std::vector<RegionId> targets;
    };
    std::vector<PendingRequest> pending_requests_;
    std::uint64_t requests_observed_ = 0;
    std::uint64_t unauthorized_served_ = 0;
    std::vector<MarketOutcome> outcomes_;

    Metrics metrics_;
    std::vector<InvariantResult> invariants_;
};

/// Loads and validates a scenario; same config, same world.
World load_scenario(const ScenarioConfig& config);

Metrics run(World& world);

LinkabilityReport compute_linkability(const World& world);

}  // namespace dmap::sim
