#include "dmap/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace dmap::sim {

namespace {

constexpr std::uint64_t kWorldEntity = 1ull << 40;

// Key derivation domains for seed_from_u64.
constexpr std::uint64_t kCaDomain = 1;
constexpr std::uint64_t kRsiDomain = 2;
constexpr std::uint64_t kRuleTableDomain = 3;
constexpr std::uint64_t kVehicleDomain = 4;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

crypto::Seed tagged_seed(std::string_view tag, const crypto::Seed& base) {
    Bytes buf(tag.begin(), tag.end());
    buf.insert(buf.end(), base.begin(), base.end());
    return crypto::sha256(buf).bytes;
}

}  // namespace

std::uint64_t CounterRng::draw(std::uint64_t seed, std::uint64_t entity, std::uint64_t counter) {
    return splitmix(seed ^ splitmix(entity ^ splitmix(counter)));
}

double CounterRng::uniform01(std::uint64_t seed, std::uint64_t entity, std::uint64_t counter) {
    return static_cast<double>(draw(seed, entity, counter) >> 11) * 0x1.0p-53;
}

double EntityRng::gaussian() {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string_view to_string(Origin o) {
    switch (o) {
        case Origin::Honest: return "honest";
        case Origin::Fabricated: return "fabricated";
        case Origin::Replay: return "replay";
    }
    return "unknown";
}

InvariantViolation::InvariantViolation(std::vector<InvariantResult> r)
    : std::runtime_error([&r] {
          std::string msg = "invariant violation:";
          for (const auto& x : r) {
              if (!x.ok) msg += " " + x.name;
          }
          return msg;
      }()),
      results(std::move(r)) {}

World::~World() = default;

// --- construction ----------------------------------------------------------------

World World::load(const ScenarioConfig& config) {
    config.validate();
    World w;
    w.config_ = config;
    w.scheme_ = &crypto::scheme_by_name(config.scheme);
    const auto& scheme = *w.scheme_;
    const auto seed = config.seed;

    w.ca_key_ = scheme.generate_keypair(crypto::seed_from_u64(seed, kCaDomain));
    w.ruletable_key_ = scheme.generate_keypair(crypto::seed_from_u64(seed, kRuleTableDomain));

    tx::MinerPolicy policy;
    policy.m = config.miner_m;
    policy.ca_pk = w.ca_key_.public_key;
    policy.scheme = &scheme;
    policy.ruletable_pk = w.ruletable_key_.public_key;
    const auto rt_cert = crypto::issue_certificate(scheme, w.ca_key_, w.ruletable_key_.public_key,
                                                   kRuleTableRegion);
    policy.cert_registry.emplace(w.ruletable_key_.public_key, rt_cert);

    const std::set<RegionId> uncertified(config.uncertified_regions.begin(),
                                         config.uncertified_regions.end());
    const auto rsi_base = crypto::seed_from_u64(seed, kRsiDomain);
    std::vector<crypto::Certificate> rsi_certs;
    for (RegionId r = 0; r < config.region_count(); ++r) {
        if (uncertified.contains(r)) continue;
        auto key = scheme.generate_keypair(crypto::derive_seed(rsi_base, r));
        auto cert = crypto::issue_certificate(scheme, w.ca_key_, key.public_key, r);
        policy.cert_registry.emplace(key.public_key, cert);
        rsi_certs.push_back(cert);
        w.rsis_.emplace(r, edge::make_rsi_state(r, std::move(key), scheme, config.window_ms, 0));
    }

    w.ledgers_ = std::make_unique<ledger::LedgerSet>(std::move(policy));
    for (const auto& [r, _] : w.rsis_) w.ledgers_->add_region(r);

    w.owner_of_key_ = std::make_shared<std::map<crypto::PublicKey, crypto::PublicKey>>();
    market::OwnerResolver resolver =
        [owners = w.owner_of_key_](const crypto::PublicKey& pk) -> std::optional<crypto::PublicKey> {
        const auto it = owners->find(pk);
        if (it == owners->end()) return std::nullopt;
        return it->second;
    };
    w.rule_table_ = std::make_unique<market::RuleTable>(scheme, w.ruletable_key_, rt_cert,
                                                        *w.ledgers_, std::move(resolver));
    for (const auto& cert : rsi_certs) w.rule_table_->register_rsi_directory(cert);

    const double width = config.grid.cols * config.grid.cell_size_m;
    const double height = config.grid.rows * config.grid.cell_size_m;
    const auto inside = [&](const tx::GeoPoint& p) {
        const auto [x, y] = w.local_of(p);
        return x >= 0.0 && y >= 0.0 && x < width && y < height;
    };

    const double eps = config.consistency.eps_distance_m;
    for (std::size_t i = 0; i < config.ground_truth_events.size(); ++i) {
        auto e = config.ground_truth_events[i];
        e.loc = tx::snap_to_cell_center(e.loc, eps);
        const auto path = "ground_truth_events[" + std::to_string(i) + "]";
        if (!inside(e.loc)) throw ConfigError(path + ".loc", "outside the grid");
        const auto [x, y] = w.local_of(e.loc);
        if (w.region_at(x, y) != e.region) {
            throw ConfigError(path + ".region", "loc lies in region " +
                                                    std::to_string(w.region_at(x, y)));
        }
        w.events_.push_back(e);
    }
    if (config.adversary.strategy == AdversaryStrategy::FabricateEvent) {
        const auto target = tx::snap_to_cell_center(config.adversary.target, eps);
        if (!inside(target)) throw ConfigError("adversary.strategy.loc", "outside the grid");
        w.fabricated_target_ = target;
    }

    // Adversary selection: seeded partial Fisher-Yates over vehicle ids.
    const auto n = config.vehicles.count;
    const auto n_adv = static_cast<std::uint32_t>(std::llround(config.adversary.fraction * n));
    std::vector<std::uint32_t> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
    EntityRng world_rng(seed, kWorldEntity);
    for (std::uint32_t i = 0; i < n_adv; ++i) {
        const auto j = i + static_cast<std::uint32_t>(world_rng.next_u64() % (n - i));
        std::swap(ids[i], ids[j]);
    }
    const std::set<std::uint32_t> adversaries(ids.begin(), ids.begin() + n_adv);
    const std::set<std::uint32_t> reusers(config.vehicles.key_reuse_vehicles.begin(),
                                          config.vehicles.key_reuse_vehicles.end());

    const auto vehicle_base = crypto::seed_from_u64(seed, kVehicleDomain);
    w.vehicles_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Vehicle v;
        v.id = i;
        v.rng = EntityRng(seed, i);
        v.honest = !adversaries.contains(i);
        v.reuse_keys = reusers.contains(i);
        v.master_seed = crypto::derive_seed(vehicle_base, i);
        v.grant_key = scheme.generate_keypair(tagged_seed("dmap/grant", v.master_seed));
        const bool parked = !v.honest && config.adversary.placement == AdversaryPlacement::AtTarget;
        if (parked) {
            const auto [tx_m, ty_m] = w.local_of(*w.fabricated_target_);
            const double r = config.sensing_radius_m * 0.5 * std::sqrt(v.rng.uniform01());
            const double a = v.rng.uniform(0.0, 2.0 * std::numbers::pi);
            v.x_m = std::clamp(tx_m + r * std::cos(a), 0.0, std::nextafter(width, 0.0));
            v.y_m = std::clamp(ty_m + r * std::sin(a), 0.0, std::nextafter(height, 0.0));
            v.speed = 0.0;
        } else {
            v.x_m = v.rng.uniform(0.0, width);
            v.y_m = v.rng.uniform(0.0, height);
            v.speed = v.rng.uniform(config.vehicles.speed_min_mps, config.vehicles.speed_max_mps);
            const double heading = v.rng.uniform(0.0, 2.0 * std::numbers::pi);
            v.vx = v.speed * std::cos(heading);
            v.vy = v.speed * std::sin(heading);
        }
        v.physical_region = w.region_at(v.x_m, v.y_m);
        v.association = edge::Association(
            w.rsis_.contains(v.physical_region) ? std::optional<RegionId>(v.physical_region)
                                                : std::nullopt);
        v.last_report_window.assign(w.events_.size() + 1, std::nullopt);
        w.vehicles_.push_back(std::move(v));
    }

    w.script_order_.resize(config.market_script.size());
    for (std::size_t i = 0; i < w.script_order_.size(); ++i) w.script_order_[i] = i;
    std::stable_sort(w.script_order_.begin(), w.script_order_.end(),
                     [&config](std::size_t a, std::size_t b) {
                         return config.market_script[a].at_ms < config.market_script[b].at_ms;
                     });
    return w;
}

World load_scenario(const ScenarioConfig& config) { return World::load(config); }

// --- geometry ---------------------------------------------------------------------

RegionId World::region_at(double x_m, double y_m) const {
    const auto clamp_idx = [](double v, double cell, std::uint32_t n) {
        const auto i = static_cast<std::int64_t>(std::floor(v / cell));
        return static_cast<std::uint32_t>(std::clamp<std::int64_t>(i, 0, n - 1));
    };
    const auto row = clamp_idx(y_m, config_.grid.cell_size_m, config_.grid.rows);
    const auto col = clamp_idx(x_m, config_.grid.cell_size_m, config_.grid.cols);
    return row * config_.grid.cols + col;
}

tx::GeoPoint World::geo_of(double x_m, double y_m) const {
    return tx::offset_m(config_.grid.origin, x_m, y_m);
}

std::pair<double, double> World::local_of(const tx::GeoPoint& p) const {
    const auto& o = config_.grid.origin;
    const double lat0 = o.lat_micro * 1e-6;
    const double y = (p.lat_micro - static_cast<double>(o.lat_micro)) * 1e-6 * tx::kMetersPerDegree;
    const double x = (p.lon_micro - static_cast<double>(o.lon_micro)) * 1e-6 * tx::kMetersPerDegree *
                     std::cos(lat0 * std::numbers::pi / 180.0);
    return {x, y};
}

std::optional<std::uint32_t> World::vehicle_of(const crypto::PublicKey& pk) const {
    const auto it = vehicle_of_key_.find(pk);
    if (it == vehicle_of_key_.end()) return std::nullopt;
    return it->second;
}

const crypto::KeyPair& World::sp_key(const std::string& name) {
    auto it = sp_keys_.find(name);
    if (it == sp_keys_.end()) {
        ByteWriter w;
        w.u64(config_.seed);
        w.bytes(as_view(name));
        const auto seed = tagged_seed("dmap/sp", crypto::sha256(w.data()).bytes);
        it = sp_keys_.emplace(name, scheme_->generate_keypair(seed)).first;
    }
    return it->second;
}

void World::place_vehicle(std::uint32_t id, double x_m, double y_m, double vx, double vy) {
    auto& v = vehicles_.at(id);
    v.x_m = x_m;
    v.y_m = y_m;
    v.vx = vx;
    v.vy = vy;
    v.speed = std::hypot(vx, vy);
    const auto region = region_at(x_m, y_m);
    if (region != v.physical_region) {
        v.physical_region = region;
        v.association = edge::Association(rsis_.contains(region) ? std::optional<RegionId>(region)
                                                                  : std::nullopt);
    }
}

// --- stepping ----------------------------------------------------------------------

void World::step() {
    if (finalized_) return;
    const auto t = clock_;
    if (t > 0 && t % config_.window_ms == 0) window_boundary(t);
    fire_market_actions(t);
    move_vehicles();
    emit_reports(t);
    clock_ += kTickMs;
    if (clock_ >= config_.duration_ms) finalize();
}

void World::finalize() {
    window_boundary(config_.duration_ms);
    if (ledgers_->pending_count() > 0) ledgers_->seal(config_.duration_ms);
    for (; next_action_ < script_order_.size(); ++next_action_) {
        const auto i = script_order_[next_action_];
        outcomes_.push_back({i, config_.market_script[i].label, config_.market_script[i].at_ms,
                             "not-fired", 0});
    }
    finalized_ = true;
}

void World::window_boundary(std::uint64_t t) {
    const auto first = emissions_.size();
    for (auto& [region, rsi] : rsis_) {
        const auto window_id = rsi.window.window_id;
        for (auto& out : edge::close_window(rsi, config_.consistency)) {
            const auto verdict = ledgers_->submit(region, out);
            if (!verdict.accepted()) ++miner_rejects_[region];
            emissions_.push_back({region, window_id, std::move(out), verdict});
        }
    }
    ledgers_->seal(t);
    for (auto i = first; i < emissions_.size(); ++i) {
        if (!emissions_[i].verdict.accepted()) continue;
        try {
            rule_table_->store_record(emissions_[i].tx);
        } catch (const market::StoreError&) {
            ++store_failures_;
        }
    }
    for (auto& v : vehicles_) {
        const bool was_unattached = !v.association.current();
        if (v.association.roll_over() && was_unattached && v.association.current()) {
            flush_buffer(v, t);
        }
    }
    observe_requests(t);
}

void World::move_vehicles() {
    const double width = config_.grid.cols * config_.grid.cell_size_m;
    const double height = config_.grid.rows * config_.grid.cell_size_m;
    const double dt = kTickMs / 1000.0;
    const auto reflect = [](double& p, double& vel, double hi) {
        if (p < 0.0) {
            p = -p;
            vel = -vel;
        } else if (p >= hi) {
            p = std::nextafter(2.0 * hi - p, 0.0);
            vel = -vel;
        }
    };
    for (auto& v : vehicles_) {
        if (v.speed == 0.0) continue;
        v.x_m += v.vx * dt;
        v.y_m += v.vy * dt;
        reflect(v.x_m, v.vx, width);
        reflect(v.y_m, v.vy, height);
        const auto region = region_at(v.x_m, v.y_m);
        if (region != v.physical_region) {
            const auto from = v.physical_region;
            v.physical_region = region;
            const double heading = v.rng.uniform(0.0, 2.0 * std::numbers::pi);
            v.vx = v.speed * std::cos(heading);
            v.vy = v.speed * std::sin(heading);
            handover(v.id, from, region);
        }
    }
}

void World::handover(std::uint32_t id, RegionId from, RegionId to) {
    auto& v = vehicles_.at(id);
    ++handovers_;
    const bool was_unattached = !v.association.current();
    v.association.handover(from, to, rsis_.contains(to));
    if (was_unattached && v.association.current()) flush_buffer(v, clock_);
}

void World::flush_buffer(Vehicle& v, std::uint64_t t) {
    const auto region = v.association.current();
    if (!region) return;
    auto pending = std::move(v.buffered);
    v.buffered.clear();
    for (auto& b : pending) ingest_at(*region, v, b.report, b.origin, b.event, t);
}

crypto::KeyPair World::next_report_key(Vehicle& v) {
    const auto counter = v.reuse_keys ? 0 : v.key_counter++;
    return scheme_->generate_keypair(crypto::derive_seed(v.master_seed, counter));
}

void World::emit_reports(std::uint64_t t) {
    const auto window_id = t / config_.window_ms;
    const auto opens_at = window_id * config_.window_ms;
    const double eps = config_.consistency.eps_distance_m;
    const double radius = config_.sensing_radius_m;

    for (auto& v : vehicles_) {
        const RegionId sensing = v.association.current().value_or(v.physical_region);
        const auto here = geo_of(v.x_m, v.y_m);

        if (v.honest) {
            for (std::size_t e = 0; e < events_.size(); ++e) {
                const auto& ev = events_[e];
                if (!ev.active.contains(t) || ev.region != sensing) continue;
                if (v.last_report_window[e] == window_id) continue;
                if (tx::distance_m(here, ev.loc) > radius) continue;
                double dx = 0.0;
                double dy = 0.0;
                if (config_.noise_sigma_m > 0.0) {
                    for (int attempt = 0; attempt < 32; ++attempt) {
                        dx = v.rng.gaussian() * config_.noise_sigma_m;
                        dy = v.rng.gaussian() * config_.noise_sigma_m;
                        if (std::hypot(dx, dy) < eps / 2.0) break;
                        dx = dy = 0.0;
                    }
                }
                const auto [ex, ey] = local_of(ev.loc);
                // Map-matching: the observation snaps to its locus cell centre.
                const auto observed = tx::snap_to_cell_center(geo_of(ex + dx, ey + dy), eps);
                const auto report =
                    tx::build_data_tx(*scheme_, next_report_key(v), observed, ev.kind, opens_at);
                v.last_report_window[e] = window_id;
                deliver(v, report, Origin::Honest, e, t);
            }
            continue;
        }

        switch (config_.adversary.strategy) {
            case AdversaryStrategy::FabricateEvent: {
                const auto slot = events_.size();
                const auto& target = *fabricated_target_;
                const auto [tx_m, ty_m] = local_of(target);
                if (region_at(tx_m, ty_m) != sensing) break;
                if (v.last_report_window[slot] == window_id) break;
                if (tx::distance_m(here, target) > radius) break;
                const auto report = tx::build_data_tx(*scheme_, next_report_key(v), target,
                                                      config_.adversary.fabricated_kind, opens_at);
                v.last_report_window[slot] = window_id;
                ++fabricated_created_;
                deliver(v, report, Origin::Fabricated, std::nullopt, t);
                break;
            }
            case AdversaryStrategy::ReplayStale: {
                if (v.last_replay_window == window_id) break;
                std::vector<std::size_t> candidates;
                for (std::size_t i = 0; i < deliveries_.size(); ++i) {
                    const auto& d = deliveries_[i];
                    if (d.region == sensing && d.window_id < window_id && d.origin != Origin::Replay) {
                        candidates.push_back(i);
                    }
                }
                if (candidates.empty()) break;
                const auto pick = candidates[v.rng.next_u64() % candidates.size()];
                v.last_replay_window = window_id;
                const auto replayed = deliveries_[pick].report;
                deliver(v, replayed, Origin::Replay, std::nullopt, t);
                break;
            }
            case AdversaryStrategy::SuppressReports:
            case AdversaryStrategy::None:
                break;
        }
    }
}

void World::deliver(Vehicle& v, const tx::DataTransaction& report, Origin origin,
                    std::optional<std::size_t> event, std::uint64_t t) {
    if (origin != Origin::Replay) {
        vehicle_of_key_.emplace(report.pk, v.id);
        owner_of_key_->emplace(report.pk, v.grant_key.public_key);
    }
    const auto region = v.association.current();
    if (!region) {
        v.buffered.push_back({report, origin, event});
        return;
    }
    ingest_at(*region, v, report, origin, event, t);
}

void World::ingest_at(RegionId region, Vehicle& v, const tx::DataTransaction& report,
                      Origin origin, std::optional<std::size_t> event, std::uint64_t t) {
    auto& rsi = rsis_.at(region);
    const auto window_id = rsi.window.window_id;
    const auto result = edge::ingest(rsi, report, t);
    deliveries_.push_back({t, region, v.id, origin, report, result, window_id, event});
}

// --- marketplace ---------------------------------------------------------------------

void World::fire_market_actions(std::uint64_t t) {
    while (next_action_ < script_order_.size() &&
           config_.market_script[script_order_[next_action_]].at_ms <= t) {
        run_market_action(script_order_[next_action_], t);
        ++next_action_;
    }
}

void World::run_market_action(std::size_t index, std::uint64_t t) {
    const auto& a = config_.market_script[index];
    MarketOutcome out{index, a.label, t, "", 0};
    switch (a.type) {
        case ActionType::CreateContract: {
            try {
                const auto c = market::create_contract(*scheme_, vehicles_.at(a.owner).grant_key,
                                                       sp_key(a.grantee).public_key, a.timespan,
                                                       a.scope, a.price);
                const auto verdict = ledgers_->submit(c);
                if (verdict.accepted()) {
                    contract_labels_[a.label] = c.contract_id;
                    out.result = "submitted";
                } else {
                    out.result = "rejected:" + std::string(tx::to_string(verdict.reason));
                }
            } catch (const tx::RangeError&) {
                out.result = "error:RangeError";
            }
            break;
        }
        case ActionType::DataRequest: {
            try {
                const auto req = market::broadcast_data_request(*scheme_, sp_key(a.sp), a.area,
                                                                a.period, a.target_regions);
                std::vector<RegionId> targets;
                for (auto r : a.target_regions) {
                    if (rsis_.contains(r)) targets.push_back(r);
                }
                std::sort(targets.begin(), targets.end());
                targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
                pending_requests_.push_back({a.label, req, targets});
                out.result = "broadcast";
            } catch (const market::TargetError&) {
                out.result = "error:TargetError";
            }
            break;
        }
        case ActionType::Access: {
            const auto& requester = sp_key(a.sp);
            tx::Grant grant = tx::NoGrant{};
            if (a.grant == GrantSpecType::Contract) {
                const auto it = contract_labels_.find(a.contract);
                grant = tx::ContractRef{it == contract_labels_.end() ? crypto::Digest::zero()
                                                                     : it->second};
            } else if (a.grant == GrantSpecType::OwnerSig) {
                grant = market::sign_owner_grant(*scheme_, vehicles_.at(a.grant_owner).grant_key,
                                                 requester.public_key, a.query);
            }
            const auto access = market::build_access_tx(*scheme_, requester, a.query, grant);
            const auto decision = rule_table_->evaluate_access(access, t);
            if (const auto* g = std::get_if<market::Granted>(&decision)) {
                audit_grant(access, *g, t);
                out.result = "granted";
                out.records = g->records.size();
            } else {
                out.result = "denied:" +
                             std::string(market::to_string(std::get<market::Denied>(decision).reason));
            }
            break;
        }
    }
    outcomes_.push_back(std::move(out));
}

void World::observe_requests(std::uint64_t t) {
    for (const auto& req : pending_requests_) {
        for (auto& v : vehicles_) {
            const auto region = v.association.current();
            if (!region || !std::binary_search(req.targets.begin(), req.targets.end(), *region)) {
                continue;
            }
            ++requests_observed_;
            if (v.rng.uniform01() >= config_.owner_policy.auto_grant_probability) continue;
            if (req.targets.empty()) continue;
            tx::DataScope scope{req.targets, req.request.period,
                                {std::begin(tx::kAllEventCodes), std::end(tx::kAllEventCodes)}};
            const auto c = market::create_contract(
                *scheme_, v.grant_key, req.request.sp_pk,
                {t, t + config_.owner_policy.grant_duration_ms}, scope, config_.owner_policy.price);
            const auto verdict = ledgers_->submit(c);
            const auto label = req.label + "/" + std::to_string(v.id);
            if (verdict.accepted()) contract_labels_[label] = c.contract_id;
            outcomes_.push_back({0, label, t,
                                 verdict.accepted() ? "auto-granted"
                                                    : "rejected:" + std::string(tx::to_string(
                                                                        verdict.reason)),
                                 0});
        }
    }
    pending_requests_.clear();
}

void World::audit_grant(const tx::AccessTransaction& access, const market::Granted& granted,
                        std::uint64_t t) {
    // Re-derive the grant from chain state and ground truth, without the rule table.
    std::optional<crypto::PublicKey> owner;
    if (const auto* ref = std::get_if<tx::ContractRef>(&access.grant)) {
        const auto c = ledgers_->find_contract(ref->contract_id);
        if (c && c->grantee_pk == access.requester_pk && t >= c->timespan.start &&
            t < c->timespan.end && c->scope.covers(access.query)) {
            owner = c->owner_pk;
        }
    } else if (const auto* o = std::get_if<tx::OwnerSig>(&access.grant)) {
        if (scheme_->verify(o->owner_pk, tx::owner_grant_body(access.requester_pk, access.query),
                            o->signature)) {
            owner = o->owner_pk;
        }
    }
    for (const auto& r : granted.records) {
        bool ok = owner.has_value() && access.query.matches(r.id.region, r.payload);
        if (ok) {
            bool owned = false;
            for (const auto& pk : r.owner_pks) {
                if (pk == *owner) owned = true;
                const auto vid = vehicle_of(pk);
                if (vid && vehicles_[*vid].grant_key.public_key == *owner) owned = true;
            }
            ok = owned;
        }
        if (ok) {
            const auto loc = ledgers_->locate(r.provenance);
            ok = loc && loc->region == r.id.region;
        }
        if (!ok) ++unauthorized_served_;
    }
}

// --- results --------------------------------------------------------------------------

bool World::consistent_with_ground_truth(const tx::Payload& p) const {
    const double eps = config_.consistency.eps_distance_m;
    const auto window_end = p.timestamp + config_.window_ms;
    for (const auto& e : events_) {
        if (e.kind != p.event) continue;
        if (tx::distance_m(e.loc, p.loc) > eps) continue;
        if (e.active.start < window_end && p.timestamp < e.active.end) return true;
    }
    return false;
}

Metrics World::run() {
    while (!finished()) step();
    compute_metrics();
    sweep_invariants();
    for (const auto& r : invariants_) {
        if (!r.ok) throw InvariantViolation(invariants_);
    }
    return metrics_;
}

Metrics run(World& world) { return world.run(); }

void World::compute_metrics() {
    Metrics m;
    for (const auto& [region, rsi] : rsis_) {
        RegionMetrics rm;
        rm.region = region;
        rm.stats = rsi.totals;
        rm.stats.received += rsi.current.received;
        rm.stats.sig_rejects += rsi.current.sig_rejects;
        rm.stats.stale += rsi.current.stale;
        const auto it = miner_rejects_.find(region);
        rm.miner_rejects = it == miner_rejects_.end() ? 0 : it->second;
        rm.height = ledgers_->ledger(region).tip().height;
        rm.records_stored = rule_table_->store().at(region).records().size();
        m.totals += rm.stats;
        m.miner_rejects += rm.miner_rejects;
        m.regions.push_back(rm);
    }
    for (const auto& [_, l] : ledgers_->ledgers()) {
        for (const auto& b : l.blocks) {
            for (const auto& t : b.txs) {
                if (const auto* r = std::get_if<tx::RsiTransaction>(&t)) {
                    if (!consistent_with_ground_truth(r->payload)) ++m.false_data_chained;
                } else if (std::holds_alternative<tx::SmartContract>(t)) {
                    ++m.contracts_chained;
                }
            }
        }
    }
    m.false_data_injected = fabricated_created_;
    if (m.false_data_injected == 0) {
        m.detection_rate = m.false_data_chained == 0 ? 1.0 : 0.0;
    } else {
        const double rate = 1.0 - static_cast<double>(m.false_data_chained) /
                                      static_cast<double>(m.false_data_injected);
        m.detection_rate = std::clamp(rate, 0.0, 1.0);
    }
    m.linkability_violations = compute_linkability(*this).violations;
    m.access_granted = rule_table_->granted_count();
    m.access_denied = rule_table_->denied_count();
    m.unauthorized_served = unauthorized_served_;
    m.records_served = rule_table_->served_log().size();
    m.requests_observed = requests_observed_;
    m.handovers = handovers_;
    for (const auto& v : vehicles_) m.buffered_undelivered += v.buffered.size();
    metrics_ = std::move(m);
}

void World::sweep_invariants() {
    std::vector<InvariantResult> out;
    const auto add = [&out](std::string name, bool ok, std::string detail = {}) {
        out.push_back({std::move(name), ok, std::move(detail)});
    };

    {
        std::string bad;
        for (const auto& [region, l] : ledgers_->ledgers()) {
            const auto st = ledger::validate_chain(l);
            if (!st.ok) {
                bad += "region " + std::to_string(region) + " first_bad_height " +
                       std::to_string(st.first_bad_height) + "; ";
            }
        }
        add("chain_valid", bad.empty(), bad);
    }
    {
        std::uint64_t failures = 0;
        std::uint64_t flag0 = 0;
        std::uint64_t bad_members = 0;
        std::set<crypto::Digest> seen;
        std::uint64_t shared = 0;
        for (const auto& [region, l] : ledgers_->ledgers()) {
            for (const auto& b : l.blocks) {
                for (const auto& t : b.txs) {
                    if (!ledger::miner_admit(region, t, ledgers_->policy()).accepted()) ++failures;
                    if (!seen.insert(ledger::chain_tx_id(t)).second) ++shared;
                    if (const auto* r = std::get_if<tx::RsiTransaction>(&t)) {
                        if (r->flag != 1) ++flag0;
                        for (std::size_t i = 0; i < r->vehicle_pks.size(); ++i) {
                            if (!scheme_->verify(r->vehicle_pks[i],
                                                 tx::data_signing_bytes(r->payload, r->vehicle_pks[i]),
                                                 r->vehicle_signs[i])) {
                                ++bad_members;
                            }
                        }
                    }
                }
            }
        }
        add("admission_sound", failures == 0, std::to_string(failures) + " unadmissible");
        add("ledger_isolation", shared == 0, std::to_string(shared) + " shared transactions");
        add("no_untrusted_chained", flag0 == 0, std::to_string(flag0) + " flag=0 chained");
        add("member_signatures_verify", bad_members == 0,
            std::to_string(bad_members) + " bad member signatures");
    }
    {
        std::uint64_t bad = 0;
        for (const auto& [region, dir] : rule_table_->store()) {
            for (const auto& r : dir.records()) {
                const auto loc = ledgers_->locate(r.provenance);
                if (!loc || loc->region != region) {
                    ++bad;
                    continue;
                }
                const auto* t = std::get_if<tx::RsiTransaction>(&ledgers_->at(*loc));
                if (t == nullptr || t->flag != 1 || t->payload != r.payload) ++bad;
            }
        }
        add("store_only_chained_trusted", bad == 0 && store_failures_ == 0,
            std::to_string(bad) + " bad records, " + std::to_string(store_failures_) +
                " store failures");
    }
    {
        std::string bad;
        for (const auto& [region, rsi] : rsis_) {
            auto s = rsi.totals;
            s += rsi.current;
            const auto accounted = s.trusted_members + s.lone_members + s.rejected_reports +
                                   s.sig_rejects + s.stale + s.unrepresented +
                                   rsi.window.reports.size();
            if (accounted != s.received) {
                bad += "region " + std::to_string(region) + ": " + std::to_string(s.received) +
                       " received vs " + std::to_string(accounted) + " accounted; ";
            }
        }
        add("report_conservation", bad.empty(), bad);
    }
    add("unauthorized_served_zero", unauthorized_served_ == 0,
        std::to_string(unauthorized_served_) + " records served without a valid grant");
    {
        std::uint64_t unaudited = 0;
        for (const auto& s : rule_table_->served_log()) {
            const auto loc = ledgers_->locate(s.access_tx_id);
            if (!loc || !std::holds_alternative<tx::AccessTransaction>(ledgers_->at(*loc))) {
                ++unaudited;
            }
        }
        add("egress_chained", unaudited == 0,
            std::to_string(unaudited) + " served records without a chained access transaction");
    }
    invariants_ = std::move(out);
}

LinkabilityReport compute_linkability(const World& world) {
    // Every member of every chained transaction, attributed through the
    // simulator's private key map; the protocol itself never sees it.
    LinkabilityReport rep;
    std::map<std::uint32_t, std::set<crypto::PublicKey>> keys;
    std::map<std::uint32_t, std::set<crypto::Signature>> sigs;
    std::set<std::uint32_t> flagged;
    for (const auto& [_, l] : world.ledgers().ledgers()) {
        for (const auto& b : l.blocks) {
            for (const auto& t : b.txs) {
                const auto* r = std::get_if<tx::RsiTransaction>(&t);
                if (r == nullptr) continue;
                for (std::size_t i = 0; i < r->vehicle_pks.size(); ++i) {
                    ++rep.reports_scanned;
                    const auto vid = world.vehicle_of(r->vehicle_pks[i]);
                    if (!vid) continue;
                    std::uint64_t shared = 0;
                    if (!keys[*vid].insert(r->vehicle_pks[i]).second) ++shared;
                    if (!sigs[*vid].insert(r->vehicle_signs[i]).second) ++shared;
                    if (shared > 0) {
                        rep.violations += shared;
                        flagged.insert(*vid);
                    }
                }
            }
        }
    }
    rep.flagged_vehicles.assign(flagged.begin(), flagged.end());
    return rep;
}

crypto::Digest World::state_digest() const {
    ByteWriter w;
    const auto f64 = [&w](double x) { w.u64(std::bit_cast<std::uint64_t>(x)); };
    w.u64(clock_);
    w.u8(finalized_ ? 1 : 0);
    for (const auto& v : vehicles_) {
        w.u32(v.id);
        w.u8(v.honest ? 1 : 0);
        w.raw(v.master_seed);
        w.bytes(v.grant_key.public_key.bytes);
        f64(v.x_m);
        f64(v.y_m);
        f64(v.vx);
        f64(v.vy);
        f64(v.speed);
        w.u64(v.key_counter);
        w.u64(v.rng.counter());
        w.u32(v.association.current().value_or(0xFFFFFFFFu));
        w.u32(v.association.pending_target().value_or(0xFFFFFFFFu));
        w.u8(v.association.switching() ? 1 : 0);
        w.u32(v.physical_region);
        for (const auto& lw : v.last_report_window) w.u64(lw.value_or(~0ull));
        w.u32(static_cast<std::uint32_t>(v.buffered.size()));
    }
    for (const auto& [region, rsi] : rsis_) {
        w.u32(region);
        w.bytes(rsi.key.public_key.bytes);
        w.u64(rsi.window.window_id);
        w.u64(rsi.window.opens_at);
        for (const auto& r : rsi.window.reports) w.bytes(tx::encode(r));
        w.u64(rsi.totals.received);
    }
    for (const auto& [region, l] : ledgers_->ledgers()) {
        w.u32(region);
        w.raw(l.tip().block_hash.bytes);
    }
    w.u64(deliveries_.size());
    w.u64(emissions_.size());
    w.u64(outcomes_.size());
    return crypto::sha256(w.data());
}

nlohmann::ordered_json to_json(const Metrics& m) {
    const auto stats_json = [](nlohmann::ordered_json& j, const edge::WindowStats& s) {
        j["reports_sent"] = s.received;
        j["trusted_tx"] = s.trusted_tx;
        j["lone_tx"] = s.lone_tx;
        j["trusted_members"] = s.trusted_members;
        j["lone_members"] = s.lone_members;
        j["lone_reports"] = s.lone_reports;
        j["rejected_reports"] = s.rejected_reports;
        j["sig_rejects"] = s.sig_rejects;
        j["stale"] = s.stale;
        j["unrepresented"] = s.unrepresented;
    };
    nlohmann::ordered_json j;
    stats_json(j, m.totals);
    j["miner_rejects"] = m.miner_rejects;
    j["false_data_chained"] = m.false_data_chained;
    j["false_data_injected"] = m.false_data_injected;
    j["detection_rate"] = m.detection_rate;
    j["linkability_violations"] = m.linkability_violations;
    j["access_granted"] = m.access_granted;
    j["access_denied"] = m.access_denied;
    j["unauthorized_served"] = m.unauthorized_served;
    j["records_served"] = m.records_served;
    j["contracts_chained"] = m.contracts_chained;
    j["requests_observed"] = m.requests_observed;
    j["handovers"] = m.handovers;
    j["buffered_undelivered"] = m.buffered_undelivered;
    auto regions = nlohmann::ordered_json::array();
    for (const auto& r : m.regions) {
        nlohmann::ordered_json jr;
        jr["region"] = r.region;
        stats_json(jr, r.stats);
        jr["miner_rejects"] = r.miner_rejects;
        jr["height"] = r.height;
        jr["records_stored"] = r.records_stored;
        regions.push_back(std::move(jr));
    }
    j["regions"] = regions;
    return j;
}

}  // namespace dmap::sim
