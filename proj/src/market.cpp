#include "dmap/market.hpp"

#include <algorithm>

namespace dmap::market {

std::string_view to_string(StoreFailure f) {
    switch (f) {
        case StoreFailure::Rejected: return "Rejected";
        case StoreFailure::UnknownRsi: return "UnknownRsi";
        case StoreFailure::NotChained: return "NotChained";
    }
    return "Unknown";
}

StoreError::StoreError(StoreFailure f)
    : std::runtime_error("store_record: " + std::string(to_string(f))), failure(f) {}

std::string_view to_string(Denial d) {
    switch (d) {
        case Denial::NoGrant: return "NoGrant";
        case Denial::Expired: return "Expired";
        case Denial::ScopeExceeded: return "ScopeExceeded";
        case Denial::BadSignature: return "BadSignature";
    }
    return "Unknown";
}

Bytes encode(const StoredRecord& r) {
    ByteWriter w;
    tx::encode_into(w, r.payload);
    w.raw(r.provenance.bytes);
    w.u32(static_cast<std::uint32_t>(r.owner_pks.size()));
    for (const auto& pk : r.owner_pks) w.bytes(pk.bytes);
    return std::move(w).take();
}

nlohmann::ordered_json to_json(const StoredRecord& r) {
    nlohmann::ordered_json j;
    j["loc"] = {{"lat", r.payload.loc.lat_micro / 1e6}, {"lon", r.payload.loc.lon_micro / 1e6}};
    j["event"] = tx::to_string(r.payload.event.code);
    if (r.payload.event.code == tx::EventCode::TrafficSpeed) {
        j["speed_kmh"] = r.payload.event.speed_kmh;
    }
    j["timestamp"] = r.payload.timestamp;
    j["provenance"] = r.provenance.hex();
    return j;
}

// --- DataDirectory ---------------------------------------------------------------

RecordId DataDirectory::insert(tx::Payload payload, crypto::Digest provenance,
                               std::vector<PublicKey> owners) {
    const RecordId id{region_, records_.size()};
    const auto cell = tx::grid_cell(payload.loc, kIndexCellM);
    const IndexKey key{payload.timestamp / kTimeBucketMs, cell.row, cell.col,
                       static_cast<std::uint8_t>(payload.event.code)};
    index_[key].push_back(records_.size());
    by_provenance_.emplace(provenance, records_.size());
    records_.push_back({id, payload, provenance, std::move(owners)});
    return id;
}

std::vector<const StoredRecord*> DataDirectory::select(
    const std::optional<tx::GeoBox>& area, const tx::Interval& period,
    const std::vector<tx::EventCode>& kinds) const {
    std::vector<std::size_t> hits;
    if (period.empty()) return {};

    std::optional<std::pair<std::int64_t, std::int64_t>> rows;
    if (area) {
        rows = std::pair{tx::grid_cell(area->min, kIndexCellM).row,
                         tx::grid_cell(area->max, kIndexCellM).row};
    }
    const auto kind_ok = [&kinds](std::uint8_t k) {
        return kinds.empty() || std::find(kinds.begin(), kinds.end(),
                                          static_cast<tx::EventCode>(k)) != kinds.end();
    };

    const auto first_bucket = period.start / kTimeBucketMs;
    const auto last_bucket = (period.end - 1) / kTimeBucketMs;
    auto it = index_.lower_bound(IndexKey{first_bucket, INT64_MIN, INT64_MIN, 0});
    for (; it != index_.end() && it->first.bucket <= last_bucket; ++it) {
        const auto& key = it->first;
        if (!kind_ok(key.kind)) continue;
        if (rows) {
            if (key.row < rows->first || key.row > rows->second) continue;
            const auto c0 = tx::grid_col(key.row, area->min.lon_micro, kIndexCellM);
            const auto c1 = tx::grid_col(key.row, area->max.lon_micro, kIndexCellM);
            if (key.col < c0 || key.col > c1) continue;
        }
        for (auto i : it->second) {
            const auto& r = records_[i];
            if (!period.contains(r.payload.timestamp)) continue;
            if (area && !area->contains(r.payload.loc)) continue;
            hits.push_back(i);
        }
    }
    std::sort(hits.begin(), hits.end());
    std::vector<const StoredRecord*> out;
    out.reserve(hits.size());
    for (auto i : hits) out.push_back(&records_[i]);
    return out;
}

DataDirectory& register_rsi_directory(CloudStore& store, const crypto::SignatureScheme& scheme,
                                      const PublicKey& ca_pk, const crypto::Certificate& cert) {
    if (!crypto::verify_certificate(scheme, ca_pk, cert) || cert.region_id == kRuleTableRegion) {
        throw CertError("certificate does not verify under the CA key");
    }
    if (store.contains(cert.region_id)) {
        throw AlreadyRegistered("region " + std::to_string(cert.region_id) +
                                " already has a data directory");
    }
    return store.emplace(cert.region_id, DataDirectory(cert.region_id)).first->second;
}

// --- builders ----------------------------------------------------------------------

tx::SmartContract create_contract(const crypto::SignatureScheme& scheme,
                                  const crypto::KeyPair& owner_key, const PublicKey& grantee_pk,
                                  tx::Interval timespan, tx::DataScope scope, std::uint64_t price) {
    if (timespan.start >= timespan.end) {
        throw tx::RangeError("contract timespan must satisfy start < end");
    }
    if (scope.regions.empty()) throw tx::RangeError("contract scope names no region");
    tx::SmartContract c;
    c.owner_pk = owner_key.public_key;
    c.grantee_pk = grantee_pk;
    c.timespan = timespan;
    c.scope = std::move(scope);
    c.price = price;
    const auto body = tx::contract_body(c);
    c.contract_id = crypto::sha256(body);
    c.owner_sign = scheme.sign(owner_key.secret_key, body);
    return c;
}

tx::AccessTransaction build_access_tx(const crypto::SignatureScheme& scheme,
                                      const crypto::KeyPair& requester, tx::DataScope query,
                                      tx::Grant grant) {
    tx::AccessTransaction a;
    a.requester_pk = requester.public_key;
    a.query = std::move(query);
    a.grant = std::move(grant);
    a.requester_sign = scheme.sign(requester.secret_key, tx::access_signing_bytes(a));
    return a;
}

tx::OwnerSig sign_owner_grant(const crypto::SignatureScheme& scheme, const crypto::KeyPair& owner,
                              const PublicKey& requester_pk, const tx::DataScope& query) {
    return {owner.public_key,
            scheme.sign(owner.secret_key, tx::owner_grant_body(requester_pk, query))};
}

tx::DataRequestTransaction broadcast_data_request(const crypto::SignatureScheme& scheme,
                                                  const crypto::KeyPair& sp_key,
                                                  const tx::GeoBox& area, tx::Interval period,
                                                  const std::vector<RegionId>& target_regions) {
    if (target_regions.empty()) throw TargetError("data request names no target region");
    if (area.degenerate()) throw TargetError("data request area is degenerate");
    if (period.start > period.end) throw TargetError("data request period is inverted");
    tx::DataRequestTransaction r;
    r.sp_pk = sp_key.public_key;
    r.area = area;
    r.period = period;
    r.sp_sign = scheme.sign(sp_key.secret_key, tx::data_request_signing_bytes(r));
    return r;
}

bool verify_data_request(const crypto::SignatureScheme& scheme,
                         const tx::DataRequestTransaction& r) {
    return scheme.verify(r.sp_pk, tx::data_request_signing_bytes(r), r.sp_sign);
}

// --- RuleTable -----------------------------------------------------------------------

RuleTable::RuleTable(const crypto::SignatureScheme& scheme, crypto::KeyPair key,
                     crypto::Certificate cert, ledger::LedgerSet& ledgers, OwnerResolver resolver)
    : scheme_(&scheme),
      key_(std::move(key)),
      cert_(std::move(cert)),
      ledgers_(&ledgers),
      resolver_(std::move(resolver)) {}

DataDirectory& RuleTable::register_rsi_directory(const crypto::Certificate& cert) {
    return market::register_rsi_directory(store_, *scheme_, ledgers_->policy().ca_pk, cert);
}

RecordId RuleTable::store_record(const tx::RsiTransaction& rsi_tx) {
    if (rsi_tx.flag != 1) throw StoreError(StoreFailure::Rejected);
    const auto region = tx::certified_region(ledgers_->policy(), rsi_tx.rsi_pk);
    if (!region) throw StoreError(StoreFailure::UnknownRsi);
    const auto dir = store_.find(*region);
    if (dir == store_.end()) throw StoreError(StoreFailure::UnknownRsi);
    const auto provenance = tx::tx_hash(rsi_tx);
    const auto loc = ledgers_->locate(provenance);
    if (!loc || loc->region != *region) throw StoreError(StoreFailure::NotChained);
    if (const auto existing = dir->second.find_provenance(provenance)) return *existing;
    return dir->second.insert(rsi_tx.payload, provenance, rsi_tx.vehicle_pks);
}

bool RuleTable::owned_by(const StoredRecord& r, const PublicKey& owner) const {
    for (const auto& pk : r.owner_pks) {
        if (pk == owner) return true;
        if (resolver_) {
            const auto master = resolver_(pk);
            if (master && *master == owner) return true;
        }
    }
    return false;
}

AccessDecision RuleTable::evaluate_access(const tx::AccessTransaction& access_tx,
                                          std::uint64_t now_ms) {
    const auto deny = [this](Denial d) -> AccessDecision {
        ++denied_;
        return Denied{d};
    };
    if (!scheme_->verify(access_tx.requester_pk, tx::access_signing_bytes(access_tx),
                         access_tx.requester_sign)) {
        return deny(Denial::BadSignature);
    }
    if (access_tx.query.regions.empty() || access_tx.query.period.empty()) {
        return deny(Denial::ScopeExceeded);
    }

    PublicKey owner;
    if (std::holds_alternative<tx::NoGrant>(access_tx.grant)) {
        return deny(Denial::NoGrant);
    } else if (const auto* ref = std::get_if<tx::ContractRef>(&access_tx.grant)) {
        const auto contract = ledgers_->find_contract(ref->contract_id);
        if (!contract || contract->grantee_pk != access_tx.requester_pk) {
            return deny(Denial::NoGrant);
        }
        if (!contract->timespan.contains(now_ms)) return deny(Denial::Expired);
        if (!contract->scope.covers(access_tx.query)) return deny(Denial::ScopeExceeded);
        owner = contract->owner_pk;
    } else {
        const auto& o = std::get<tx::OwnerSig>(access_tx.grant);
        if (!scheme_->verify(o.owner_pk,
                             tx::owner_grant_body(access_tx.requester_pk, access_tx.query),
                             o.signature)) {
            return deny(Denial::BadSignature);
        }
        owner = o.owner_pk;
    }

    auto signed_tx = access_tx;
    signed_tx.ruletable_sign = scheme_->sign(key_.secret_key, tx::access_approval_bytes(signed_tx));
    const auto verdict = ledgers_->submit(signed_tx);
    if (!verdict.accepted()) {
        // Miners would not chain the release, so nothing may leave storage.
        return deny(Denial::BadSignature);
    }

    Granted g;
    g.signed_tx = std::move(signed_tx);
    const auto access_id = tx::tx_hash(g.signed_tx);
    auto regions = access_tx.query.regions;
    std::sort(regions.begin(), regions.end());
    regions.erase(std::unique(regions.begin(), regions.end()), regions.end());
    for (auto region : regions) {
        const auto dir = store_.find(region);
        if (dir == store_.end()) continue;
        for (const auto* r : dir->second.select(std::nullopt, access_tx.query.period,
                                                access_tx.query.kinds)) {
            if (!owned_by(*r, owner)) continue;
            g.records.push_back(*r);
            served_.push_back({access_id, r->id});
        }
    }
    ++granted_;
    return g;
}

Availability RuleTable::query_availability(const tx::GeoBox& area,
                                           const tx::Interval& period) const {
    Availability a;
    for (const auto& [_, dir] : store_) {
        for (const auto* r : dir.select(area, period, {})) {
            ++a.record_count;
            a.byte_volume += encode(*r).size();
        }
    }
    return a;
}

void RuleTable::export_records(std::ostream& out) const {
    for (const auto& [_, dir] : store_) {
        for (const auto& r : dir.records()) out << to_json(r).dump() << '\n';
    }
}

}  // namespace dmap::market
