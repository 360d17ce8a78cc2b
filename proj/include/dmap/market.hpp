#pragma once

// The data marketplace: per-RSI data directories in cloud storage, the rule
// table that mediates between the ledgers and that storage, smart-contract
// grants and access evaluation.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmap/ledger.hpp"
#include "dmap/txmodel.hpp"

namespace dmap::market {

using crypto::PublicKey;

class CertError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class AlreadyRegistered : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class TargetError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class StoreFailure { Rejected, UnknownRsi, NotChained };

std::string_view to_string(StoreFailure f);

class StoreError : public std::runtime_error {
public:
    explicit StoreError(StoreFailure f);
    StoreFailure failure;
};

struct RecordId {
    RegionId region = 0;
    std::uint64_t seq = 0;
    auto operator<=>(const RecordId&) const = default;
};

struct StoredRecord {
    RecordId id;
    tx::Payload payload;
    /// Hash of the chained RsiTransaction the record came from.
    crypto::Digest provenance;
    std::vector<PublicKey> owner_pks;

    bool operator==(const StoredRecord&) const = default;
};

/// payload || provenance || owner_pks. Its size is the record's byte volume.
Bytes encode(const StoredRecord& r);
nlohmann::ordered_json to_json(const StoredRecord& r);

inline constexpr double kIndexCellM = 100.0;
inline constexpr std::uint64_t kTimeBucketMs = 60'000;

/// Storage partition for one certified RSI, indexed by
/// (time bucket, location cell, event kind).
class DataDirectory {
public:
    explicit DataDirectory(RegionId region) : region_(region) {}

    [[nodiscard]] RegionId region() const { return region_; }
    RecordId insert(tx::Payload payload, crypto::Digest provenance, std::vector<PublicKey> owners);

    [[nodiscard]] const std::vector<StoredRecord>& records() const { return records_; }
    [[nodiscard]] std::optional<RecordId> find_provenance(const crypto::Digest& d) const {
        const auto it = by_provenance_.find(d);
        if (it == by_provenance_.end()) return std::nullopt;
        return records_[it->second].id;
    }

    /// Records inside `area` (if given), within `period` and of one of
    /// `kinds` (all kinds if empty), in insertion order.
    [[nodiscard]] std::vector<const StoredRecord*> select(const std::optional<tx::GeoBox>& area,
                                                          const tx::Interval& period,
                                                          const std::vector<tx::EventCode>& kinds) const;

private:
    struct IndexKey {
        std::uint64_t bucket;
        std::int64_t row;
        std::int64_t col;
        std::uint8_t kind;
        auto operator<=>(const IndexKey&) const = default;
    };

    RegionId region_;
    std::vector<StoredRecord> records_;
    std::map<IndexKey, std::vector<std::size_t>> index_;
    std::map<crypto::Digest, std::size_t> by_provenance_;
};

using CloudStore = std::map<RegionId, DataDirectory>;

/// Creates the empty directory a newly certified RSI gets.
DataDirectory& register_rsi_directory(CloudStore& store, const crypto::SignatureScheme& scheme,
                                      const PublicKey& ca_pk, const crypto::Certificate& cert);

/// Throws tx::RangeError when the timespan is empty or the scope names no
/// region.
tx::SmartContract create_contract(const crypto::SignatureScheme& scheme,
                                  const crypto::KeyPair& owner_key, const PublicKey& grantee_pk,
                                  tx::Interval timespan, tx::DataScope scope, std::uint64_t price);

/// Unsigned-by-rule-table access transaction signed by the requester.
tx::AccessTransaction build_access_tx(const crypto::SignatureScheme& scheme,
                                      const crypto::KeyPair& requester, tx::DataScope query,
                                      tx::Grant grant);

/// Direct grant: the owner signs (requester_pk, query).
tx::OwnerSig sign_owner_grant(const crypto::SignatureScheme& scheme, const crypto::KeyPair& owner,
                              const PublicKey& requester_pk, const tx::DataScope& query);

/// Throws TargetError for an empty target set, a degenerate area or an
/// inverted period.
tx::DataRequestTransaction broadcast_data_request(const crypto::SignatureScheme& scheme,
                                                  const crypto::KeyPair& sp_key,
                                                  const tx::GeoBox& area, tx::Interval period,
                                                  const std::vector<RegionId>& target_regions);

bool verify_data_request(const crypto::SignatureScheme& scheme,
                         const tx::DataRequestTransaction& r);

enum class Denial { NoGrant, Expired, ScopeExceeded, BadSignature };

std::string_view to_string(Denial d);

struct Granted {
    std::vector<StoredRecord> records;
    tx::AccessTransaction signed_tx;
};

struct Denied {
    Denial reason;
};

using AccessDecision = std::variant<Granted, Denied>;

struct Availability {
    std::uint64_t record_count = 0;
    std::uint64_t byte_volume = 0;
    bool operator==(const Availability&) const = default;
};

/// Maps a fresh per-report key to the owner's long-lived grant key. Held
/// privately by the storage side, never written on-chain.
using OwnerResolver = std::function<std::optional<PublicKey>(const PublicKey&)>;

struct ServedRecord {
    crypto::Digest access_tx_id;
    RecordId record;
};

/// API between the ledgers and cloud storage. Stores validated data in the
/// submitting RSI's directory and releases data only against a grant, with
/// every release chained as a doubly signed access transaction.
class RuleTable {
public:
    RuleTable(const crypto::SignatureScheme& scheme, crypto::KeyPair key, crypto::Certificate cert,
              ledger::LedgerSet& ledgers, OwnerResolver resolver = {});

    [[nodiscard]] const PublicKey& public_key() const { return key_.public_key; }
    [[nodiscard]] const crypto::Certificate& certificate() const { return cert_; }

    DataDirectory& register_rsi_directory(const crypto::Certificate& cert);

    /// Throws StoreError.
    RecordId store_record(const tx::RsiTransaction& rsi_tx);

    AccessDecision evaluate_access(const tx::AccessTransaction& access_tx, std::uint64_t now_ms);

    [[nodiscard]] Availability query_availability(const tx::GeoBox& area,
                                                  const tx::Interval& period) const;

    [[nodiscard]] bool owned_by(const StoredRecord& r, const PublicKey& owner) const;

    [[nodiscard]] const CloudStore& store() const { return store_; }
    [[nodiscard]] const std::vector<ServedRecord>& served_log() const { return served_; }
    [[nodiscard]] std::uint64_t granted_count() const { return granted_; }
    [[nodiscard]] std::uint64_t denied_count() const { return denied_; }

    /// One JSON object per line, directories in region order.
    void export_records(std::ostream& out) const;

private:
    const crypto::SignatureScheme* scheme_;
    crypto::KeyPair key_;
    crypto::Certificate cert_;
    ledger::LedgerSet* ledgers_;
    OwnerResolver resolver_;
    CloudStore store_;
    std::vector<ServedRecord> served_;
    std::uint64_t granted_ = 0;
    std::uint64_t denied_ = 0;
};

}  // namespace dmap::market
