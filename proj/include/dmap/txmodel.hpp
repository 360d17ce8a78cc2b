#pragma once

// Protocol messages: the vehicle report, the RSI multisign aggregate, the
// marketplace contract/access/request messages, their canonical encodings
// and the local verification rules miners apply.
//
// Canonical encoding: fields in declaration order, integers big-endian fixed
// width, byte strings and lists with a 4-byte big-endian length/count prefix,
// digests as raw 32 bytes, flags as one byte.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dmap/bytes.hpp"
#include "dmap/crypto.hpp"
#include "dmap/geo.hpp"

namespace dmap::tx {

using crypto::Digest;
using crypto::PublicKey;
using crypto::Signature;

class RangeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class MemberSignatureError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class EventCode : std::uint8_t {
    RoadDamage = 0,
    ParkingSpot = 1,
    TrafficSpeed = 2,
    Congestion = 3,
    Clear = 4,
};

inline constexpr EventCode kAllEventCodes[] = {EventCode::RoadDamage, EventCode::ParkingSpot,
                                               EventCode::TrafficSpeed, EventCode::Congestion,
                                               EventCode::Clear};

std::string_view to_string(EventCode code);
/// Throws std::invalid_argument on unknown names.
EventCode parse_event_code(std::string_view name);

struct EventKind {
    EventCode code = EventCode::RoadDamage;
    /// Only meaningful for TrafficSpeed; zero otherwise.
    std::uint32_t speed_kmh = 0;

    static EventKind road_damage() { return {EventCode::RoadDamage, 0}; }
    static EventKind parking_spot() { return {EventCode::ParkingSpot, 0}; }
    static EventKind traffic_speed(std::uint32_t kmh) { return {EventCode::TrafficSpeed, kmh}; }
    static EventKind congestion() { return {EventCode::Congestion, 0}; }
    static EventKind clear() { return {EventCode::Clear, 0}; }

    [[nodiscard]] std::string describe() const;
    auto operator<=>(const EventKind&) const = default;
};

/// Half-open [start, end).
struct Interval {
    std::uint64_t start = 0;
    std::uint64_t end = 0;

    [[nodiscard]] bool contains(std::uint64_t t) const { return t >= start && t < end; }
    [[nodiscard]] bool contains(const Interval& other) const {
        return other.start >= start && other.end <= end;
    }
    [[nodiscard]] bool empty() const { return start >= end; }
    bool operator==(const Interval&) const = default;
};

/// What a vehicle observed: loc || event || timestamp.
struct Payload {
    GeoPoint loc;
    EventKind event;
    std::uint64_t timestamp = 0;

    auto operator<=>(const Payload&) const = default;
};

struct DataTransaction {
    Payload payload;
    PublicKey pk;
    Signature vehicle_sign;

    bool operator==(const DataTransaction&) const = default;
};

struct Member {
    PublicKey pk;
    Signature sign;
    bool operator==(const Member&) const = default;
};

struct RsiTransaction {
    PublicKey rsi_pk;
    Payload payload;
    std::vector<Signature> vehicle_signs;
    std::vector<PublicKey> vehicle_pks;
    std::uint8_t flag = 0;
    Signature rsi_sign;

    [[nodiscard]] std::size_t member_count() const { return vehicle_pks.size(); }
    bool operator==(const RsiTransaction&) const = default;
};

/// Regions, data period and event kinds; used both as a contract's grant
/// scope and as an access query.
struct DataScope {
    std::vector<RegionId> regions;
    Interval period;
    std::vector<EventCode> kinds;

    /// Every region, the whole period and every kind of `inner` is covered.
    [[nodiscard]] bool covers(const DataScope& inner) const;
    [[nodiscard]] bool matches(RegionId region, const Payload& p) const;
    bool operator==(const DataScope&) const = default;
};

struct SmartContract {
    Digest contract_id;
    PublicKey owner_pk;
    PublicKey grantee_pk;
    Interval timespan;
    DataScope scope;
    std::uint64_t price = 0;
    Signature owner_sign;

    bool operator==(const SmartContract&) const = default;
};

struct ContractRef {
    Digest contract_id;
    bool operator==(const ContractRef&) const = default;
};

struct OwnerSig {
    PublicKey owner_pk;
    /// Over owner_grant_body(requester_pk, query).
    Signature signature;
    bool operator==(const OwnerSig&) const = default;
};

struct NoGrant {
    bool operator==(const NoGrant&) const = default;
};

using Grant = std::variant<NoGrant, ContractRef, OwnerSig>;

struct AccessTransaction {
    PublicKey requester_pk;
    DataScope query;
    Grant grant;
    Signature requester_sign;
    std::optional<Signature> ruletable_sign;

    bool operator==(const AccessTransaction&) const = default;
};

struct DataRequestTransaction {
    PublicKey sp_pk;
    GeoBox area;
    Interval period;
    Signature sp_sign;

    bool operator==(const DataRequestTransaction&) const = default;
};

// --- canonical encoding ----------------------------------------------------

void encode_into(ByteWriter& w, const GeoPoint& p);
void encode_into(ByteWriter& w, const EventKind& e);
void encode_into(ByteWriter& w, const Payload& p);
void encode_into(ByteWriter& w, const DataScope& s);
void encode_into(ByteWriter& w, const Grant& g);
void encode_into(ByteWriter& w, const DataTransaction& t);
void encode_into(ByteWriter& w, const RsiTransaction& t);
void encode_into(ByteWriter& w, const SmartContract& c);
void encode_into(ByteWriter& w, const AccessTransaction& a);
void encode_into(ByteWriter& w, const DataRequestTransaction& r);

GeoPoint read_geo_point(ByteReader& r);
EventKind read_event_kind(ByteReader& r);
Payload read_payload(ByteReader& r);
DataScope read_scope(ByteReader& r);
Grant read_grant(ByteReader& r);
DataTransaction read_data_tx(ByteReader& r);
RsiTransaction read_rsi_tx(ByteReader& r);
SmartContract read_contract(ByteReader& r);
AccessTransaction read_access_tx(ByteReader& r);
DataRequestTransaction read_data_request(ByteReader& r);

template <typename T>
Bytes encode(const T& value) {
    ByteWriter w;
    encode_into(w, value);
    return std::move(w).take();
}

DataTransaction decode_data_tx(ByteView bytes);
RsiTransaction decode_rsi_tx(ByteView bytes);
SmartContract decode_contract(ByteView bytes);
AccessTransaction decode_access_tx(ByteView bytes);
DataRequestTransaction decode_data_request(ByteView bytes);

// --- signed bodies ---------------------------------------------------------

/// loc || event || timestamp || pk: what the vehicle signs.
Bytes data_signing_bytes(const Payload& payload, const PublicKey& pk);
/// Every RsiTransaction field before rsi_sign.
Bytes rsi_signing_bytes(const RsiTransaction& t);
/// Every SmartContract field except contract_id and owner_sign.
Bytes contract_body(const SmartContract& c);
/// requester_pk || query || grant.
Bytes access_signing_bytes(const AccessTransaction& a);
/// access_signing_bytes || requester_sign: what the rule table countersigns.
Bytes access_approval_bytes(const AccessTransaction& a);
/// What a data owner signs to grant a requester a query directly.
Bytes owner_grant_body(const PublicKey& requester_pk, const DataScope& query);
Bytes data_request_signing_bytes(const DataRequestTransaction& r);

Digest tx_hash(const RsiTransaction& t);
Digest tx_hash(const AccessTransaction& a);

// --- builders and local checks ---------------------------------------------

/// Throws RangeError for out-of-range coordinates.
DataTransaction build_data_tx(const crypto::SignatureScheme& scheme, const crypto::KeyPair& key,
                              const GeoPoint& loc, const EventKind& event, std::uint64_t ts);

bool verify_data_tx(const crypto::SignatureScheme& scheme, const DataTransaction& t);

/// Aggregates verified member reports over one payload copy. Throws
/// MemberSignatureError when any member does not verify or there are none.
RsiTransaction build_rsi_tx(const crypto::SignatureScheme& scheme, const crypto::KeyPair& rsi_key,
                            const Payload& payload, const std::vector<Member>& members,
                            std::uint8_t flag);

enum class Reason {
    None,
    UncertifiedRsi,
    BadRsiSignature,
    BadMemberSignature,
    InsufficientSignatures,
    Untrusted,
    Malformed,
    WrongLedger,
    BadOwnerSignature,
    BadRequesterSignature,
    MissingRuleTableSignature,
    BadRuleTableSignature,
};

std::string_view to_string(Reason reason);

struct Verdict {
    Reason reason = Reason::None;

    static Verdict accept() { return {}; }
    static Verdict reject(Reason r) { return {r}; }
    [[nodiscard]] bool accepted() const { return reason == Reason::None; }
    bool operator==(const Verdict&) const = default;
};

using CertRegistry = std::map<PublicKey, crypto::Certificate>;

/// What miners check transactions against. `m` is the minimum number of
/// member signatures an RSI transaction must carry.
struct MinerPolicy {
    std::size_t m = 2;
    PublicKey ca_pk;
    CertRegistry cert_registry;
    /// Rule-table key that countersigns access transactions.
    std::optional<PublicKey> ruletable_pk;
    const crypto::SignatureScheme* scheme = &crypto::ed25519();
};

/// Region the CA certified `pk` for, if its certificate verifies.
std::optional<RegionId> certified_region(const MinerPolicy& policy, const PublicKey& pk);

Verdict verify_rsi_tx(const RsiTransaction& t, const MinerPolicy& policy);
Verdict verify_contract(const SmartContract& c, const MinerPolicy& policy);
/// Requester signature, rule-table countersignature, and for OwnerSig grants
/// the owner's signature.
Verdict verify_access_tx(const AccessTransaction& a, const MinerPolicy& policy);

}  // namespace dmap::tx
