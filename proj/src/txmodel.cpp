#include "dmap/txmodel.hpp"

#include <algorithm>

namespace dmap::tx {

std::string_view to_string(EventCode code) {
    switch (code) {
        case EventCode::RoadDamage: return "RoadDamage";
        case EventCode::ParkingSpot: return "ParkingSpot";
        case EventCode::TrafficSpeed: return "TrafficSpeed";
        case EventCode::Congestion: return "Congestion";
        case EventCode::Clear: return "Clear";
    }
    return "Unknown";
}

EventCode parse_event_code(std::string_view name) {
    for (auto code : kAllEventCodes) {
        if (to_string(code) == name) return code;
    }
    throw std::invalid_argument("unknown event kind: " + std::string(name));
}

std::string EventKind::describe() const {
    std::string s(to_string(code));
    if (code == EventCode::TrafficSpeed) s += "(" + std::to_string(speed_kmh) + ")";
    return s;
}

bool DataScope::covers(const DataScope& inner) const {
    for (auto r : inner.regions) {
        if (std::find(regions.begin(), regions.end(), r) == regions.end()) return false;
    }
    // An empty kind list means every kind.
    if (!kinds.empty()) {
        if (inner.kinds.empty()) return false;
        for (auto k : inner.kinds) {
            if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) return false;
        }
    }
    return period.contains(inner.period);
}

bool DataScope::matches(RegionId region, const Payload& p) const {
    return std::find(regions.begin(), regions.end(), region) != regions.end() &&
           (kinds.empty() || std::find(kinds.begin(), kinds.end(), p.event.code) != kinds.end()) &&
           period.contains(p.timestamp);
}

std::string_view to_string(Reason reason) {
    switch (reason) {
        case Reason::None: return "Accept";
        case Reason::UncertifiedRsi: return "UncertifiedRsi";
        case Reason::BadRsiSignature: return "BadRsiSignature";
        case Reason::BadMemberSignature: return "BadMemberSignature";
        case Reason::InsufficientSignatures: return "InsufficientSignatures";
        case Reason::Untrusted: return "Untrusted";
        case Reason::Malformed: return "Malformed";
        case Reason::WrongLedger: return "WrongLedger";
        case Reason::BadOwnerSignature: return "BadOwnerSignature";
        case Reason::BadRequesterSignature: return "BadRequesterSignature";
        case Reason::MissingRuleTableSignature: return "MissingRuleTableSignature";
        case Reason::BadRuleTableSignature: return "BadRuleTableSignature";
    }
    return "Unknown";
}

// --- encoding ----------------------------------------------------------------

void encode_into(ByteWriter& w, const GeoPoint& p) {
    w.i32(p.lat_micro);
    w.i32(p.lon_micro);
}

void encode_into(ByteWriter& w, const EventKind& e) {
    w.u8(static_cast<std::uint8_t>(e.code));
    if (e.code == EventCode::TrafficSpeed) w.u32(e.speed_kmh);
}

void encode_into(ByteWriter& w, const Payload& p) {
    encode_into(w, p.loc);
    encode_into(w, p.event);
    w.u64(p.timestamp);
}

void encode_into(ByteWriter& w, const DataScope& s) {
    w.u32(static_cast<std::uint32_t>(s.regions.size()));
    for (auto r : s.regions) w.u32(r);
    w.u64(s.period.start);
    w.u64(s.period.end);
    w.u32(static_cast<std::uint32_t>(s.kinds.size()));
    for (auto k : s.kinds) w.u8(static_cast<std::uint8_t>(k));
}

void encode_into(ByteWriter& w, const Grant& g) {
    if (std::holds_alternative<NoGrant>(g)) {
        w.u8(0);
    } else if (const auto* c = std::get_if<ContractRef>(&g)) {
        w.u8(1);
        w.raw(c->contract_id.bytes);
    } else {
        const auto& o = std::get<OwnerSig>(g);
        w.u8(2);
        w.bytes(o.owner_pk.bytes);
        w.bytes(o.signature.bytes);
    }
}

void encode_into(ByteWriter& w, const DataTransaction& t) {
    encode_into(w, t.payload);
    w.bytes(t.pk.bytes);
    w.bytes(t.vehicle_sign.bytes);
}

namespace {

void encode_rsi_body(ByteWriter& w, const RsiTransaction& t) {
    w.bytes(t.rsi_pk.bytes);
    encode_into(w, t.payload);
    w.u32(static_cast<std::uint32_t>(t.vehicle_signs.size()));
    for (const auto& s : t.vehicle_signs) w.bytes(s.bytes);
    w.u32(static_cast<std::uint32_t>(t.vehicle_pks.size()));
    for (const auto& pk : t.vehicle_pks) w.bytes(pk.bytes);
    w.u8(t.flag);
}

void encode_contract_body(ByteWriter& w, const SmartContract& c) {
    w.bytes(c.owner_pk.bytes);
    w.bytes(c.grantee_pk.bytes);
    w.u64(c.timespan.start);
    w.u64(c.timespan.end);
    encode_into(w, c.scope);
    w.u64(c.price);
}

void encode_access_body(ByteWriter& w, const AccessTransaction& a) {
    w.bytes(a.requester_pk.bytes);
    encode_into(w, a.query);
    encode_into(w, a.grant);
}

void encode_request_body(ByteWriter& w, const DataRequestTransaction& r) {
    w.bytes(r.sp_pk.bytes);
    encode_into(w, r.area.min);
    encode_into(w, r.area.max);
    w.u64(r.period.start);
    w.u64(r.period.end);
}

Digest read_digest(ByteReader& r) {
    Digest d;
    const auto raw = r.raw(d.bytes.size());
    std::copy(raw.begin(), raw.end(), d.bytes.begin());
    return d;
}

template <typename T, typename F>
T decode_whole(ByteView bytes, F read) {
    ByteReader r(bytes);
    T value = read(r);
    r.expect_done();
    return value;
}

}  // namespace

void encode_into(ByteWriter& w, const RsiTransaction& t) {
    encode_rsi_body(w, t);
    w.bytes(t.rsi_sign.bytes);
}

void encode_into(ByteWriter& w, const SmartContract& c) {
    w.raw(c.contract_id.bytes);
    encode_contract_body(w, c);
    w.bytes(c.owner_sign.bytes);
}

void encode_into(ByteWriter& w, const AccessTransaction& a) {
    encode_access_body(w, a);
    w.bytes(a.requester_sign.bytes);
    if (a.ruletable_sign) {
        w.u8(1);
        w.bytes(a.ruletable_sign->bytes);
    } else {
        w.u8(0);
    }
}

void encode_into(ByteWriter& w, const DataRequestTransaction& r) {
    encode_request_body(w, r);
    w.bytes(r.sp_sign.bytes);
}

GeoPoint read_geo_point(ByteReader& r) {
    GeoPoint p;
    p.lat_micro = r.i32();
    p.lon_micro = r.i32();
    return p;
}

EventKind read_event_kind(ByteReader& r) {
    const auto code = r.u8();
    if (code > static_cast<std::uint8_t>(EventCode::Clear)) {
        throw DecodeError("unknown event kind code " + std::to_string(code));
    }
    EventKind e{static_cast<EventCode>(code), 0};
    if (e.code == EventCode::TrafficSpeed) e.speed_kmh = r.u32();
    return e;
}

Payload read_payload(ByteReader& r) {
    Payload p;
    p.loc = read_geo_point(r);
    p.event = read_event_kind(r);
    p.timestamp = r.u64();
    return p;
}

DataScope read_scope(ByteReader& r) {
    DataScope s;
    const auto nr = r.count(4);
    s.regions.reserve(nr);
    for (std::uint32_t i = 0; i < nr; ++i) s.regions.push_back(r.u32());
    s.period.start = r.u64();
    s.period.end = r.u64();
    const auto nk = r.count(1);
    for (std::uint32_t i = 0; i < nk; ++i) {
        const auto code = r.u8();
        if (code > static_cast<std::uint8_t>(EventCode::Clear)) {
            throw DecodeError("unknown event kind code in scope");
        }
        s.kinds.push_back(static_cast<EventCode>(code));
    }
    return s;
}

Grant read_grant(ByteReader& r) {
    switch (r.u8()) {
        case 0: return NoGrant{};
        case 1: return ContractRef{read_digest(r)};
        case 2: {
            OwnerSig o;
            o.owner_pk.bytes = r.bytes();
            o.signature.bytes = r.bytes();
            return o;
        }
        default: throw DecodeError("unknown grant tag");
    }
}

DataTransaction read_data_tx(ByteReader& r) {
    DataTransaction t;
    t.payload = read_payload(r);
    t.pk.bytes = r.bytes();
    t.vehicle_sign.bytes = r.bytes();
    return t;
}

RsiTransaction read_rsi_tx(ByteReader& r) {
    RsiTransaction t;
    t.rsi_pk.bytes = r.bytes();
    t.payload = read_payload(r);
    const auto ns = r.count(4);
    for (std::uint32_t i = 0; i < ns; ++i) t.vehicle_signs.push_back({r.bytes()});
    const auto np = r.count(4);
    for (std::uint32_t i = 0; i < np; ++i) t.vehicle_pks.push_back({r.bytes()});
    t.flag = r.u8();
    if (t.flag > 1) throw DecodeError("flag must be 0 or 1");
    t.rsi_sign.bytes = r.bytes();
    return t;
}

SmartContract read_contract(ByteReader& r) {
    SmartContract c;
    c.contract_id = read_digest(r);
    c.owner_pk.bytes = r.bytes();
    c.grantee_pk.bytes = r.bytes();
    c.timespan.start = r.u64();
    c.timespan.end = r.u64();
    c.scope = read_scope(r);
    c.price = r.u64();
    c.owner_sign.bytes = r.bytes();
    return c;
}

AccessTransaction read_access_tx(ByteReader& r) {
    AccessTransaction a;
    a.requester_pk.bytes = r.bytes();
    a.query = read_scope(r);
    a.grant = read_grant(r);
    a.requester_sign.bytes = r.bytes();
    switch (r.u8()) {
        case 0: break;
        case 1: a.ruletable_sign = Signature{r.bytes()}; break;
        default: throw DecodeError("bad rule-table signature presence byte");
    }
    return a;
}

DataRequestTransaction read_data_request(ByteReader& r) {
    DataRequestTransaction q;
    q.sp_pk.bytes = r.bytes();
    q.area.min = read_geo_point(r);
    q.area.max = read_geo_point(r);
    q.period.start = r.u64();
    q.period.end = r.u64();
    q.sp_sign.bytes = r.bytes();
    return q;
}

DataTransaction decode_data_tx(ByteView bytes) {
    return decode_whole<DataTransaction>(bytes, read_data_tx);
}
RsiTransaction decode_rsi_tx(ByteView bytes) {
    return decode_whole<RsiTransaction>(bytes, read_rsi_tx);
}
SmartContract decode_contract(ByteView bytes) {
    return decode_whole<SmartContract>(bytes, read_contract);
}
AccessTransaction decode_access_tx(ByteView bytes) {
    return decode_whole<AccessTransaction>(bytes, read_access_tx);
}
DataRequestTransaction decode_data_request(ByteView bytes) {
    return decode_whole<DataRequestTransaction>(bytes, read_data_request);
}

// --- signed bodies -------------------------------------------------------------

Bytes data_signing_bytes(const Payload& payload, const PublicKey& pk) {
    ByteWriter w;
    encode_into(w, payload);
    w.bytes(pk.bytes);
    return std::move(w).take();
}

Bytes rsi_signing_bytes(const RsiTransaction& t) {
    ByteWriter w;
    encode_rsi_body(w, t);
    return std::move(w).take();
}

Bytes contract_body(const SmartContract& c) {
    ByteWriter w;
    encode_contract_body(w, c);
    return std::move(w).take();
}

Bytes access_signing_bytes(const AccessTransaction& a) {
    ByteWriter w;
    encode_access_body(w, a);
    return std::move(w).take();
}

Bytes access_approval_bytes(const AccessTransaction& a) {
    ByteWriter w;
    encode_access_body(w, a);
    w.bytes(a.requester_sign.bytes);
    return std::move(w).take();
}

Bytes owner_grant_body(const PublicKey& requester_pk, const DataScope& query) {
    ByteWriter w;
    w.bytes(requester_pk.bytes);
    encode_into(w, query);
    return std::move(w).take();
}

Bytes data_request_signing_bytes(const DataRequestTransaction& r) {
    ByteWriter w;
    encode_request_body(w, r);
    return std::move(w).take();
}

Digest tx_hash(const RsiTransaction& t) { return crypto::sha256(encode(t)); }
Digest tx_hash(const AccessTransaction& a) { return crypto::sha256(encode(a)); }

// --- builders and checks ---------------------------------------------------------

DataTransaction build_data_tx(const crypto::SignatureScheme& scheme, const crypto::KeyPair& key,
                              const GeoPoint& loc, const EventKind& event, std::uint64_t ts) {
    if (!loc.in_range()) {
        throw RangeError("location out of range: lat_micro=" + std::to_string(loc.lat_micro) +
                         " lon_micro=" + std::to_string(loc.lon_micro));
    }
    DataTransaction t;
    t.payload = {loc, event, ts};
    if (t.payload.event.code != EventCode::TrafficSpeed) t.payload.event.speed_kmh = 0;
    t.pk = key.public_key;
    t.vehicle_sign = scheme.sign(key.secret_key, data_signing_bytes(t.payload, t.pk));
    return t;
}

bool verify_data_tx(const crypto::SignatureScheme& scheme, const DataTransaction& t) {
    if (!t.payload.loc.in_range()) return false;
    return scheme.verify(t.pk, data_signing_bytes(t.payload, t.pk), t.vehicle_sign);
}

RsiTransaction build_rsi_tx(const crypto::SignatureScheme& scheme, const crypto::KeyPair& rsi_key,
                            const Payload& payload, const std::vector<Member>& members,
                            std::uint8_t flag) {
    if (members.empty()) throw MemberSignatureError("an RSI transaction needs at least one member");
    if (flag > 1) throw std::invalid_argument("flag must be 0 or 1");
    RsiTransaction t;
    t.rsi_pk = rsi_key.public_key;
    t.payload = payload;
    t.flag = flag;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& m = members[i];
        if (!scheme.verify(m.pk, data_signing_bytes(payload, m.pk), m.sign)) {
            throw MemberSignatureError("member " + std::to_string(i) +
                                       " signature does not verify against the payload");
        }
        t.vehicle_signs.push_back(m.sign);
        t.vehicle_pks.push_back(m.pk);
    }
    t.rsi_sign = scheme.sign(rsi_key.secret_key, rsi_signing_bytes(t));
    return t;
}

std::optional<RegionId> certified_region(const MinerPolicy& policy, const PublicKey& pk) {
    const auto it = policy.cert_registry.find(pk);
    if (it == policy.cert_registry.end()) return std::nullopt;
    const auto& cert = it->second;
    if (cert.subject_pk != pk) return std::nullopt;
    if (!crypto::verify_certificate(*policy.scheme, policy.ca_pk, cert)) return std::nullopt;
    return cert.region_id;
}

Verdict verify_rsi_tx(const RsiTransaction& t, const MinerPolicy& policy) {
    const auto region = certified_region(policy, t.rsi_pk);
    if (!region || *region == kRuleTableRegion) return Verdict::reject(Reason::UncertifiedRsi);
    if (t.vehicle_pks.empty() || t.vehicle_pks.size() != t.vehicle_signs.size() || t.flag > 1) {
        return Verdict::reject(Reason::Malformed);
    }
    const auto& scheme = *policy.scheme;
    if (!scheme.verify(t.rsi_pk, rsi_signing_bytes(t), t.rsi_sign)) {
        return Verdict::reject(Reason::BadRsiSignature);
    }
    for (std::size_t i = 0; i < t.vehicle_pks.size(); ++i) {
        if (!scheme.verify(t.vehicle_pks[i], data_signing_bytes(t.payload, t.vehicle_pks[i]),
                           t.vehicle_signs[i])) {
            return Verdict::reject(Reason::BadMemberSignature);
        }
    }
    if (t.vehicle_pks.size() < policy.m) return Verdict::reject(Reason::InsufficientSignatures);
    if (t.flag != 1) return Verdict::reject(Reason::Untrusted);
    return Verdict::accept();
}

Verdict verify_contract(const SmartContract& c, const MinerPolicy& policy) {
    if (c.timespan.empty()) return Verdict::reject(Reason::Malformed);
    const auto body = contract_body(c);
    if (crypto::sha256(body) != c.contract_id) return Verdict::reject(Reason::Malformed);
    if (!policy.scheme->verify(c.owner_pk, body, c.owner_sign)) {
        return Verdict::reject(Reason::BadOwnerSignature);
    }
    return Verdict::accept();
}

Verdict verify_access_tx(const AccessTransaction& a, const MinerPolicy& policy) {
    const auto& scheme = *policy.scheme;
    if (!scheme.verify(a.requester_pk, access_signing_bytes(a), a.requester_sign)) {
        return Verdict::reject(Reason::BadRequesterSignature);
    }
    if (const auto* o = std::get_if<OwnerSig>(&a.grant)) {
        if (!scheme.verify(o->owner_pk, owner_grant_body(a.requester_pk, a.query), o->signature)) {
            return Verdict::reject(Reason::BadOwnerSignature);
        }
    }
    if (!a.ruletable_sign) return Verdict::reject(Reason::MissingRuleTableSignature);
    if (!policy.ruletable_pk ||
        certified_region(policy, *policy.ruletable_pk) != std::optional<RegionId>(kRuleTableRegion) ||
        !scheme.verify(*policy.ruletable_pk, access_approval_bytes(a), *a.ruletable_sign)) {
        return Verdict::reject(Reason::BadRuleTableSignature);
    }
    return Verdict::accept();
}

}  // namespace dmap::tx
