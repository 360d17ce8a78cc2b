#include <doctest.h>

#include <random>

#include "dmap/txmodel.hpp"

using namespace dmap;
using namespace dmap::tx;

namespace {

const auto& S = crypto::keyed_hash();

crypto::KeyPair key(std::uint64_t n) { return S.generate_keypair(crypto::seed_from_u64(n, 77)); }

// Big-endian helpers written independently of ByteWriter.
void be(Bytes& out, std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void lp(Bytes& out, const Bytes& b) {
    be(out, b.size(), 4);
    out.insert(out.end(), b.begin(), b.end());
}

struct Gen {
    std::mt19937_64 rng{20240601};

    std::uint64_t u(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    }
    GeoPoint point() {
        return {static_cast<std::int32_t>(u(0, 180'000'000)) - 90'000'000,
                static_cast<std::int32_t>(u(0, 360'000'000)) - 180'000'000};
    }
    EventKind kind() {
        const auto code = static_cast<EventCode>(u(0, 4));
        return {code, code == EventCode::TrafficSpeed ? static_cast<std::uint32_t>(u(0, 300)) : 0u};
    }
    Payload payload() { return {point(), kind(), u(0, 1ull << 50)}; }
    DataScope scope() {
        DataScope s;
        for (auto n = u(0, 4); n > 0; --n) s.regions.push_back(static_cast<RegionId>(u(0, 1000)));
        s.period.start = u(0, 1ull << 40);
        s.period.end = s.period.start + u(1, 1ull << 30);
        for (auto n = u(0, 5); n > 0; --n) s.kinds.push_back(static_cast<EventCode>(u(0, 4)));
        return s;
    }
    DataTransaction data_tx() { return build_data_tx(S, key(u(0, 1ull << 40)), point(), kind(), u(0, 1ull << 50)); }
    RsiTransaction rsi_tx() {
        const auto p = payload();
        std::vector<Member> members;
        for (auto n = u(1, 5); n > 0; --n) {
            const auto k = key(u(0, 1ull << 40));
            members.push_back({k.public_key, S.sign(k.secret_key, data_signing_bytes(p, k.public_key))});
        }
        return build_rsi_tx(S, key(u(0, 100)), p, members, static_cast<std::uint8_t>(u(0, 1)));
    }
    SmartContract contract() {
        SmartContract c;
        const auto owner = key(u(0, 1ull << 40));
        c.owner_pk = owner.public_key;
        c.grantee_pk = key(u(0, 1ull << 40)).public_key;
        c.timespan.start = u(0, 1ull << 40);
        c.timespan.end = c.timespan.start + u(1, 1ull << 30);
        c.scope = scope();
        c.price = u(0, 1ull << 32);
        const auto body = contract_body(c);
        c.contract_id = crypto::sha256(body);
        c.owner_sign = S.sign(owner.secret_key, body);
        return c;
    }
    AccessTransaction access_tx() {
        AccessTransaction a;
        const auto req = key(u(0, 1ull << 40));
        a.requester_pk = req.public_key;
        a.query = scope();
        switch (u(0, 2)) {
            case 0: a.grant = NoGrant{}; break;
            case 1: a.grant = ContractRef{crypto::sha256(Bytes{static_cast<std::uint8_t>(u(0, 255))})}; break;
            default: {
                const auto owner = key(u(0, 1ull << 40));
                a.grant = OwnerSig{owner.public_key,
                                   S.sign(owner.secret_key, owner_grant_body(a.requester_pk, a.query))};
            }
        }
        a.requester_sign = S.sign(req.secret_key, access_signing_bytes(a));
        if (u(0, 1) == 1) a.ruletable_sign = S.sign(key(3).secret_key, access_approval_bytes(a));
        return a;
    }
    DataRequestTransaction request() {
        DataRequestTransaction r;
        const auto sp = key(u(0, 1ull << 40));
        r.sp_pk = sp.public_key;
        r.area = {point(), point()};
        r.period = {u(0, 100), u(101, 1000)};
        r.sp_sign = S.sign(sp.secret_key, data_request_signing_bytes(r));
        return r;
    }
};

MinerPolicy policy_with_rsi(const crypto::KeyPair& ca, const crypto::KeyPair& rsi, RegionId region) {
    MinerPolicy p;
    p.ca_pk = ca.public_key;
    p.scheme = &S;
    p.cert_registry.emplace(rsi.public_key, crypto::issue_certificate(S, ca, rsi.public_key, region));
    return p;
}

std::vector<Member> members_for(const Payload& p, int n, std::uint64_t base = 1000) {
    std::vector<Member> out;
    for (int i = 0; i < n; ++i) {
        const auto k = key(base + i);
        out.push_back({k.public_key, S.sign(k.secret_key, data_signing_bytes(p, k.public_key))});
    }
    return out;
}

}  // namespace

TEST_CASE("data transaction encoding matches a hand-built layout") {
    const auto k = key(1);
    const auto t = build_data_tx(S, k, {-33'868'820, 151'209'296}, EventKind::traffic_speed(57), 0x0102030405060708);
    Bytes expect;
    be(expect, static_cast<std::uint32_t>(-33'868'820), 4);
    be(expect, 151'209'296, 4);
    expect.push_back(2);
    be(expect, 57, 4);
    be(expect, 0x0102030405060708, 8);
    Bytes signed_part = expect;
    lp(signed_part, k.public_key.bytes);
    CHECK(data_signing_bytes(t.payload, t.pk) == signed_part);
    lp(expect, k.public_key.bytes);
    lp(expect, t.vehicle_sign.bytes);
    CHECK(encode(t) == expect);

    // Non-speed kinds carry no speed field.
    const auto c = build_data_tx(S, k, {0, 0}, EventKind::congestion(), 1);
    CHECK(encode(c).size() == 4 + 4 + 1 + 8 + 4 + 32 + 4 + 32);
}

TEST_CASE("rsi transaction encoding puts the RSI signature last") {
    const Payload p{{1, 2}, EventKind::road_damage(), 3};
    const auto t = build_rsi_tx(S, key(9), p, members_for(p, 2), 1);
    Bytes expect;
    lp(expect, t.rsi_pk.bytes);
    be(expect, 1, 4);
    be(expect, 2, 4);
    expect.push_back(0);
    be(expect, 3, 8);
    be(expect, 2, 4);
    for (const auto& s : t.vehicle_signs) lp(expect, s.bytes);
    be(expect, 2, 4);
    for (const auto& k : t.vehicle_pks) lp(expect, k.bytes);
    expect.push_back(1);
    CHECK(rsi_signing_bytes(t) == expect);
    lp(expect, t.rsi_sign.bytes);
    CHECK(encode(t) == expect);
}

TEST_CASE("build_data_tx") {
    const auto k = key(5);
    const auto t = build_data_tx(S, k, {48'000'000, 11'000'000}, EventKind::road_damage(), 1000);
    CHECK(verify_data_tx(S, t));
    CHECK(encode(t) == encode(build_data_tx(S, k, {48'000'000, 11'000'000}, EventKind::road_damage(), 1000)));
    CHECK_THROWS_AS(build_data_tx(S, k, {91'000'000, 0}, EventKind::road_damage(), 1), RangeError);
    CHECK_THROWS_AS(build_data_tx(S, k, {0, -180'000'001}, EventKind::road_damage(), 1), RangeError);
    CHECK_NOTHROW(build_data_tx(S, k, {-90'000'000, 180'000'000}, EventKind::road_damage(), 1));
}

TEST_CASE("verify_data_tx rejects every single-field mutation") {
    const auto t = build_data_tx(S, key(6), {1'000, 2'000}, EventKind::traffic_speed(40), 5000);
    REQUIRE(verify_data_tx(S, t));
    auto m = t;
    m.payload.loc.lat_micro += 1;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.payload.loc.lon_micro -= 1;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.payload.event.code = EventCode::Congestion;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.payload.event.speed_kmh = 41;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.payload.timestamp += 1;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.pk = key(7).public_key;
    CHECK_FALSE(verify_data_tx(S, m));
    m = t;
    m.vehicle_sign.bytes[0] ^= 1;
    CHECK_FALSE(verify_data_tx(S, m));
}

TEST_CASE("canonical encoding round-trips 10^3 random objects of every type") {
    Gen g;
    for (int i = 0; i < 1000; ++i) {
        const auto d = g.data_tx();
        CHECK(decode_data_tx(encode(d)) == d);
        const auto r = g.rsi_tx();
        CHECK(decode_rsi_tx(encode(r)) == r);
        const auto c = g.contract();
        CHECK(decode_contract(encode(c)) == c);
        const auto a = g.access_tx();
        CHECK(decode_access_tx(encode(a)) == a);
        const auto q = g.request();
        CHECK(decode_data_request(encode(q)) == q);
    }
}

TEST_CASE("decoding rejects truncation, trailing bytes and unknown codes") {
    Gen g;
    for (int i = 0; i < 50; ++i) {
        const auto enc = encode(g.rsi_tx());
        for (std::size_t cut = 0; cut < enc.size(); cut += 7) {
            CHECK_THROWS_AS(decode_rsi_tx(ByteView(enc.data(), cut)), DecodeError);
        }
        auto longer = enc;
        longer.push_back(0);
        CHECK_THROWS_AS(decode_rsi_tx(longer), DecodeError);
    }
    auto d = encode(build_data_tx(S, key(1), {0, 0}, EventKind::clear(), 0));
    d[8] = 5;
    CHECK_THROWS_AS(decode_data_tx(d), DecodeError);
    auto a = encode(g.access_tx());
    CHECK_THROWS(decode_access_tx(Bytes(a.begin(), a.begin() + 40)));
}

TEST_CASE("encodings of transactions differing only in flag differ") {
    const Payload p{{5, 5}, EventKind::parking_spot(), 9};
    const auto members = members_for(p, 2);
    const auto a = build_rsi_tx(S, key(9), p, members, 0);
    const auto b = build_rsi_tx(S, key(9), p, members, 1);
    CHECK(encode(a) != encode(b));
    CHECK(rsi_signing_bytes(a) != rsi_signing_bytes(b));
}

TEST_CASE("build_rsi_tx") {
    const Payload p{{10, 20}, EventKind::road_damage(), 100};
    const auto t = build_rsi_tx(S, key(9), p, members_for(p, 3), 1);
    CHECK(t.vehicle_pks.size() == 3);
    CHECK(t.vehicle_signs.size() == 3);
    CHECK(t.payload == p);

    auto bad = members_for(p, 3);
    bad[1].sign.bytes[3] ^= 0x10;
    CHECK_THROWS_AS(build_rsi_tx(S, key(9), p, bad, 1), MemberSignatureError);
    CHECK_THROWS_AS(build_rsi_tx(S, key(9), p, {}, 1), MemberSignatureError);

    // A member signature over a different payload does not transfer.
    Payload other = p;
    other.timestamp += 1;
    CHECK_THROWS_AS(build_rsi_tx(S, key(9), p, members_for(other, 2), 1), MemberSignatureError);
}

TEST_CASE("verify_rsi_tx") {
    const auto ca = key(100);
    const auto rsi = key(101);
    const auto policy = policy_with_rsi(ca, rsi, 3);
    const Payload p{{10, 20}, EventKind::road_damage(), 100};

    CHECK(verify_rsi_tx(build_rsi_tx(S, rsi, p, members_for(p, 3), 1), policy).accepted());
    CHECK(verify_rsi_tx(build_rsi_tx(S, rsi, p, members_for(p, 3), 0), policy).reason == Reason::Untrusted);
    CHECK(verify_rsi_tx(build_rsi_tx(S, rsi, p, members_for(p, 1), 1), policy).reason ==
          Reason::InsufficientSignatures);
    CHECK(verify_rsi_tx(build_rsi_tx(S, key(102), p, members_for(p, 3), 1), policy).reason ==
          Reason::UncertifiedRsi);

    // Certified by someone other than the CA.
    auto forged = policy;
    forged.cert_registry.clear();
    forged.cert_registry.emplace(rsi.public_key, crypto::issue_certificate(S, key(103), rsi.public_key, 3));
    CHECK(verify_rsi_tx(build_rsi_tx(S, rsi, p, members_for(p, 3), 1), forged).reason ==
          Reason::UncertifiedRsi);

    auto t = build_rsi_tx(S, rsi, p, members_for(p, 3), 1);
    auto m = t;
    m.payload.timestamp += 1;
    CHECK(verify_rsi_tx(m, policy).reason == Reason::BadRsiSignature);
    m = t;
    m.vehicle_signs[2].bytes[0] ^= 1;
    CHECK_FALSE(verify_rsi_tx(m, policy).accepted());
    m = t;
    m.vehicle_pks.pop_back();
    CHECK(verify_rsi_tx(m, policy).reason == Reason::Malformed);
    m = t;
    m.flag = 0;
    CHECK(verify_rsi_tx(m, policy).reason == Reason::BadRsiSignature);
    m = t;
    m.rsi_sign.bytes[5] ^= 1;
    CHECK(verify_rsi_tx(m, policy).reason == Reason::BadRsiSignature);
}

TEST_CASE("member signature tampering is caught even when the RSI re-signs") {
    const auto ca = key(100);
    const auto rsi = key(101);
    const auto policy = policy_with_rsi(ca, rsi, 3);
    const Payload p{{10, 20}, EventKind::road_damage(), 100};
    auto t = build_rsi_tx(S, rsi, p, members_for(p, 3), 1);
    t.vehicle_signs[1].bytes[0] ^= 1;
    t.rsi_sign = S.sign(rsi.secret_key, rsi_signing_bytes(t));
    CHECK(verify_rsi_tx(t, policy).reason == Reason::BadMemberSignature);
}

TEST_CASE("accepted RSI transactions carry only independently verifying members") {
    Gen g;
    const auto ca = key(100);
    MinerPolicy policy;
    policy.ca_pk = ca.public_key;
    policy.scheme = &S;
    for (std::uint64_t r = 0; r <= 100; ++r) {
        policy.cert_registry.emplace(key(r).public_key, crypto::issue_certificate(S, ca, key(r).public_key, r));
    }
    int accepted = 0;
    for (int i = 0; i < 300; ++i) {
        auto t = g.rsi_tx();
        if (g.u(0, 3) == 0) t.vehicle_signs[0].bytes[g.u(0, 31)] ^= 0x80;
        if (!verify_rsi_tx(t, policy).accepted()) continue;
        ++accepted;
        for (std::size_t j = 0; j < t.vehicle_pks.size(); ++j) {
            // Oracle: recompute the signed bytes by hand.
            Bytes msg;
            be(msg, static_cast<std::uint32_t>(t.payload.loc.lat_micro), 4);
            be(msg, static_cast<std::uint32_t>(t.payload.loc.lon_micro), 4);
            msg.push_back(static_cast<std::uint8_t>(t.payload.event.code));
            if (t.payload.event.code == EventCode::TrafficSpeed) be(msg, t.payload.event.speed_kmh, 4);
            be(msg, t.payload.timestamp, 8);
            lp(msg, t.vehicle_pks[j].bytes);
            CHECK(S.verify(t.vehicle_pks[j], msg, t.vehicle_signs[j]));
        }
        CHECK(t.vehicle_pks.size() >= policy.m);
        CHECK(t.flag == 1);
    }
    CHECK(accepted > 20);
}

TEST_CASE("contract and access signature coverage") {
    Gen g;
    const auto c = g.contract();
    MinerPolicy policy;
    policy.scheme = &S;
    CHECK(verify_contract(c, policy).accepted());
    auto m = c;
    m.price += 1;
    CHECK_FALSE(verify_contract(m, policy).accepted());
    m = c;
    m.timespan.end += 1;
    CHECK_FALSE(verify_contract(m, policy).accepted());
    m = c;
    m.scope.regions.push_back(999);
    CHECK_FALSE(verify_contract(m, policy).accepted());
    m = c;
    m.grantee_pk = key(4242).public_key;
    CHECK_FALSE(verify_contract(m, policy).accepted());
    m = c;
    m.contract_id.bytes[0] ^= 1;
    CHECK_FALSE(verify_contract(m, policy).accepted());
    m = c;
    m.owner_sign.bytes[0] ^= 1;
    CHECK_FALSE(verify_contract(m, policy).accepted());

    const auto ca = key(100);
    const auto rt = key(3);
    policy.ca_pk = ca.public_key;
    policy.ruletable_pk = rt.public_key;
    policy.cert_registry.emplace(rt.public_key, crypto::issue_certificate(S, ca, rt.public_key, kRuleTableRegion));
    AccessTransaction a;
    a.requester_pk = key(50).public_key;
    a.query = {{1}, {0, 100}, {EventCode::RoadDamage}};
    a.grant = ContractRef{c.contract_id};
    a.requester_sign = S.sign(key(50).secret_key, access_signing_bytes(a));
    CHECK(verify_access_tx(a, policy).reason == Reason::MissingRuleTableSignature);
    a.ruletable_sign = S.sign(rt.secret_key, access_approval_bytes(a));
    CHECK(verify_access_tx(a, policy).accepted());
    auto b = a;
    b.query.period.end = 101;
    CHECK(verify_access_tx(b, policy).reason == Reason::BadRequesterSignature);
    b = a;
    b.ruletable_sign->bytes[0] ^= 1;
    CHECK(verify_access_tx(b, policy).reason == Reason::BadRuleTableSignature);
    b = a;
    b.ruletable_sign = S.sign(key(4).secret_key, access_approval_bytes(a));
    CHECK(verify_access_tx(b, policy).reason == Reason::BadRuleTableSignature);
}

TEST_CASE("interval and scope semantics match a brute-force oracle") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto a = rng() % 40;
        const Interval iv{a, a + rng() % 20};
        const auto t = rng() % 70;
        bool in = false;
        for (auto x = iv.start; x < iv.end; ++x) in = in || x == t;
        CHECK(iv.contains(t) == in);

        const auto b = rng() % 40;
        const Interval inner{b, b + 1 + rng() % 20};
        bool all = true;
        for (auto x = inner.start; x < inner.end; ++x) all = all && iv.contains(x);
        CHECK(iv.contains(inner) == all);
    }
    const DataScope outer{{1, 2, 3}, {0, 100}, {EventCode::RoadDamage, EventCode::Clear}};
    CHECK(outer.covers({{2}, {10, 20}, {EventCode::Clear}}));
    CHECK_FALSE(outer.covers({{4}, {10, 20}, {EventCode::Clear}}));
    CHECK_FALSE(outer.covers({{2}, {10, 101}, {EventCode::Clear}}));
    CHECK_FALSE(outer.covers({{2}, {10, 20}, {EventCode::Congestion}}));
    const Payload p{{0, 0}, EventKind::road_damage(), 99};
    CHECK(outer.matches(1, p));
    CHECK_FALSE(outer.matches(5, p));
    CHECK_FALSE(outer.matches(1, {{0, 0}, EventKind::road_damage(), 100}));

    // No kinds listed means every kind, on both sides.
    CHECK_FALSE(outer.covers({{2}, {10, 20}, {}}));
    const DataScope any{{1}, {0, 100}, {}};
    CHECK(any.covers({{1}, {10, 20}, {}}));
    CHECK(any.covers({{1}, {10, 20}, {EventCode::Congestion}}));
    CHECK(any.matches(1, {{0, 0}, EventKind::traffic_speed(5), 0}));
}
