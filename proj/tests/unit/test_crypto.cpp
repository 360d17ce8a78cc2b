#include <doctest.h>

#include <set>
#include <string>

#include <sodium.h>

#include "dmap/crypto.hpp"

using namespace dmap;
using namespace dmap::crypto;

namespace {

Bytes str(std::string_view s) { return {s.begin(), s.end()}; }

Seed seed_of(std::string_view hex) {
    const auto b = from_hex(hex);
    Seed s{};
    std::copy(b.begin(), b.end(), s.begin());
    return s;
}

}  // namespace

TEST_CASE("sha256 matches published vectors") {
    CHECK(sha256({}).hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256(str("abc")).hex() ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256(str("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex() ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("ed25519 reproduces the first RFC 8032 vector") {
    const auto& s = ed25519();
    const auto kp =
        s.generate_keypair(seed_of("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"));
    CHECK(to_hex(kp.public_key.bytes) ==
          "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
    const auto sig = s.sign(kp.secret_key, {});
    CHECK(to_hex(sig.bytes) ==
          "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065"
          "224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
    CHECK(s.verify(kp.public_key, {}, sig));
}

TEST_CASE("keyed-hash is HMAC-SHA256 keyed by the derived public key") {
    // RFC 4231 case 2 pins the primitive itself.
    const auto key = str("Jefe");
    const auto msg = str("what do ya want for nothing?");
    std::array<std::uint8_t, crypto_auth_hmacsha256_BYTES> mac{};
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, key.data(), key.size());
    crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
    crypto_auth_hmacsha256_final(&st, mac.data());
    CHECK(to_hex(mac) == "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");

    const auto& s = keyed_hash();
    const auto seed = seed_from_u64(42);
    const auto kp = s.generate_keypair(seed);
    auto pre = str("dmap/keyed-hash/pk");
    pre.insert(pre.end(), seed.begin(), seed.end());
    const auto expect_pk = sha256(pre);
    CHECK(kp.public_key.bytes == Bytes(expect_pk.bytes.begin(), expect_pk.bytes.end()));

    crypto_auth_hmacsha256_init(&st, kp.public_key.bytes.data(), kp.public_key.bytes.size());
    crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
    crypto_auth_hmacsha256_final(&st, mac.data());
    CHECK(s.sign(kp.secret_key, msg).bytes == Bytes(mac.begin(), mac.end()));
}

TEST_CASE("derive_seed and seed_from_u64 follow their hash definitions") {
    const auto master = seed_from_u64(7, 3);
    ByteWriter w;
    w.u64(3);
    w.u64(7);
    CHECK(master == sha256(w.data()).bytes);

    ByteWriter w2;
    w2.raw(master);
    w2.u64(0x0102030405060708ull);
    CHECK(derive_seed(master, 0x0102030405060708ull) == sha256(w2.data()).bytes);
}

TEST_CASE("fresh keys never collide") {
    for (const auto* s : {&keyed_hash(), &ed25519()}) {
        CAPTURE(s->name());
        const auto master = seed_from_u64(1);
        std::set<PublicKey> seen;
        const int n = s == &ed25519() ? 2000 : 10000;
        for (int i = 0; i < n; ++i) seen.insert(s->generate_keypair(derive_seed(master, i)).public_key);
        CHECK(seen.size() == static_cast<std::size_t>(n));
    }
}

TEST_CASE("sign/verify round trip and rejection of any change") {
    for (const auto* s : {&keyed_hash(), &ed25519()}) {
        CAPTURE(s->name());
        const auto a = s->generate_keypair(seed_from_u64(1));
        const auto b = s->generate_keypair(seed_from_u64(2));
        for (std::uint64_t i = 0; i < 200; ++i) {
            ByteWriter w;
            w.u64(i * 0x9e3779b97f4a7c15ull);
            w.bytes(str("payload"));
            const auto msg = w.data();
            const auto sig = s->sign(a.secret_key, msg);
            REQUIRE(s->verify(a.public_key, msg, sig));
            CHECK_FALSE(s->verify(b.public_key, msg, sig));

            auto bad_msg = msg;
            bad_msg[i % bad_msg.size()] ^= static_cast<std::uint8_t>(1u << (i % 8));
            CHECK_FALSE(s->verify(a.public_key, bad_msg, sig));

            auto bad_sig = sig;
            bad_sig.bytes[i % bad_sig.bytes.size()] ^= 0x01;
            CHECK_FALSE(s->verify(a.public_key, msg, bad_sig));
        }
        CHECK_FALSE(s->verify(PublicKey{Bytes(5, 0)}, {}, Signature{}));
    }
}

TEST_CASE("scheme_by_name") {
    CHECK(&scheme_by_name("ed25519") == &ed25519());
    CHECK(&scheme_by_name("keyed-hash") == &keyed_hash());
    CHECK_THROWS_AS((void)scheme_by_name("rsa"), std::invalid_argument);
}

TEST_CASE("certificates bind a key to one region") {
    for (const auto* s : {&keyed_hash(), &ed25519()}) {
        CAPTURE(s->name());
        const auto ca = s->generate_keypair(seed_from_u64(100));
        const auto rogue = s->generate_keypair(seed_from_u64(101));
        const auto rsi = s->generate_keypair(seed_from_u64(102));
        const auto cert = issue_certificate(*s, ca, rsi.public_key, 4);

        CHECK(cert.region_id == 4);
        CHECK(verify_certificate(*s, ca.public_key, cert));
        CHECK_FALSE(verify_certificate(*s, rogue.public_key, cert));

        auto moved = cert;
        moved.region_id = 5;
        CHECK_FALSE(verify_certificate(*s, ca.public_key, moved));

        auto swapped = cert;
        swapped.subject_pk = rogue.public_key;
        CHECK_FALSE(verify_certificate(*s, ca.public_key, swapped));

        const auto self = issue_certificate(*s, rogue, rsi.public_key, 4);
        CHECK_FALSE(verify_certificate(*s, ca.public_key, self));

        const auto round = decode_certificate(encode(cert));
        CHECK(round.subject_pk == cert.subject_pk);
        CHECK(round.region_id == cert.region_id);
        CHECK(round.ca_signature == cert.ca_signature);
    }
}

TEST_CASE("certificate encoding layout") {
    const auto& s = keyed_hash();
    const auto ca = s.generate_keypair(seed_from_u64(1));
    const auto sub = s.generate_keypair(seed_from_u64(2));
    const auto cert = issue_certificate(s, ca, sub.public_key, 0x01020304);

    // Independent layout: u32 len || pk || u32 region || u32 len || sig.
    Bytes expect{0, 0, 0, 32};
    expect.insert(expect.end(), sub.public_key.bytes.begin(), sub.public_key.bytes.end());
    expect.insert(expect.end(), {1, 2, 3, 4, 0, 0, 0, 32});
    expect.insert(expect.end(), cert.ca_signature.bytes.begin(), cert.ca_signature.bytes.end());
    CHECK(encode(cert) == expect);

    Bytes body{0, 0, 0, 32};
    body.insert(body.end(), sub.public_key.bytes.begin(), sub.public_key.bytes.end());
    body.insert(body.end(), {1, 2, 3, 4});
    CHECK(certificate_body(sub.public_key, 0x01020304) == body);

    auto truncated = encode(cert);
    truncated.pop_back();
    CHECK_THROWS_AS(decode_certificate(truncated), DecodeError);
}
