#pragma once

// Keys, signatures, SHA-256 and CA certificates.
//
// Signing goes through a SignatureScheme so the simulator can run on real
// Ed25519 keys while fixtures use a keyed-hash double that any
// implementation can reproduce from SHA-256 alone.

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "dmap/bytes.hpp"

namespace dmap {

using RegionId = std::uint32_t;

/// Region id reserved for the rule table's certificate.
inline constexpr RegionId kRuleTableRegion = 0xFFFFFFFFu;

}  // namespace dmap

namespace dmap::crypto {

struct PublicKey {
    Bytes bytes;
    auto operator<=>(const PublicKey&) const = default;
};

/// Never part of any encoding.
struct SecretKey {
    Bytes bytes;
    bool operator==(const SecretKey&) const = default;
};

struct Signature {
    Bytes bytes;
    auto operator<=>(const Signature&) const = default;
};

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    static Digest zero() { return {}; }
    [[nodiscard]] std::string hex() const { return to_hex(bytes); }
    auto operator<=>(const Digest&) const = default;
};

using Seed = std::array<std::uint8_t, 32>;

struct KeyPair {
    PublicKey public_key;
    SecretKey secret_key;
};

class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;

    [[nodiscard]] virtual std::string_view name() const = 0;
    /// Same seed, same keypair.
    [[nodiscard]] virtual KeyPair generate_keypair(const Seed& seed) const = 0;
    [[nodiscard]] virtual Signature sign(const SecretKey& secret, ByteView message) const = 0;
    /// Malformed keys or signatures verify as false.
    [[nodiscard]] virtual bool verify(const PublicKey& pk, ByteView message,
                                      const Signature& sig) const = 0;
};

/// Ed25519 (RFC 8032): 32-byte public keys, 64-byte signatures.
const SignatureScheme& ed25519();

/// Deterministic test double. The public key is SHA-256 over a domain tag and
/// the seed; a signature is HMAC-SHA256 keyed by the public key. Anyone can
/// forge it, so it is only for fixtures and tests.
const SignatureScheme& keyed_hash();

/// "ed25519" or "keyed-hash"; throws std::invalid_argument otherwise.
const SignatureScheme& scheme_by_name(std::string_view name);

Digest sha256(ByteView message);

inline Digest hash(ByteView message) { return sha256(message); }

/// Seed for the counter-th fresh key of an entity: sha256(master || u64be(counter)).
Seed derive_seed(const Seed& master, std::uint64_t counter);

Seed seed_from_u64(std::uint64_t value, std::uint64_t domain = 0);

struct Certificate {
    PublicKey subject_pk;
    RegionId region_id = 0;
    Signature ca_signature;

    bool operator==(const Certificate&) const = default;
};

/// The bytes the CA signs: bytes(subject_pk) || u32(region_id).
Bytes certificate_body(const PublicKey& subject_pk, RegionId region);

Bytes encode(const Certificate& cert);
void encode_into(ByteWriter& w, const Certificate& cert);
Certificate decode_certificate(ByteView bytes);
Certificate read_certificate(ByteReader& r);

Certificate issue_certificate(const SignatureScheme& scheme, const KeyPair& ca,
                              const PublicKey& subject_pk, RegionId region);

bool verify_certificate(const SignatureScheme& scheme, const PublicKey& ca_pk,
                        const Certificate& cert);

}  // namespace dmap::crypto
