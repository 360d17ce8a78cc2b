#include "dmap/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace dmap::crypto {

namespace {

void ensure_sodium() {
    static const bool ready = [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
        return true;
    }();
    (void)ready;
}

class Ed25519Scheme final : public SignatureScheme {
public:
    std::string_view name() const override { return "ed25519"; }

    KeyPair generate_keypair(const Seed& seed) const override {
        ensure_sodium();
        KeyPair kp;
        kp.public_key.bytes.resize(crypto_sign_PUBLICKEYBYTES);
        kp.secret_key.bytes.resize(crypto_sign_SECRETKEYBYTES);
        crypto_sign_seed_keypair(kp.public_key.bytes.data(), kp.secret_key.bytes.data(),
                                 seed.data());
        return kp;
    }

    Signature sign(const SecretKey& secret, ByteView message) const override {
        ensure_sodium();
        if (secret.bytes.size() != crypto_sign_SECRETKEYBYTES) {
            throw std::invalid_argument("ed25519 secret key has wrong length");
        }
        Signature sig;
        sig.bytes.resize(crypto_sign_BYTES);
        crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                             secret.bytes.data());
        return sig;
    }

    bool verify(const PublicKey& pk, ByteView message, const Signature& sig) const override {
        ensure_sodium();
        if (pk.bytes.size() != crypto_sign_PUBLICKEYBYTES) return false;
        if (sig.bytes.size() != crypto_sign_BYTES) return false;
        return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                           pk.bytes.data()) == 0;
    }
};

class KeyedHashScheme final : public SignatureScheme {
public:
    std::string_view name() const override { return "keyed-hash"; }

    KeyPair generate_keypair(const Seed& seed) const override {
        static constexpr std::string_view kTag = "dmap/keyed-hash/pk";
        Bytes buf(kTag.begin(), kTag.end());
        buf.insert(buf.end(), seed.begin(), seed.end());
        const auto pk = sha256(buf);
        KeyPair kp;
        kp.public_key.bytes.assign(pk.bytes.begin(), pk.bytes.end());
        kp.secret_key.bytes.assign(seed.begin(), seed.end());
        return kp;
    }

    Signature sign(const SecretKey& secret, ByteView message) const override {
        if (secret.bytes.size() != 32) {
            throw std::invalid_argument("keyed-hash secret key has wrong length");
        }
        Seed seed{};
        std::copy(secret.bytes.begin(), secret.bytes.end(), seed.begin());
        return mac(generate_keypair(seed).public_key, message);
    }

    bool verify(const PublicKey& pk, ByteView message, const Signature& sig) const override {
        if (pk.bytes.size() != 32 || sig.bytes.size() != crypto_auth_hmacsha256_BYTES) {
            return false;
        }
        const auto expected = mac(pk, message);
        return sodium_memcmp(expected.bytes.data(), sig.bytes.data(), sig.bytes.size()) == 0;
    }

private:
    static Signature mac(const PublicKey& pk, ByteView message) {
        ensure_sodium();
        Signature sig;
        sig.bytes.resize(crypto_auth_hmacsha256_BYTES);
        crypto_auth_hmacsha256_state st;
        crypto_auth_hmacsha256_init(&st, pk.bytes.data(), pk.bytes.size());
        crypto_auth_hmacsha256_update(&st, message.data(), message.size());
        crypto_auth_hmacsha256_final(&st, sig.bytes.data());
        return sig;
    }
};

}  // namespace

const SignatureScheme& ed25519() {
    static const Ed25519Scheme scheme;
    return scheme;
}

const SignatureScheme& keyed_hash() {
    static const KeyedHashScheme scheme;
    return scheme;
}

const SignatureScheme& scheme_by_name(std::string_view name) {
    if (name == ed25519().name()) return ed25519();
    if (name == keyed_hash().name()) return keyed_hash();
    throw std::invalid_argument("unknown signature scheme: " + std::string(name));
}

Digest sha256(ByteView message) {
    ensure_sodium();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), message.data(), message.size());
    return d;
}

Seed derive_seed(const Seed& master, std::uint64_t counter) {
    ByteWriter w;
    w.raw(master);
    w.u64(counter);
    return sha256(w.data()).bytes;
}

Seed seed_from_u64(std::uint64_t value, std::uint64_t domain) {
    ByteWriter w;
    w.u64(domain);
    w.u64(value);
    return sha256(w.data()).bytes;
}

Bytes certificate_body(const PublicKey& subject_pk, RegionId region) {
    ByteWriter w;
    w.bytes(subject_pk.bytes);
    w.u32(region);
    return std::move(w).take();
}

void encode_into(ByteWriter& w, const Certificate& cert) {
    w.bytes(cert.subject_pk.bytes);
    w.u32(cert.region_id);
    w.bytes(cert.ca_signature.bytes);
}

Bytes encode(const Certificate& cert) {
    ByteWriter w;
    encode_into(w, cert);
    return std::move(w).take();
}

Certificate read_certificate(ByteReader& r) {
    Certificate cert;
    cert.subject_pk.bytes = r.bytes();
    cert.region_id = r.u32();
    cert.ca_signature.bytes = r.bytes();
    return cert;
}

Certificate decode_certificate(ByteView bytes) {
    ByteReader r(bytes);
    auto cert = read_certificate(r);
    r.expect_done();
    return cert;
}

Certificate issue_certificate(const SignatureScheme& scheme, const KeyPair& ca,
                              const PublicKey& subject_pk, RegionId region) {
    Certificate cert{subject_pk, region, {}};
    cert.ca_signature = scheme.sign(ca.secret_key, certificate_body(subject_pk, region));
    return cert;
}

bool verify_certificate(const SignatureScheme& scheme, const PublicKey& ca_pk,
                        const Certificate& cert) {
    return scheme.verify(ca_pk, certificate_body(cert.subject_pk, cert.region_id),
                         cert.ca_signature);
}

}  // namespace dmap::crypto
