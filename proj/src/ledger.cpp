#include "dmap/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace dmap::ledger {

namespace {

enum class TxTag : std::uint8_t { Rsi = 1, Contract = 2, Access = 3 };

crypto::Digest read_digest(ByteReader& r) {
    crypto::Digest d;
    const auto raw = r.raw(d.bytes.size());
    std::copy(raw.begin(), raw.end(), d.bytes.begin());
    return d;
}

void encode_block_header(ByteWriter& w, const Block& b) {
    w.u64(b.height);
    w.raw(b.prev_hash.bytes);
    w.u64(b.timestamp);
    w.u32(static_cast<std::uint32_t>(b.txs.size()));
    for (const auto& t : b.txs) encode_into(w, t);
}

}  // namespace

AdmissionError::AdmissionError(std::size_t i, tx::Reason r)
    : std::runtime_error("transaction " + std::to_string(i) +
                         " not admitted: " + std::string(tx::to_string(r))),
      index(i),
      reason(r) {}

LedgerDecodeError::LedgerDecodeError(std::uint64_t h, const std::string& what)
    : DecodeError("block " + std::to_string(h) + ": " + what), height(h) {}

crypto::Digest chain_tx_id(const ChainTx& t) {
    return std::visit(
        [](const auto& v) -> crypto::Digest {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, tx::SmartContract>) {
                return v.contract_id;
            } else {
                return tx::tx_hash(v);
            }
        },
        t);
}

std::optional<RegionId> home_region(const tx::SmartContract& c) {
    if (c.scope.regions.empty()) return std::nullopt;
    return *std::min_element(c.scope.regions.begin(), c.scope.regions.end());
}

std::optional<RegionId> home_region(const tx::AccessTransaction& a) {
    if (a.query.regions.empty()) return std::nullopt;
    return *std::min_element(a.query.regions.begin(), a.query.regions.end());
}

void encode_into(ByteWriter& w, const ChainTx& t) {
    std::visit(
        [&w](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, tx::RsiTransaction>) {
                w.u8(static_cast<std::uint8_t>(TxTag::Rsi));
            } else if constexpr (std::is_same_v<T, tx::SmartContract>) {
                w.u8(static_cast<std::uint8_t>(TxTag::Contract));
            } else {
                w.u8(static_cast<std::uint8_t>(TxTag::Access));
            }
            tx::encode_into(w, v);
        },
        t);
}

ChainTx read_chain_tx(ByteReader& r) {
    switch (static_cast<TxTag>(r.u8())) {
        case TxTag::Rsi: return tx::read_rsi_tx(r);
        case TxTag::Contract: return tx::read_contract(r);
        case TxTag::Access: return tx::read_access_tx(r);
    }
    throw DecodeError("unknown transaction tag");
}

void encode_into(ByteWriter& w, const Block& b) {
    encode_block_header(w, b);
    w.raw(b.block_hash.bytes);
}

Bytes encode(const Block& b) {
    ByteWriter w;
    encode_into(w, b);
    return std::move(w).take();
}

Block read_block(ByteReader& r) {
    Block b;
    b.height = r.u64();
    b.prev_hash = read_digest(r);
    b.timestamp = r.u64();
    const auto n = r.count(1);
    b.txs.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) b.txs.push_back(read_chain_tx(r));
    b.block_hash = read_digest(r);
    return b;
}

Block decode_block(ByteView bytes) {
    ByteReader r(bytes);
    auto b = read_block(r);
    r.expect_done();
    return b;
}

crypto::Digest compute_block_hash(const Block& b) {
    ByteWriter w;
    encode_block_header(w, b);
    return crypto::sha256(w.data());
}

Ledger genesis(RegionId region) {
    Ledger l;
    l.rsi_region = region;
    Block g;
    g.block_hash = compute_block_hash(g);
    l.blocks.push_back(std::move(g));
    return l;
}

Verdict miner_admit(RegionId ledger_region, const ChainTx& t, const MinerPolicy& policy) {
    if (const auto* rsi = std::get_if<tx::RsiTransaction>(&t)) {
        const auto v = tx::verify_rsi_tx(*rsi, policy);
        if (!v.accepted()) return v;
        if (tx::certified_region(policy, rsi->rsi_pk) != std::optional<RegionId>(ledger_region)) {
            return Verdict::reject(tx::Reason::WrongLedger);
        }
        return v;
    }
    if (const auto* c = std::get_if<tx::SmartContract>(&t)) {
        const auto home = home_region(*c);
        if (!home) return Verdict::reject(tx::Reason::Malformed);
        const auto v = tx::verify_contract(*c, policy);
        if (!v.accepted()) return v;
        if (*home != ledger_region) return Verdict::reject(tx::Reason::WrongLedger);
        return v;
    }
    const auto& a = std::get<tx::AccessTransaction>(t);
    const auto home = home_region(a);
    if (!home) return Verdict::reject(tx::Reason::Malformed);
    const auto v = tx::verify_access_tx(a, policy);
    if (!v.accepted()) return v;
    if (*home != ledger_region) return Verdict::reject(tx::Reason::WrongLedger);
    return v;
}

const Block& append_block(Ledger& ledger, std::vector<ChainTx> txs, std::uint64_t timestamp,
                          const MinerPolicy& policy) {
    if (txs.empty()) throw EmptyBlockError();
    for (std::size_t i = 0; i < txs.size(); ++i) {
        const auto v = miner_admit(ledger.rsi_region, txs[i], policy);
        if (!v.accepted()) throw AdmissionError(i, v.reason);
    }
    Block b;
    b.height = ledger.blocks.size();
    b.prev_hash = ledger.blocks.empty() ? crypto::Digest::zero() : ledger.tip().block_hash;
    b.timestamp = timestamp;
    b.txs = std::move(txs);
    b.block_hash = compute_block_hash(b);
    ledger.blocks.push_back(std::move(b));
    return ledger.tip();
}

ChainStatus validate_chain(const Ledger& ledger) {
    if (ledger.blocks.empty()) return ChainStatus::tampered(0);
    for (std::size_t i = 0; i < ledger.blocks.size(); ++i) {
        const auto& b = ledger.blocks[i];
        const auto expected_prev =
            i == 0 ? crypto::Digest::zero() : ledger.blocks[i - 1].block_hash;
        if (b.height != i || b.prev_hash != expected_prev ||
            compute_block_hash(b) != b.block_hash) {
            return ChainStatus::tampered(i);
        }
    }
    return ChainStatus::valid();
}

std::vector<tx::AccessTransaction> lookup_access_log(const Ledger& ledger,
                                                     const crypto::PublicKey& owner,
                                                     const ContractLookup& contracts) {
    std::vector<tx::AccessTransaction> out;
    for (const auto& b : ledger.blocks) {
        for (const auto& t : b.txs) {
            const auto* a = std::get_if<tx::AccessTransaction>(&t);
            if (a == nullptr) continue;
            bool mine = false;
            if (const auto* o = std::get_if<tx::OwnerSig>(&a->grant)) {
                mine = o->owner_pk == owner;
            } else if (const auto* c = std::get_if<tx::ContractRef>(&a->grant)) {
                const auto contract = contracts(c->contract_id);
                mine = contract && contract->owner_pk == owner;
            }
            if (mine) out.push_back(*a);
        }
    }
    return out;
}

Bytes encode_ledger(const Ledger& ledger) {
    ByteWriter w;
    w.u32(ledger.rsi_region);
    w.u32(static_cast<std::uint32_t>(ledger.blocks.size()));
    for (const auto& b : ledger.blocks) encode_into(w, b);
    return std::move(w).take();
}

Ledger decode_ledger(ByteView bytes) {
    ByteReader r(bytes);
    Ledger l;
    std::uint32_t n = 0;
    try {
        l.rsi_region = r.u32();
        n = r.count(1);
    } catch (const DecodeError& e) {
        throw LedgerDecodeError(0, e.what());
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        try {
            l.blocks.push_back(read_block(r));
        } catch (const DecodeError& e) {
            throw LedgerDecodeError(i, e.what());
        }
    }
    if (!r.done()) throw LedgerDecodeError(n, "trailing bytes after last block");
    return l;
}

ChainStatus validate_dump(ByteView bytes) {
    ByteReader r(bytes);
    Ledger l;
    std::uint32_t n = 0;
    try {
        l.rsi_region = r.u32();
        n = r.count(1);
    } catch (const DecodeError&) {
        return ChainStatus::tampered(0);
    }
    std::optional<std::uint64_t> undecodable;
    for (std::uint32_t i = 0; i < n; ++i) {
        try {
            l.blocks.push_back(read_block(r));
        } catch (const DecodeError&) {
            undecodable = i;
            break;
        }
    }
    if (!l.blocks.empty()) {
        const auto prefix = validate_chain(l);
        if (!prefix.ok) return prefix;
    }
    if (undecodable) return ChainStatus::tampered(*undecodable);
    if (!r.done()) return ChainStatus::tampered(n);
    return validate_chain(l);
}

void save_ledger(const Ledger& ledger, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto bytes = encode_ledger(ledger);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Ledger load_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ledger(bytes);
}

namespace {

nlohmann::ordered_json payload_json(const tx::Payload& p) {
    nlohmann::ordered_json j;
    j["loc"] = {{"lat_micro", p.loc.lat_micro}, {"lon_micro", p.loc.lon_micro}};
    j["event"] = p.event.describe();
    j["timestamp"] = p.timestamp;
    return j;
}

nlohmann::ordered_json scope_json(const tx::DataScope& s) {
    nlohmann::ordered_json kinds = nlohmann::ordered_json::array();
    for (auto k : s.kinds) kinds.push_back(tx::to_string(k));
    return {{"regions", s.regions},
            {"period", {s.period.start, s.period.end}},
            {"kinds", kinds}};
}

}  // namespace

nlohmann::ordered_json to_json(const ChainTx& t) {
    nlohmann::ordered_json j;
    j["id"] = chain_tx_id(t).hex();
    if (const auto* r = std::get_if<tx::RsiTransaction>(&t)) {
        j["type"] = "rsi";
        j["rsi_pk"] = to_hex(r->rsi_pk.bytes);
        j["payload"] = payload_json(r->payload);
        auto pks = nlohmann::ordered_json::array();
        for (const auto& pk : r->vehicle_pks) pks.push_back(to_hex(pk.bytes));
        j["vehicle_pks"] = pks;
        j["flag"] = r->flag;
    } else if (const auto* c = std::get_if<tx::SmartContract>(&t)) {
        j["type"] = "contract";
        j["owner_pk"] = to_hex(c->owner_pk.bytes);
        j["grantee_pk"] = to_hex(c->grantee_pk.bytes);
        j["timespan"] = {c->timespan.start, c->timespan.end};
        j["scope"] = scope_json(c->scope);
        j["price"] = c->price;
    } else {
        const auto& a = std::get<tx::AccessTransaction>(t);
        j["type"] = "access";
        j["requester_pk"] = to_hex(a.requester_pk.bytes);
        j["query"] = scope_json(a.query);
        if (const auto* c = std::get_if<tx::ContractRef>(&a.grant)) {
            j["grant"] = {{"contract", c->contract_id.hex()}};
        } else if (const auto* o = std::get_if<tx::OwnerSig>(&a.grant)) {
            j["grant"] = {{"owner_pk", to_hex(o->owner_pk.bytes)}};
        } else {
            j["grant"] = nullptr;
        }
        j["ruletable_signed"] = a.ruletable_sign.has_value();
    }
    return j;
}

nlohmann::ordered_json to_json(const Ledger& ledger) {
    nlohmann::ordered_json j;
    j["region"] = ledger.rsi_region;
    auto blocks = nlohmann::ordered_json::array();
    for (const auto& b : ledger.blocks) {
        nlohmann::ordered_json jb;
        jb["height"] = b.height;
        jb["prev_hash"] = b.prev_hash.hex();
        jb["timestamp"] = b.timestamp;
        jb["block_hash"] = b.block_hash.hex();
        auto txs = nlohmann::ordered_json::array();
        for (const auto& t : b.txs) txs.push_back(to_json(t));
        jb["txs"] = txs;
        blocks.push_back(std::move(jb));
    }
    j["blocks"] = blocks;
    return j;
}

// --- LedgerSet -----------------------------------------------------------------

void LedgerSet::add_region(RegionId region) {
    if (!ledgers_.contains(region)) ledgers_.emplace(region, genesis(region));
}

Verdict LedgerSet::submit(RegionId region, ChainTx t) {
    if (!ledgers_.contains(region)) return Verdict::reject(tx::Reason::WrongLedger);
    const auto v = miner_admit(region, t, policy_);
    if (v.accepted()) pending_[region].push_back(std::move(t));
    return v;
}

Verdict LedgerSet::submit(ChainTx t) {
    std::optional<RegionId> home;
    if (const auto* c = std::get_if<tx::SmartContract>(&t)) {
        home = home_region(*c);
    } else if (const auto* a = std::get_if<tx::AccessTransaction>(&t)) {
        home = home_region(*a);
    } else {
        const auto& r = std::get<tx::RsiTransaction>(t);
        home = tx::certified_region(policy_, r.rsi_pk);
    }
    if (!home) return Verdict::reject(tx::Reason::Malformed);
    return submit(*home, std::move(t));
}

std::vector<std::pair<RegionId, std::uint64_t>> LedgerSet::seal(std::uint64_t timestamp) {
    std::vector<std::pair<RegionId, std::uint64_t>> sealed;
    for (auto& [region, txs] : pending_) {
        if (txs.empty()) continue;
        auto& l = ledgers_.at(region);
        const auto& b = append_block(l, std::move(txs), timestamp, policy_);
        for (std::size_t i = 0; i < b.txs.size(); ++i) {
            index_.emplace(chain_tx_id(b.txs[i]), TxLocation{region, b.height, i});
        }
        sealed.emplace_back(region, b.height);
    }
    pending_.clear();
    return sealed;
}

std::size_t LedgerSet::pending_count() const {
    std::size_t n = 0;
    for (const auto& [_, txs] : pending_) n += txs.size();
    return n;
}

std::optional<TxLocation> LedgerSet::locate(const crypto::Digest& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const ChainTx& LedgerSet::at(const TxLocation& loc) const {
    return ledgers_.at(loc.region).blocks.at(loc.height).txs.at(loc.index);
}

std::optional<tx::SmartContract> LedgerSet::find_contract(const crypto::Digest& id) const {
    const auto loc = locate(id);
    if (!loc) return std::nullopt;
    if (const auto* c = std::get_if<tx::SmartContract>(&at(*loc))) return *c;
    return std::nullopt;
}

std::vector<tx::AccessTransaction> LedgerSet::lookup_access_log(
    const crypto::PublicKey& owner) const {
    const ContractLookup contracts = [this](const crypto::Digest& id) { return find_contract(id); };
    std::vector<tx::AccessTransaction> out;
    for (const auto& [_, l] : ledgers_) {
        auto part = ledger::lookup_access_log(l, owner, contracts);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

}  // namespace dmap::ledger
