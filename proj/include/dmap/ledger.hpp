#pragma once

// Per-RSI hash-chained ledgers. Each region has its own chain; block
// production is restricted to transactions the miner policy admits for that
// region, which is how certificate-based authority is enforced.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmap/txmodel.hpp"

namespace dmap::ledger {

using tx::MinerPolicy;
using tx::Verdict;

using ChainTx = std::variant<tx::RsiTransaction, tx::SmartContract, tx::AccessTransaction>;

class AdmissionError : public std::runtime_error {
public:
    AdmissionError(std::size_t index, tx::Reason reason);
    std::size_t index;
    tx::Reason reason;
};

class EmptyBlockError : public std::invalid_argument {
public:
    EmptyBlockError() : std::invalid_argument("blocks must carry at least one transaction") {}
};

/// A ledger dump that fails to decode; `height` is the first undecodable block.
class LedgerDecodeError : public DecodeError {
public:
    LedgerDecodeError(std::uint64_t height, const std::string& what);
    std::uint64_t height;
};

struct Block {
    std::uint64_t height = 0;
    crypto::Digest prev_hash;
    std::uint64_t timestamp = 0;
    std::vector<ChainTx> txs;
    crypto::Digest block_hash;

    bool operator==(const Block&) const = default;
};

struct Ledger {
    RegionId rsi_region = 0;
    std::vector<Block> blocks;

    [[nodiscard]] const Block& tip() const { return blocks.back(); }
    bool operator==(const Ledger&) const = default;
};

/// Digest identifying a chained transaction: contract_id for contracts,
/// sha256 of the canonical encoding otherwise.
crypto::Digest chain_tx_id(const ChainTx& t);

/// Region whose ledger a contract or access transaction belongs on: the
/// lowest region id of its scope or query.
std::optional<RegionId> home_region(const tx::SmartContract& c);
std::optional<RegionId> home_region(const tx::AccessTransaction& a);

void encode_into(ByteWriter& w, const ChainTx& t);
ChainTx read_chain_tx(ByteReader& r);

void encode_into(ByteWriter& w, const Block& b);
Bytes encode(const Block& b);
Block read_block(ByteReader& r);
Block decode_block(ByteView bytes);

crypto::Digest compute_block_hash(const Block& b);

Ledger genesis(RegionId region);

Verdict miner_admit(RegionId ledger_region, const ChainTx& t, const MinerPolicy& policy);

/// Throws EmptyBlockError or AdmissionError; the ledger is unchanged then.
const Block& append_block(Ledger& ledger, std::vector<ChainTx> txs, std::uint64_t timestamp,
                          const MinerPolicy& policy);

struct ChainStatus {
    bool ok = true;
    std::uint64_t first_bad_height = 0;

    static ChainStatus valid() { return {}; }
    static ChainStatus tampered(std::uint64_t h) { return {false, h}; }
    bool operator==(const ChainStatus&) const = default;
};

ChainStatus validate_chain(const Ledger& ledger);

using ContractLookup = std::function<std::optional<tx::SmartContract>(const crypto::Digest&)>;

/// Access transactions whose grant was issued by `owner`, in chain order.
std::vector<tx::AccessTransaction> lookup_access_log(const Ledger& ledger,
                                                     const crypto::PublicKey& owner,
                                                     const ContractLookup& contracts);

// --- dump / load -------------------------------------------------------------

/// u32 region || u32 block count || canonical blocks.
Bytes encode_ledger(const Ledger& ledger);
/// Throws LedgerDecodeError naming the first undecodable block.
Ledger decode_ledger(ByteView bytes);
/// validate_chain over a raw dump. A corrupted length prefix can make the
/// damaged block decode as garbage and the failure surface one block later,
/// so the decodable prefix is hash-checked before a decode failure is blamed.
ChainStatus validate_dump(ByteView bytes);
void save_ledger(const Ledger& ledger, const std::filesystem::path& path);
Ledger load_ledger(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ChainTx& t);
nlohmann::ordered_json to_json(const Ledger& ledger);

// --- ledger set ----------------------------------------------------------------

struct TxLocation {
    RegionId region = 0;
    std::uint64_t height = 0;
    std::size_t index = 0;
};

/// All regional ledgers plus the mempool feeding them. Transactions are
/// admitted on submit and chained by the next seal().
class LedgerSet {
public:
    explicit LedgerSet(MinerPolicy policy) : policy_(std::move(policy)) {}

    void add_region(RegionId region);
    [[nodiscard]] bool has_region(RegionId region) const { return ledgers_.contains(region); }

    /// Admits and queues; rejected transactions are not queued.
    Verdict submit(RegionId region, ChainTx t);
    /// Queues a contract or access transaction on its home region.
    Verdict submit(ChainTx t);

    /// One block per region with pending transactions, ascending region id.
    std::vector<std::pair<RegionId, std::uint64_t>> seal(std::uint64_t timestamp);

    [[nodiscard]] const std::map<RegionId, Ledger>& ledgers() const { return ledgers_; }
    [[nodiscard]] const Ledger& ledger(RegionId region) const { return ledgers_.at(region); }
    [[nodiscard]] const MinerPolicy& policy() const { return policy_; }
    MinerPolicy& policy() { return policy_; }
    [[nodiscard]] std::size_t pending_count() const;

    [[nodiscard]] std::optional<TxLocation> locate(const crypto::Digest& id) const;
    [[nodiscard]] std::optional<tx::SmartContract> find_contract(const crypto::Digest& id) const;
    [[nodiscard]] const ChainTx& at(const TxLocation& loc) const;

    [[nodiscard]] std::vector<tx::AccessTransaction> lookup_access_log(
        const crypto::PublicKey& owner) const;

private:
    MinerPolicy policy_;
    std::map<RegionId, Ledger> ledgers_;
    std::map<RegionId, std::vector<ChainTx>> pending_;
    std::map<crypto::Digest, TxLocation> index_;
};

}  // namespace dmap::ledger
