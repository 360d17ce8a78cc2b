#pragma once

// RSI-side validation of vehicle reports: reports are buffered for one
// validation window, grouped by consistency, judged by plurality within each
// spatial locus, and aggregated into one multisign transaction per group.

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "dmap/txmodel.hpp"

namespace dmap::edge {

inline constexpr std::uint64_t kDefaultWindowMs = 5000;

struct ConsistencyPolicy {
    /// Max distance between two linked reports, metres. Also the side of the
    /// locus grid used to decide which clusters conflict.
    double eps_distance_m = 50.0;
    std::uint64_t eps_time_ms = 2000;
    std::size_t min_corroboration = 2;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct ValidationWindow {
    std::uint64_t window_id = 0;
    std::uint64_t opens_at = 0;
    std::uint64_t closes_at = 0;
    std::vector<tx::DataTransaction> reports;
};

/// Aggregate reputation counters. Per-vehicle reputation cannot exist when
/// every report carries a fresh key, so the RSI keeps per-region totals.
struct WindowStats {
    std::uint64_t window_id = 0;
    std::uint64_t received = 0;
    std::uint64_t sig_rejects = 0;
    /// Outside the window, or a key already seen in it.
    std::uint64_t stale = 0;
    std::uint64_t rejected_reports = 0;
    std::uint64_t lone_reports = 0;
    std::uint64_t trusted_tx = 0;
    std::uint64_t lone_tx = 0;
    std::uint64_t trusted_members = 0;
    std::uint64_t lone_members = 0;
    /// Corroborating reports whose signed payload differs from the chosen
    /// representative and therefore cannot ride along as a member signature.
    std::uint64_t unrepresented = 0;

    WindowStats& operator+=(const WindowStats& o);
};

struct RsiState {
    RegionId region = 0;
    crypto::KeyPair key;
    const crypto::SignatureScheme* scheme = &crypto::ed25519();
    std::uint64_t window_ms = kDefaultWindowMs;
    ValidationWindow window;
    WindowStats current;
    WindowStats totals;
    std::vector<WindowStats> history;
    std::set<crypto::PublicKey> keys_in_window;
};

RsiState make_rsi_state(RegionId region, crypto::KeyPair key, const crypto::SignatureScheme& scheme,
                        std::uint64_t window_ms = kDefaultWindowMs, std::uint64_t opens_at = 0);

enum class IngestResult { Buffered, SignatureRejected, Stale };

IngestResult ingest(RsiState& rsi, const tx::DataTransaction& report, std::uint64_t now);

struct Cluster {
    std::vector<tx::DataTransaction> reports;
};

/// Whether two reports may share a cluster: same event kind and within both
/// eps bounds.
bool compatible(const tx::DataTransaction& a, const tx::DataTransaction& b,
                const ConsistencyPolicy& policy);

/// Connected components of the compatibility graph, ordered by first report.
std::vector<Cluster> cluster_reports(const std::vector<tx::DataTransaction>& reports,
                                     const ConsistencyPolicy& policy);

/// Index of the report with minimum summed distance to the others; ties go
/// to the lexicographically smallest canonical encoding.
std::size_t medoid(const std::vector<tx::DataTransaction>& reports);

enum class Status { Trusted, LoneReport, RejectedMinority };

std::string_view to_string(Status s);

struct ClusterVerdict {
    tx::Payload payload;
    std::vector<tx::Member> members;
    Status status = Status::LoneReport;
    std::vector<tx::DataTransaction> reports;
};

tx::GridCell locus_of(const tx::Payload& p, const ConsistencyPolicy& policy);

std::vector<ClusterVerdict> judge_clusters(const std::vector<Cluster>& clusters,
                                           const ConsistencyPolicy& policy);

/// Judges the open window, emits one transaction per Trusted (flag 1) or
/// LoneReport (flag 0) cluster, discards minorities, and opens the next
/// window.
std::vector<tx::RsiTransaction> close_window(RsiState& rsi, const ConsistencyPolicy& policy);

/// A vehicle's RSI association with soft handover: after crossing into a new
/// region the old association stays in force until the next window opens.
class Association {
public:
    Association() = default;
    explicit Association(std::optional<RegionId> initial) : current_(initial) {}

    /// `to_certified` says whether the new region has a certified RSI. Returns
    /// true when a change was scheduled or applied.
    bool handover(RegionId from, RegionId to, bool to_certified);
    /// Applies a pending switch; call when a window opens.
    bool roll_over();

    [[nodiscard]] std::optional<RegionId> current() const { return current_; }
    [[nodiscard]] bool switching() const { return pending_.has_value(); }
    [[nodiscard]] std::optional<RegionId> pending_target() const {
        return pending_ ? *pending_ : std::nullopt;
    }

private:
    std::optional<RegionId> current_;
    std::optional<std::optional<RegionId>> pending_;
};

}  // namespace dmap::edge
