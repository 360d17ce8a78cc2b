#include "dmap/edge.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace dmap::edge {

void ConsistencyPolicy::validate() const {
    if (!(eps_distance_m > 0.0)) throw std::invalid_argument("eps_distance");
    if (eps_time_ms == 0) throw std::invalid_argument("eps_time");
    if (min_corroboration < 2) throw std::invalid_argument("min_corroboration");
}

WindowStats& WindowStats::operator+=(const WindowStats& o) {
    received += o.received;
    sig_rejects += o.sig_rejects;
    stale += o.stale;
    rejected_reports += o.rejected_reports;
    lone_reports += o.lone_reports;
    trusted_tx += o.trusted_tx;
    lone_tx += o.lone_tx;
    trusted_members += o.trusted_members;
    lone_members += o.lone_members;
    unrepresented += o.unrepresented;
    return *this;
}

RsiState make_rsi_state(RegionId region, crypto::KeyPair key, const crypto::SignatureScheme& scheme,
                        std::uint64_t window_ms, std::uint64_t opens_at) {
    if (window_ms == 0) throw std::invalid_argument("window_ms");
    RsiState s;
    s.region = region;
    s.key = std::move(key);
    s.scheme = &scheme;
    s.window_ms = window_ms;
    s.window.window_id = opens_at / window_ms;
    s.window.opens_at = opens_at;
    s.window.closes_at = opens_at + window_ms;
    s.current.window_id = s.window.window_id;
    return s;
}

IngestResult ingest(RsiState& rsi, const tx::DataTransaction& report, std::uint64_t now) {
    ++rsi.current.received;
    if (!tx::verify_data_tx(*rsi.scheme, report)) {
        ++rsi.current.sig_rejects;
        return IngestResult::SignatureRejected;
    }
    const auto ts = report.payload.timestamp;
    if (ts < rsi.window.opens_at || ts >= rsi.window.closes_at || ts > now ||
        rsi.keys_in_window.contains(report.pk)) {
        ++rsi.current.stale;
        return IngestResult::Stale;
    }
    rsi.keys_in_window.insert(report.pk);
    rsi.window.reports.push_back(report);
    return IngestResult::Buffered;
}

bool compatible(const tx::DataTransaction& a, const tx::DataTransaction& b,
                const ConsistencyPolicy& policy) {
    if (a.payload.event != b.payload.event) return false;
    const auto ta = a.payload.timestamp;
    const auto tb = b.payload.timestamp;
    if ((ta > tb ? ta - tb : tb - ta) > policy.eps_time_ms) return false;
    return tx::distance_m(a.payload.loc, b.payload.loc) <= policy.eps_distance_m;
}

std::vector<Cluster> cluster_reports(const std::vector<tx::DataTransaction>& reports,
                                     const ConsistencyPolicy& policy) {
    const auto n = reports.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&parent](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!compatible(reports[i], reports[j], policy)) continue;
            const auto ri = find(i);
            const auto rj = find(j);
            // Keep the smaller index as root so clusters order by first report.
            if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
        }
    }
    std::vector<Cluster> clusters;
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = find(i);
        auto [it, inserted] = slot.try_emplace(root, clusters.size());
        if (inserted) clusters.emplace_back();
        clusters[it->second].reports.push_back(reports[i]);
    }
    return clusters;
}

std::size_t medoid(const std::vector<tx::DataTransaction>& reports) {
    if (reports.empty()) throw std::invalid_argument("medoid of an empty cluster");
    std::size_t best = 0;
    double best_sum = 0.0;
    Bytes best_bytes;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        double sum = 0.0;
        for (const auto& other : reports) {
            sum += tx::distance_m(reports[i].payload.loc, other.payload.loc);
        }
        if (i == 0 || sum < best_sum) {
            best = i;
            best_sum = sum;
            best_bytes = tx::encode(reports[i]);
        } else if (sum == best_sum) {
            auto bytes = tx::encode(reports[i]);
            if (bytes < best_bytes) {
                best = i;
                best_bytes = std::move(bytes);
            }
        }
    }
    return best;
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::Trusted: return "Trusted";
        case Status::LoneReport: return "LoneReport";
        case Status::RejectedMinority: return "RejectedMinority";
    }
    return "Unknown";
}

tx::GridCell locus_of(const tx::Payload& p, const ConsistencyPolicy& policy) {
    return tx::grid_cell(p.loc, policy.eps_distance_m);
}

std::vector<ClusterVerdict> judge_clusters(const std::vector<Cluster>& clusters,
                                           const ConsistencyPolicy& policy) {
    std::vector<ClusterVerdict> verdicts;
    verdicts.reserve(clusters.size());
    for (const auto& c : clusters) {
        ClusterVerdict v;
        v.reports = c.reports;
        v.payload = c.reports.at(medoid(c.reports)).payload;
        for (const auto& r : c.reports) v.members.push_back({r.pk, r.vehicle_sign});
        verdicts.push_back(std::move(v));
    }

    std::map<tx::GridCell, std::vector<std::size_t>> loci;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        loci[locus_of(verdicts[i].payload, policy)].push_back(i);
    }

    for (const auto& [_, idx] : loci) {
        std::size_t largest = 0;
        for (auto i : idx) largest = std::max(largest, verdicts[i].reports.size());
        std::set<tx::EventKind> winning_kinds;
        for (auto i : idx) {
            if (verdicts[i].reports.size() == largest) winning_kinds.insert(verdicts[i].payload.event);
        }
        if (winning_kinds.size() == 1) {
            const auto& plurality = *winning_kinds.begin();
            for (auto i : idx) {
                auto& v = verdicts[i];
                if (v.payload.event != plurality) {
                    v.status = Status::RejectedMinority;
                } else {
                    v.status = v.reports.size() >= policy.min_corroboration ? Status::Trusted
                                                                            : Status::LoneReport;
                }
            }
        } else {
            // No plurality: tied leaders are unconfirmed, everything smaller is outvoted.
            for (auto i : idx) {
                verdicts[i].status = verdicts[i].reports.size() == largest
                                         ? Status::LoneReport
                                         : Status::RejectedMinority;
            }
        }
    }
    return verdicts;
}

std::vector<tx::RsiTransaction> close_window(RsiState& rsi, const ConsistencyPolicy& policy) {
    std::vector<tx::RsiTransaction> out;
    const auto verdicts = judge_clusters(cluster_reports(rsi.window.reports, policy), policy);
    auto& st = rsi.current;
    for (const auto& v : verdicts) {
        if (v.status == Status::RejectedMinority) {
            st.rejected_reports += v.reports.size();
            continue;
        }
        std::vector<tx::Member> carried;
        for (const auto& r : v.reports) {
            if (r.payload == v.payload) carried.push_back({r.pk, r.vehicle_sign});
        }
        const std::uint64_t dropped = v.reports.size() - carried.size();
        const bool trusted = v.status == Status::Trusted;
        out.push_back(tx::build_rsi_tx(*rsi.scheme, rsi.key, v.payload, carried, trusted ? 1 : 0));
        st.unrepresented += dropped;
        if (trusted) {
            ++st.trusted_tx;
            st.trusted_members += carried.size();
        } else {
            ++st.lone_tx;
            st.lone_members += carried.size();
            st.lone_reports += v.reports.size();
        }
    }

    rsi.totals += st;
    rsi.history.push_back(st);
    const auto next_open = rsi.window.closes_at;
    rsi.window = ValidationWindow{rsi.window.window_id + 1, next_open, next_open + rsi.window_ms, {}};
    rsi.keys_in_window.clear();
    rsi.current = WindowStats{};
    rsi.current.window_id = rsi.window.window_id;
    return out;
}

bool Association::handover(RegionId from, RegionId to, bool to_certified) {
    if (from == to) return false;
    const std::optional<RegionId> target = to_certified ? std::optional<RegionId>(to) : std::nullopt;
    if (!current_) {
        // Nothing to keep alive: attach straight away.
        pending_.reset();
        if (!target) return false;
        current_ = target;
        return true;
    }
    if (target == current_) {
        const bool had = pending_.has_value();
        pending_.reset();
        return had;
    }
    if (pending_ && *pending_ == target) return false;
    pending_ = target;
    return true;
}

bool Association::roll_over() {
    if (!pending_) return false;
    current_ = *pending_;
    pending_.reset();
    return true;
}

}  // namespace dmap::edge
