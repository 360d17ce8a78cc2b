#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "dmap/edge.hpp"

using namespace dmap;
using namespace dmap::edge;
using tx::EventKind;

namespace {

const auto& S = crypto::keyed_hash();
std::uint64_t key_counter = 0;

crypto::KeyPair fresh() { return S.generate_keypair(crypto::seed_from_u64(key_counter++, 500)); }

const tx::GeoPoint kBase{48'137'154, 11'576'124};

tx::DataTransaction report(double east, double north, EventKind kind, std::uint64_t ts) {
    return tx::build_data_tx(S, fresh(), tx::offset_m(kBase, east, north), kind, ts);
}

RsiState rsi(RegionId region = 0, std::uint64_t opens_at = 0) {
    return make_rsi_state(region, S.generate_keypair(crypto::seed_from_u64(region, 501)), S, 5000,
                          opens_at);
}

// Oracle: components by depth-first search over the explicit pairwise graph.
std::set<std::set<std::size_t>> dfs_components(const std::vector<tx::DataTransaction>& rs,
                                               const ConsistencyPolicy& p) {
    const auto n = rs.size();
    std::vector<bool> seen(n);
    std::set<std::set<std::size_t>> out;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::set<std::size_t> comp;
        std::vector<std::size_t> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            comp.insert(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (seen[j]) continue;
                const auto& a = rs[i].payload;
                const auto& b = rs[j].payload;
                const auto dt = a.timestamp > b.timestamp ? a.timestamp - b.timestamp : b.timestamp - a.timestamp;
                if (a.event == b.event && dt <= p.eps_time_ms &&
                    tx::distance_m(a.loc, b.loc) <= p.eps_distance_m) {
                    seen[j] = true;
                    stack.push_back(j);
                }
            }
        }
        out.insert(comp);
    }
    return out;
}

std::set<std::set<std::size_t>> as_index_sets(const std::vector<Cluster>& cs,
                                               const std::vector<tx::DataTransaction>& rs) {
    std::set<std::set<std::size_t>> out;
    for (const auto& c : cs) {
        std::set<std::size_t> s;
        for (const auto& r : c.reports) {
            const auto it = std::find(rs.begin(), rs.end(), r);
            s.insert(static_cast<std::size_t>(it - rs.begin()));
        }
        out.insert(s);
    }
    return out;
}

// Oracle: within a locus, a kind wins only if it alone holds the largest cluster.
Status expected_status(const std::vector<ClusterVerdict>& vs, std::size_t i, const ConsistencyPolicy& p) {
    const auto cell = locus_of(vs[i].payload, p);
    std::map<EventKind, std::size_t> best_per_kind;
    for (const auto& v : vs) {
        if (locus_of(v.payload, p) != cell) continue;
        auto& b = best_per_kind[v.payload.event];
        b = std::max(b, v.reports.size());
    }
    std::size_t top = 0;
    for (const auto& [_, s] : best_per_kind) top = std::max(top, s);
    std::vector<EventKind> leaders;
    for (const auto& [k, s] : best_per_kind) {
        if (s == top) leaders.push_back(k);
    }
    const auto& me = vs[i];
    if (leaders.size() > 1) return me.reports.size() == top ? Status::LoneReport : Status::RejectedMinority;
    if (me.payload.event != leaders[0]) return Status::RejectedMinority;
    return me.reports.size() >= p.min_corroboration ? Status::Trusted : Status::LoneReport;
}

}  // namespace

TEST_CASE("ConsistencyPolicy validation names the field") {
    ConsistencyPolicy p;
    CHECK_NOTHROW(p.validate());
    p.min_corroboration = 1;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("min_corroboration"), std::invalid_argument);
    p = {};
    p.eps_distance_m = 0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("eps_distance"), std::invalid_argument);
    p = {};
    p.eps_time_ms = 0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("eps_time"), std::invalid_argument);
}

TEST_CASE("ingest") {
    auto st = rsi(0, 5000);
    CHECK(ingest(st, report(0, 0, EventKind::road_damage(), 6000), 6000) == IngestResult::Buffered);
    CHECK(st.window.reports.size() == 1);

    auto broken = report(0, 0, EventKind::road_damage(), 6000);
    broken.vehicle_sign.bytes[0] ^= 1;
    CHECK(ingest(st, broken, 6000) == IngestResult::SignatureRejected);
    CHECK(st.current.sig_rejects == 1);

    CHECK(ingest(st, report(0, 0, EventKind::road_damage(), 4999), 6000) == IngestResult::Stale);
    CHECK(ingest(st, report(0, 0, EventKind::road_damage(), 10000), 10000) == IngestResult::Stale);
    CHECK(st.current.stale == 2);

    const auto dup = report(0, 0, EventKind::road_damage(), 6100);
    CHECK(ingest(st, dup, 6100) == IngestResult::Buffered);
    CHECK(ingest(st, dup, 6200) == IngestResult::Stale);
    CHECK(st.window.reports.size() == 2);
    CHECK(st.current.received == 6);
}

TEST_CASE("cluster_reports spec examples") {
    const ConsistencyPolicy p;
    const std::vector three{report(0, 0, EventKind::road_damage(), 1000),
                            report(12, 10, EventKind::road_damage(), 1300),
                            report(5, -8, EventKind::road_damage(), 1500)};
    const auto c3 = cluster_reports(three, p);
    REQUIRE(c3.size() == 1);
    CHECK(c3[0].reports.size() == 3);

    std::vector<tx::DataTransaction> mixed;
    for (int i = 0; i < 4; ++i) mixed.push_back(report(0, 0, EventKind::road_damage(), 1000));
    mixed.push_back(report(0, 0, EventKind::clear(), 1000));
    const auto c5 = cluster_reports(mixed, p);
    REQUIRE(c5.size() == 2);
    CHECK(c5[0].reports.size() == 4);
    CHECK(c5[1].reports.size() == 1);
    CHECK(as_index_sets(c5, mixed) == dfs_components(mixed, p));

    CHECK(cluster_reports({}, p).empty());
}

TEST_CASE("cluster_reports is the connected-component partition (random property)") {
    std::mt19937_64 rng(99);
    ConsistencyPolicy p;
    const EventKind kinds[] = {EventKind::road_damage(), EventKind::clear(), EventKind::traffic_speed(30),
                               EventKind::traffic_speed(31)};
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<tx::DataTransaction> rs;
        const auto n = rng() % 14;
        for (std::size_t i = 0; i < n; ++i) {
            rs.push_back(report(static_cast<double>(rng() % 200), static_cast<double>(rng() % 200),
                                kinds[rng() % 4], 1000 + rng() % 5000));
        }
        const auto cs = cluster_reports(rs, p);
        std::size_t total = 0;
        for (const auto& c : cs) total += c.reports.size();
        CHECK(total == rs.size());
        CHECK(as_index_sets(cs, rs) == dfs_components(rs, p));
    }
}

TEST_CASE("medoid picks the minimum summed distance and breaks ties by encoding") {
    const std::vector rs{report(0, 0, EventKind::clear(), 1), report(10, 0, EventKind::clear(), 1),
                         report(20, 0, EventKind::clear(), 1), report(30, 0, EventKind::clear(), 1),
                         report(60, 0, EventKind::clear(), 1)};
    // Brute-force oracle.
    std::size_t best = 0;
    double best_sum = 1e18;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        double s = 0;
        for (const auto& o : rs) s += tx::distance_m(rs[i].payload.loc, o.payload.loc);
        if (s < best_sum) {
            best_sum = s;
            best = i;
        }
    }
    CHECK(medoid(rs) == best);

    const std::vector tie{report(0, 0, EventKind::clear(), 1), report(0, 0, EventKind::clear(), 1)};
    const auto expect = tx::encode(tie[0]) < tx::encode(tie[1]) ? 0u : 1u;
    CHECK(medoid(tie) == expect);
}

TEST_CASE("judge_clusters spec examples") {
    const ConsistencyPolicy p;
    SUBCASE("4 vs 1 conflicting") {
        std::vector<tx::DataTransaction> rs;
        for (int i = 0; i < 4; ++i) rs.push_back(report(0, 0, EventKind::road_damage(), 1000));
        rs.push_back(report(0, 0, EventKind::clear(), 1000));
        const auto v = judge_clusters(cluster_reports(rs, p), p);
        REQUIRE(v.size() == 2);
        CHECK(v[0].status == Status::Trusted);
        CHECK(v[0].members.size() == 4);
        CHECK(v[1].status == Status::RejectedMinority);
    }
    SUBCASE("single report") {
        const auto v = judge_clusters(cluster_reports({report(0, 0, EventKind::road_damage(), 1)}, p), p);
        REQUIRE(v.size() == 1);
        CHECK(v[0].status == Status::LoneReport);
    }
    SUBCASE("2 vs 2 conflicting") {
        const std::vector rs{report(0, 0, EventKind::road_damage(), 1), report(0, 0, EventKind::road_damage(), 1),
                             report(0, 0, EventKind::clear(), 1), report(0, 0, EventKind::clear(), 1)};
        const auto v = judge_clusters(cluster_reports(rs, p), p);
        REQUIRE(v.size() == 2);
        // Enumeration: no cluster is strictly larger than every conflicting one.
        for (std::size_t i = 0; i < v.size(); ++i) {
            bool strict = true;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (i != j && v[j].payload.event != v[i].payload.event &&
                    v[j].reports.size() >= v[i].reports.size()) {
                    strict = false;
                }
            }
            CHECK_FALSE(strict);
            CHECK(v[i].status == Status::LoneReport);
        }
    }
}

TEST_CASE("judge_clusters agrees with the plurality oracle on random loci") {
    std::mt19937_64 rng(7);
    const EventKind kinds[] = {EventKind::road_damage(), EventKind::clear(), EventKind::congestion()};
    for (int trial = 0; trial < 300; ++trial) {
        ConsistencyPolicy p;
        p.min_corroboration = 2 + rng() % 2;
        std::vector<tx::DataTransaction> rs;
        const auto n = rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            // A few fixed spots so loci collide and separate clusters share them.
            const double spots[][2] = {{0, 0}, {0, 0}, {100, 0}, {0, 300}};
            const auto s = rng() % 4;
            rs.push_back(report(spots[s][0], spots[s][1], kinds[rng() % 3], 1000 + (rng() % 2) * 3000));
        }
        const auto vs = judge_clusters(cluster_reports(rs, p), p);
        for (std::size_t i = 0; i < vs.size(); ++i) {
            CAPTURE(trial);
            CHECK(vs[i].status == expected_status(vs, i, p));
            if (vs[i].status == Status::Trusted) CHECK(vs[i].members.size() >= p.min_corroboration);
            if (vs[i].status == Status::LoneReport) {
                // Lone because too small, or because of a tie.
                const bool small = vs[i].members.size() < p.min_corroboration;
                bool tied = false;
                for (std::size_t j = 0; j < vs.size(); ++j) {
                    tied = tied || (j != i && vs[j].payload.event != vs[i].payload.event &&
                                    locus_of(vs[j].payload, p) == locus_of(vs[i].payload, p) &&
                                    vs[j].reports.size() == vs[i].reports.size());
                }
                CHECK((small || tied));
            }
        }
    }
}

TEST_CASE("honest majority is never outvoted; fabricated majority always wins") {
    std::mt19937_64 rng(2024);
    const ConsistencyPolicy p;
    for (int trial = 0; trial < 200; ++trial) {
        const auto honest = 2 + rng() % 8;
        const auto fake = rng() % 12;
        std::vector<tx::DataTransaction> rs;
        for (std::size_t i = 0; i < honest; ++i) rs.push_back(report(0, 0, EventKind::road_damage(), 1000));
        for (std::size_t i = 0; i < fake; ++i) rs.push_back(report(0, 0, EventKind::clear(), 1000));
        std::shuffle(rs.begin(), rs.end(), rng);
        const auto vs = judge_clusters(cluster_reports(rs, p), p);
        for (const auto& v : vs) {
            if (v.payload.event != EventKind::clear()) continue;
            if (honest > fake) CHECK(v.status != Status::Trusted);
            if (fake > honest) CHECK(v.status == Status::Trusted);
        }
    }
}

TEST_CASE("close_window") {
    const ConsistencyPolicy p;
    auto st = rsi(3);
    for (int i = 0; i < 3; ++i) ingest(st, report(0, 0, EventKind::road_damage(), 1000), 1000);
    ingest(st, report(0, 0, EventKind::clear(), 1000), 1000);
    ingest(st, report(400, 400, EventKind::congestion(), 2000), 2000);
    const auto out = close_window(st, p);
    REQUIRE(out.size() == 2);
    CHECK(out[0].flag == 1);
    CHECK(out[0].vehicle_pks.size() == 3);
    CHECK(out[0].payload.event == EventKind::road_damage());
    CHECK(out[1].flag == 0);
    CHECK(out[1].vehicle_pks.size() == 1);
    for (const auto& t : out) {
        CHECK(t.rsi_pk == st.key.public_key);
        CHECK(S.verify(t.rsi_pk, tx::rsi_signing_bytes(t), t.rsi_sign));
        for (std::size_t i = 0; i < t.vehicle_pks.size(); ++i) {
            CHECK(S.verify(t.vehicle_pks[i], tx::data_signing_bytes(t.payload, t.vehicle_pks[i]),
                           t.vehicle_signs[i]));
        }
    }
    const auto& h = st.history.back();
    CHECK(h.received == 5);
    CHECK(h.rejected_reports == 1);
    CHECK(h.trusted_members == 3);
    CHECK(h.lone_members == 1);
    CHECK(h.trusted_tx == 1);
    CHECK(h.lone_tx == 1);
    CHECK(h.received == h.trusted_members + h.lone_members + h.rejected_reports + h.sig_rejects + h.stale +
                            h.unrepresented);

    CHECK(st.window.window_id == 1);
    CHECK(st.window.opens_at == 5000);
    CHECK(st.window.closes_at == 10000);
    CHECK(st.window.reports.empty());
    CHECK(close_window(st, p).empty());
}

TEST_CASE("members whose signed payload differs from the representative are not carried") {
    const ConsistencyPolicy p;
    auto st = rsi(0);
    ingest(st, report(0, 0, EventKind::road_damage(), 1000), 1000);
    ingest(st, report(0, 0, EventKind::road_damage(), 1000), 1000);
    ingest(st, report(3, 0, EventKind::road_damage(), 1000), 1000);
    const auto out = close_window(st, p);
    REQUIRE(out.size() == 1);
    CHECK(out[0].vehicle_pks.size() == 2);
    CHECK(st.totals.unrepresented == 1);
    CHECK(st.totals.trusted_members == 2);
}

TEST_CASE("Association soft handover") {
    Association a(RegionId{0});
    CHECK_FALSE(a.handover(0, 0, true));
    CHECK(a.current() == 0u);

    CHECK(a.handover(0, 1, true));
    CHECK(a.current() == 0u);
    CHECK(a.switching());
    CHECK(a.pending_target() == 1u);
    CHECK(a.roll_over());
    CHECK(a.current() == 1u);
    CHECK_FALSE(a.switching());

    // Crossing back inside one window cancels the switch.
    CHECK(a.handover(1, 2, true));
    CHECK(a.handover(2, 1, true));
    CHECK_FALSE(a.switching());
    CHECK_FALSE(a.roll_over());
    CHECK(a.current() == 1u);

    // Repeating the same crossing does not subscribe twice.
    CHECK(a.handover(1, 2, true));
    CHECK_FALSE(a.handover(1, 2, true));
    a.roll_over();
    CHECK(a.current() == 2u);

    // Into a region without a certified RSI: detached from the next window.
    a.handover(2, 3, false);
    a.roll_over();
    CHECK_FALSE(a.current().has_value());
    // Detached vehicles attach at once.
    CHECK(a.handover(3, 4, true));
    CHECK(a.current() == 4u);
}
