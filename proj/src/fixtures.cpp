#include "dmap/fixtures.hpp"

#include <fstream>
#include <stdexcept>

#include "dmap/ledger.hpp"
#include "dmap/market.hpp"

namespace dmap::fixtures {

namespace {

crypto::KeyPair key(std::uint64_t n) {
    return crypto::keyed_hash().generate_keypair(crypto::seed_from_u64(n, 0x66697874));
}

}  // namespace

std::vector<Fixture> reference_fixtures() {
    const auto& scheme = crypto::keyed_hash();
    const auto ca = key(1);
    const auto rsi = key(2);
    const auto rule_table = key(3);
    const auto v1 = key(10);
    const auto v2 = key(11);
    const auto owner = key(20);
    const auto sp = key(30);
    constexpr RegionId kRegion = 7;

    const tx::GeoPoint loc{52'520'008, 13'404'954};
    const auto d1 = tx::build_data_tx(scheme, v1, loc, tx::EventKind::traffic_speed(42), 1'700'000'000'000);
    const auto d2 = tx::build_data_tx(scheme, v2, loc, tx::EventKind::traffic_speed(42), 1'700'000'000'000);
    const auto rsi_tx = tx::build_rsi_tx(scheme, rsi, d1.payload,
                                         {{d1.pk, d1.vehicle_sign}, {d2.pk, d2.vehicle_sign}}, 1);

    const tx::DataScope scope{{kRegion, 8},
                              {1'700'000'000'000, 1'700'003'600'000},
                              {tx::EventCode::RoadDamage, tx::EventCode::TrafficSpeed}};
    const auto contract = market::create_contract(scheme, owner, sp.public_key,
                                                  {1'700'000'000'000, 1'700'086'400'000}, scope, 250);

    tx::DataScope query = scope;
    query.regions = {kRegion};
    auto access = market::build_access_tx(scheme, sp, query, tx::ContractRef{contract.contract_id});
    access.ruletable_sign = scheme.sign(rule_table.secret_key, tx::access_approval_bytes(access));

    const tx::GeoBox area{{52'500'000, 13'380'000}, {52'540'000, 13'420'000}};
    const auto request = market::broadcast_data_request(
        scheme, sp, area, {1'700'000'000'000, 1'700'000'600'000}, {kRegion, 8});

    const auto cert = crypto::issue_certificate(scheme, ca, rsi.public_key, kRegion);

    tx::MinerPolicy policy;
    policy.ca_pk = ca.public_key;
    policy.scheme = &scheme;
    policy.cert_registry.emplace(rsi.public_key, cert);
    policy.cert_registry.emplace(
        rule_table.public_key,
        crypto::issue_certificate(scheme, ca, rule_table.public_key, kRuleTableRegion));
    policy.ruletable_pk = rule_table.public_key;
    auto chain = ledger::genesis(kRegion);
    const auto& block =
        ledger::append_block(chain, {rsi_tx, contract, access}, 1'700'000'005'000, policy);

    return {
        {"data_tx", tx::encode(d1)},
        {"rsi_tx", tx::encode(rsi_tx)},
        {"contract", tx::encode(contract)},
        {"access_tx", tx::encode(access)},
        {"data_request", tx::encode(request)},
        {"certificate", crypto::encode(cert)},
        {"block", ledger::encode(block)},
    };
}

void write_fixtures(const std::filesystem::path& dir) {
    for (const auto& f : reference_fixtures()) {
        const auto path = dir / (f.name + ".hex");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << to_hex(f.bytes) << '\n';
        if (!out) throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace dmap::fixtures
