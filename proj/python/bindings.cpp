// Python module: hashing and signatures, report encoding, ledger checks and
// scenario runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "dmap/fixtures.hpp"
#include "dmap/ledger.hpp"
#include "dmap/report.hpp"
#include "dmap/sim.hpp"

namespace py = pybind11;
using namespace dmap;

namespace {

py::bytes to_py(ByteView b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

Bytes from_py(const py::bytes& b) {
    const auto s = static_cast<std::string_view>(b);
    return {s.begin(), s.end()};
}

crypto::Seed seed_from_py(const py::bytes& b) {
    const auto v = from_py(b);
    if (v.size() != 32) throw py::value_error("seed must be 32 bytes");
    crypto::Seed s{};
    std::copy(v.begin(), v.end(), s.begin());
    return s;
}

py::dict data_tx_dict(const tx::DataTransaction& t) {
    py::dict d;
    d["lat_micro"] = t.payload.loc.lat_micro;
    d["lon_micro"] = t.payload.loc.lon_micro;
    d["kind"] = std::string(tx::to_string(t.payload.event.code));
    d["speed_kmh"] = t.payload.event.speed_kmh;
    d["timestamp"] = t.payload.timestamp;
    d["pk"] = to_py(t.pk.bytes);
    d["signature"] = to_py(t.vehicle_sign.bytes);
    return d;
}

// Report JSON plus one binary dump per region ledger.
std::pair<std::string, std::map<RegionId, py::bytes>> run_scenario(const std::string& config_json,
                                                                   std::optional<std::uint64_t> seed) {
    std::string report;
    std::map<RegionId, Bytes> dumps;
    {
        py::gil_scoped_release release;
        auto j = nlohmann::json::parse(config_json);
        if (seed) j["seed"] = *seed;
        auto world = sim::load_scenario(sim::config_from_json(j));
        try {
            world.run();
        } catch (const sim::InvariantViolation&) {
            // The report carries the failed sweeps.
        }
        report = report::build_run_report(world).dump();
        for (const auto& [region, l] : world.ledgers().ledgers()) dumps.emplace(region, ledger::encode_ledger(l));
    }
    std::map<RegionId, py::bytes> out;
    for (const auto& [region, b] : dumps) out.emplace(region, to_py(b));
    return {report, out};
}

}  // namespace

PYBIND11_MODULE(_dmap, m) {
    m.doc() = "Regional ledgers for crowd-sensed vehicle map data";

    py::register_exception<sim::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);

    m.def("sha256", [](const py::bytes& data) { return to_py(crypto::sha256(from_py(data)).bytes); });
    m.def("seed_from_u64", [](std::uint64_t v, std::uint64_t domain) { return to_py(crypto::seed_from_u64(v, domain)); },
          py::arg("value"), py::arg("domain") = 0);
    m.def("derive_seed", [](const py::bytes& master, std::uint64_t counter) {
        return to_py(crypto::derive_seed(seed_from_py(master), counter));
    });

    m.def("generate_keypair", [](const std::string& scheme, const py::bytes& seed) {
        const auto kp = crypto::scheme_by_name(scheme).generate_keypair(seed_from_py(seed));
        return py::make_tuple(to_py(kp.public_key.bytes), to_py(kp.secret_key.bytes));
    }, py::arg("scheme"), py::arg("seed"));
    m.def("sign", [](const std::string& scheme, const py::bytes& sk, const py::bytes& msg) {
        return to_py(crypto::scheme_by_name(scheme).sign({from_py(sk)}, from_py(msg)).bytes);
    });
    m.def("verify", [](const std::string& scheme, const py::bytes& pk, const py::bytes& msg, const py::bytes& sig) {
        return crypto::scheme_by_name(scheme).verify({from_py(pk)}, from_py(msg), {from_py(sig)});
    });

    m.def("build_data_tx",
          [](const std::string& scheme, const py::bytes& seed, std::int32_t lat, std::int32_t lon,
             const std::string& kind, std::uint64_t ts, std::uint32_t speed_kmh) {
              const auto& s = crypto::scheme_by_name(scheme);
              tx::EventKind e{tx::parse_event_code(kind), 0};
              if (e.code == tx::EventCode::TrafficSpeed) e.speed_kmh = speed_kmh;
              const auto t = tx::build_data_tx(s, s.generate_keypair(seed_from_py(seed)), {lat, lon}, e, ts);
              return to_py(tx::encode(t));
          },
          py::arg("scheme"), py::arg("seed"), py::arg("lat_micro"), py::arg("lon_micro"), py::arg("kind"),
          py::arg("timestamp"), py::arg("speed_kmh") = 0);
    m.def("decode_data_tx", [](const py::bytes& b) { return data_tx_dict(tx::decode_data_tx(from_py(b))); });
    m.def("verify_data_tx", [](const std::string& scheme, const py::bytes& b) {
        return tx::verify_data_tx(crypto::scheme_by_name(scheme), tx::decode_data_tx(from_py(b)));
    });

    m.def("reference_fixtures", [] {
        py::dict d;
        for (const auto& f : fixtures::reference_fixtures()) d[py::str(f.name)] = to_py(f.bytes);
        return d;
    });

    m.def("validate_ledger", [](const py::bytes& dump) {
        const auto st = ledger::validate_dump(from_py(dump));
        return py::make_tuple(st.ok, st.first_bad_height);
    }, "(ok, first_bad_height) for a binary ledger dump");

    m.def("run_scenario", &run_scenario, py::arg("config_json"), py::arg("seed") = std::nullopt,
          "Runs a scenario; returns (report JSON, {region: ledger dump})");
}
