// dmap: run scenarios, check ledger dumps, emit reference fixtures.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dmap/fixtures.hpp"
#include "dmap/ledger.hpp"
#include "dmap/report.hpp"
#include "dmap/scenario.hpp"
#include "dmap/sim.hpp"

namespace fs = std::filesystem;
using namespace dmap;

namespace {

// sysexits.h values.
constexpr int kOk = 0;
constexpr int kChainInvalid = 1;
constexpr int kInvariantViolation = 2;
constexpr int kUsage = 64;
constexpr int kDataErr = 65;
constexpr int kCantCreate = 73;

struct RunArgs {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool timing = false;
    std::string dump_ledgers;
    std::string records;
};

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    return std::string(std::istreambuf_iterator<char>(in), {});
}

int cmd_run(const RunArgs& args) {
    const auto text = read_file(args.scenario);
    if (!text) {
        std::cerr << "error: cannot read scenario " << args.scenario << '\n';
        return kUsage;
    }

    sim::ScenarioConfig config;
    try {
        auto j = nlohmann::json::parse(*text);
        if (args.seed) {
            j["seed"] = *args.seed;
        } else if (const char* env = std::getenv("DMAP_SEED")) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(env, &used);
                if (used != std::string_view(env).size()) throw std::invalid_argument(env);
                j["seed"] = v;
            } catch (const std::exception&) {
                std::cerr << "error: DMAP_SEED is not an unsigned integer\n";
                return kDataErr;
            }
        }
        config = sim::config_from_json(j);
    } catch (const nlohmann::json::parse_error& e) {
        std::cerr << "error: scenario is not valid JSON: " << e.what() << '\n';
        return kDataErr;
    } catch (const sim::ConfigError& e) {
        std::cerr << "error: bad config field " << e.field << ": " << e.what() << '\n';
        return kDataErr;
    }

    const auto started = std::chrono::steady_clock::now();
    std::optional<sim::World> world;
    try {
        world.emplace(sim::World::load(config));
    } catch (const sim::ConfigError& e) {
        std::cerr << "error: bad config field " << e.field << ": " << e.what() << '\n';
        return kDataErr;
    }
    int code = kOk;
    try {
        world->run();
    } catch (const sim::InvariantViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        code = kInvariantViolation;
    }
    std::optional<std::uint64_t> runtime;
    if (args.timing) {
        runtime = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    }

    try {
        report::emit_report(report::build_run_report(*world, runtime), args.out);
    } catch (const report::WriteError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCantCreate;
    }
    if (!args.dump_ledgers.empty()) {
        try {
            for (const auto& [region, l] : world->ledgers().ledgers()) {
                ledger::save_ledger(l, fs::path(args.dump_ledgers) /
                                           ("region_" + std::to_string(region) + ".ledger"));
            }
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kCantCreate;
        }
    }
    if (!args.records.empty()) {
        std::ofstream out(args.records, std::ios::binary | std::ios::trunc);
        if (out) world->rule_table().export_records(out);
        if (!out) {
            std::cerr << "error: cannot write " << args.records << '\n';
            return kCantCreate;
        }
    }
    return code;
}

int cmd_validate(const std::string& path) {
    const auto text = read_file(path);
    if (!text) {
        std::cerr << "error: cannot read ledger " << path << '\n';
        return kUsage;
    }
    const auto status = ledger::validate_dump(as_view(*text));
    if (status.ok) {
        const auto l = ledger::decode_ledger(as_view(*text));
        std::cout << "ok region=" << l.rsi_region << " height=" << l.tip().height << '\n';
        return kOk;
    }
    std::cout << "tampered first_bad_height=" << status.first_bad_height << '\n';
    return kChainInvalid;
}

int cmd_encode_fixtures(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        std::cerr << "error: " << dir << " is not a directory\n";
        return kCantCreate;
    }
    try {
        fixtures::write_fixtures(dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCantCreate;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dmap: regional ledgers for vehicular crowd-sensed map data"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run a scenario and write a RunReport");
    run->add_option("--scenario", run_args.scenario, "Scenario JSON")->required();
    run->add_option("--seed", run_args.seed, "Overrides DMAP_SEED and the scenario seed");
    run->add_option("--out", run_args.out, "RunReport path")->required();
    run->add_flag("--timing", run_args.timing, "Include wall-clock runtime_ms");
    run->add_option("--dump-ledgers", run_args.dump_ledgers, "Directory for binary ledger dumps");
    run->add_option("--records", run_args.records, "JSONL export of stored records");

    std::string ledger_path;
    auto* validate = app.add_subcommand("validate", "Check a ledger dump");
    validate->add_option("--ledger", ledger_path, "Ledger dump")->required();

    std::string fixture_dir;
    auto* fixtures = app.add_subcommand("encode-fixtures", "Write reference hex fixtures");
    fixtures->add_option("--out", fixture_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (*run) return cmd_run(run_args);
    if (*validate) return cmd_validate(ledger_path);
    return cmd_encode_fixtures(fixture_dir);
}
