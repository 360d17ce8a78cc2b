#pragma once

// RunReport: the JSON document the CLI writes after a run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dmap/sim.hpp"

namespace dmap::report {

class WriteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Config echo, seed, metrics, ledger summaries, invariant results and
/// market outcomes, in a fixed field order. `runtime_ms` is included only
/// when given.
nlohmann::ordered_json build_run_report(const sim::World& world,
                                        std::optional<std::uint64_t> runtime_ms = std::nullopt);

/// Pretty-printed with a trailing newline. Throws WriteError.
void emit_report(const nlohmann::ordered_json& report, const std::filesystem::path& path);

}  // namespace dmap::report
