#pragma once

// Reference encodings of one object of each wire type, built with the
// deterministic keyed-hash scheme and fixed seeds.

#include <filesystem>
#include <string>
#include <vector>

#include "dmap/bytes.hpp"

namespace dmap::fixtures {

struct Fixture {
    std::string name;
    Bytes bytes;
};

/// data_tx, rsi_tx, contract, access_tx, data_request, certificate, block.
std::vector<Fixture> reference_fixtures();

/// Writes `<name>.hex` (lowercase hex plus newline) per fixture. Throws
/// std::runtime_error when a file cannot be written.
void write_fixtures(const std::filesystem::path& dir);

}  // namespace dmap::fixtures
