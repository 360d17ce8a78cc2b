#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result sh(const std::string& cmd) {
    Result r;
    FILE* p = ::popen((cmd + " 2>&1").c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

const std::string kCli = DMAP_CLI;
const fs::path kWork = DMAP_WORK_DIR;

std::string scenario(const std::string& name) {
    return std::string(DMAP_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto d = kWork / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("run: honest-majority scenario succeeds with full detection") {
    const auto d = fresh_dir("run_ok");
    const auto r = sh(kCli + " run --scenario " + scenario("honest_majority") + " --out " + q(d / "r.json"));
    CHECK(r.code == 0);
    const auto j = json::parse(slurp(d / "r.json"));
    CHECK(j["metrics"]["detection_rate"] == 1.0);
    CHECK(j["invariants_ok"] == true);
    CHECK_FALSE(j.contains("runtime_ms"));

    const auto t = sh(kCli + " run --scenario " + scenario("honest_majority") + " --timing --out " + q(d / "t.json"));
    CHECK(t.code == 0);
    CHECK(json::parse(slurp(d / "t.json")).contains("runtime_ms"));
}

TEST_CASE("run: identical reruns overwrite with identical bytes") {
    const auto d = fresh_dir("rerun");
    const auto cmd = kCli + " run --scenario " + scenario("market") + " --out ";
    REQUIRE(sh(cmd + q(d / "a.json")).code == 0);
    REQUIRE(sh(cmd + q(d / "b.json")).code == 0);
    const auto first = slurp(d / "a.json");
    CHECK(first == slurp(d / "b.json"));
    REQUIRE(sh(cmd + q(d / "a.json")).code == 0);
    CHECK(slurp(d / "a.json") == first);
}

TEST_CASE("seed precedence: --seed, then DMAP_SEED, then the scenario") {
    const auto d = fresh_dir("seed");
    const auto base = " run --scenario " + scenario("honest") + " --out ";
    const auto seed_of = [&](const std::string& prefix, const std::string& extra, const std::string& out) {
        const auto r = sh(prefix + kCli + base + q(d / out) + extra);
        REQUIRE(r.code == 0);
        return json::parse(slurp(d / out))["seed"].get<std::uint64_t>();
    };
    CHECK(seed_of("", "", "plain.json") == 3);
    CHECK(seed_of("DMAP_SEED=77 ", "", "env.json") == 77);
    CHECK(seed_of("DMAP_SEED=77 ", " --seed 5", "flag.json") == 5);
    CHECK(slurp(d / "env.json") != slurp(d / "plain.json"));

    const auto bad = sh("DMAP_SEED=seven " + kCli + base + q(d / "bad.json"));
    CHECK(bad.code == 65);
    CHECK(bad.output.find("DMAP_SEED") != std::string::npos);
}

TEST_CASE("run: error exit codes") {
    const auto d = fresh_dir("errors");

    auto j = json::parse(slurp(scenario("honest_majority")));
    j["adversary"]["fraction"] = 2;
    std::ofstream(d / "fraction.json") << j.dump();
    auto r = sh(kCli + " run --scenario " + q(d / "fraction.json") + " --out " + q(d / "o.json"));
    CHECK(r.code == 65);
    CHECK(r.output.find("adversary.fraction") != std::string::npos);

    std::ofstream(d / "broken.json") << "{\"seed\": ";
    CHECK(sh(kCli + " run --scenario " + q(d / "broken.json") + " --out " + q(d / "o.json")).code == 65);

    r = sh(kCli + " run --scenario " + q(d / "nope.json") + " --out " + q(d / "o.json"));
    CHECK(r.code == 64);
    CHECK(r.output.find("nope.json") != std::string::npos);

    CHECK(sh(kCli + " run --scenario " + scenario("honest") + " --out " + q(d / "missing" / "o.json")).code == 73);
    CHECK(sh(kCli + " run --scenario " + scenario("honest")).code == 64);
    CHECK(sh(kCli + " frobnicate").code == 64);
    CHECK(sh(kCli).code == 64);
}

TEST_CASE("validate: clean dumps pass, tampered dumps name the first bad height") {
    const auto d = fresh_dir("validate");
    REQUIRE(sh(kCli + " run --scenario " + scenario("honest") + " --out " + q(d / "r.json") + " --dump-ledgers " +
               q(d))
                .code == 0);
    const auto dump = d / "region_4.ledger";
    REQUIRE(fs::exists(dump));
    auto r = sh(kCli + " validate --ledger " + q(dump));
    CHECK(r.code == 0);
    CHECK(r.output.starts_with("ok region=4 height="));

    auto bytes = slurp(dump);
    bytes[bytes.size() - 40] = static_cast<char>(bytes[bytes.size() - 40] ^ 0x01);
    std::ofstream(d / "bad.ledger", std::ios::binary) << bytes;
    r = sh(kCli + " validate --ledger " + q(d / "bad.ledger"));
    CHECK(r.code == 1);
    CHECK(r.output.starts_with("tampered first_bad_height="));

    CHECK(sh(kCli + " validate --ledger " + q(d / "absent.ledger")).code == 64);
}

TEST_CASE("encode-fixtures reproduces the committed fixtures") {
    const auto d = fresh_dir("fixtures");
    REQUIRE(sh(kCli + " encode-fixtures --out " + q(d)).code == 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(DMAP_SOURCE_DIR) / "fixtures")) {
        CAPTURE(e.path().filename().string());
        CHECK(slurp(e.path()) == slurp(d / e.path().filename()));
        ++n;
    }
    CHECK(n == 7);
    CHECK(sh(kCli + " encode-fixtures --out " + q(d / "data_tx.hex")).code == 73);
}
