#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "reebflow/config.hpp"
#include "reebflow/harness.hpp"

using namespace reebflow;

namespace {

nlohmann::json minimal_config() {
    return nlohmann::json{{"field", {{"name", "harmonic"}}},
                          {"seed", 9},
                          {"out", "/tmp/reebflow_test_out"},
                          {"coeffs", {{"mc_samples", 100000}, {"z_points_interior", 12}}},
                          {"reeb", {{"resolution", 96}}},
                          {"models", {{"b", {{"name", "radial_contraction"}, {"lambda", 1.0}}}}}};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config validation is fail-fast with named keys", "[harness]") {
    auto j = minimal_config();
    j.erase("field");
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected ConfigInvalid");
    } catch (const ConfigInvalid& e) {
        CHECK(std::string(e.what()).find("field.name") != std::string::npos);
    }

    j = minimal_config();
    j["field"]["name"] = "nosuchfield";
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected ConfigInvalid");
    } catch (const ConfigInvalid& e) {
        CHECK(std::string(e.what()).find("nosuchfield") != std::string::npos);
    }

    j = minimal_config();
    j["sde"] = {{"dt_divisor", 10}};
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected ConfigInvalid");
    } catch (const ConfigInvalid& e) {
        CHECK(std::string(e.what()).find("dt_divisor") != std::string::npos);
    }

    j = minimal_config();
    j["limit"] = {{"observable", "coordinate:1"}};
    CHECK_NOTHROW(ExperimentConfig::from_json(j));
}

TEST_CASE("reeb subcommand writes a valid export", "[harness]") {
    auto dir = std::filesystem::temp_directory_path() / "reebflow_reeb";
    std::filesystem::remove_all(dir);
    auto j = minimal_config();
    j["out"] = dir.string();
    auto cfg = ExperimentConfig::from_json(j);
    CHECK(harness::run_reeb(cfg));
    REQUIRE(std::filesystem::exists(dir / "reeb.json"));
    auto parsed = nlohmann::json::parse(slurp((dir / "reeb.json").string()));
    CHECK(parsed.at("validation").at("is_tree").get<bool>());
    auto g = ReebGraph::from_json(parsed);
    CHECK(g.edges.size() == 1);

    // Determinism of the export.
    auto first = slurp((dir / "reeb.json").string());
    CHECK(harness::run_reeb(cfg));
    CHECK(slurp((dir / "reeb.json").string()) == first);
}

TEST_CASE("coeffs subcommand is thread-count independent", "[harness]") {
    auto dir = std::filesystem::temp_directory_path() / "reebflow_coeffs";
    std::filesystem::remove_all(dir);
    auto j = minimal_config();
    j["out"] = dir.string();
    auto cfg = ExperimentConfig::from_json(j);
    cfg.threads = 1;
    CHECK(harness::run_coeffs(cfg));
    auto a = slurp((dir / "coeffs_0.csv").string());
    auto g1 = slurp((dir / "gluing.json").string());
    cfg.threads = 2;
    CHECK(harness::run_coeffs(cfg));
    CHECK(slurp((dir / "coeffs_0.csv").string()) == a);
    CHECK(slurp((dir / "gluing.json").string()) == g1);
}

TEST_CASE("limit subcommand produces a coherent distribution", "[harness]") {
    auto dir = std::filesystem::temp_directory_path() / "reebflow_limit";
    std::filesystem::remove_all(dir);
    nlohmann::json j{{"field", {{"name", "doublewell1d"}}},
                     {"seed", 33},
                     {"out", dir.string()},
                     {"reeb", {{"resolution", 256}}},
                     {"coeffs", {{"mc_samples", 400000}}},
                     {"models", {{"b", {{"name", "momentum_drag"}, {"lambda", 0.5}}}}},
                     {"limit", {{"n_runs", 400}, {"T", 100.0}, {"observable", "coordinate:1"}}}};
    auto cfg = ExperimentConfig::from_json(j);
    CHECK(harness::run_limit(cfg));
    auto parsed = nlohmann::json::parse(slurp((dir / "limit_dist.json").string()));
    CHECK(parsed.at("total_probability").get<double>() == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(std::filesystem::exists(dir / "paths_limit.csv"));
}

TEST_CASE("observable lookup", "[harness]") {
    auto j = minimal_config();
    j["limit"] = {{"observable", "coordinate:0"}};
    auto cfg = ExperimentConfig::from_json(j);
    auto f = harness::make_observable(cfg);
    Vec x(2);
    x << 3.5, -1.0;
    CHECK(f(x) == 3.5);
}
