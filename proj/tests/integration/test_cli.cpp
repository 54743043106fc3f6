#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path work = fs::path(CLI_WORK_DIR);

struct Run {
    int code = -1;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Run cli(const std::string& args) {
    fs::create_directories(work);
    const fs::path err = work / "stderr.txt";
    const std::string cmd = std::string("\"") + DYNCAUSAL_CLI + "\" " + args + " 2>\"" + err.string() + "\" >/dev/null";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string toy = q(fs::path(TEST_DATA_DIR) / "toy.csv");

}  // namespace

TEST_CASE("toy table through the CLI") {
    const auto out = work / "toy_bi.csv";
    const Run r = cli("estimate --input " + toy + " --method bayesian-imputation --estimands ATE --B 100 --output " + q(out));
    REQUIRE(r.code == 0);
    std::istringstream rows(slurp(out));
    std::string header, first, second;
    std::getline(rows, header);
    std::getline(rows, first);
    std::getline(rows, second);
    CHECK(header == "t,estimand,method,point,lower,upper,period");
    auto point = [](const std::string& line) {
        std::stringstream s(line);
        std::string field;
        for (int k = 0; k < 4; ++k) std::getline(s, field, ',');
        return std::stod(field);
    };
    CHECK(point(first) == doctest::Approx(1.0));
    CHECK(point(second) == doctest::Approx(3.0));
}

TEST_CASE("validation and I/O errors") {
    SUBCASE("forecast horizon 0") {
        const auto out = work / "f0.csv";
        const Run r = cli("forecast --input " + toy + " --horizon 0 --output " + q(out));
        CHECK(r.code == 2);
        const auto report = json::parse(r.err);
        CHECK(report["error"]["type"] == "validation");
        CHECK(report["error"]["exit_code"] == 2);
        CHECK_FALSE(fs::exists(out));
    }
    SUBCASE("missing input") {
        const auto out = work / "missing.csv";
        const Run r = cli("estimate --input " + q(work / "no_such_file.csv") + " --output " + q(out));
        CHECK(r.code == 4);
        CHECK(json::parse(r.err)["error"]["type"] == "io");
        CHECK_FALSE(fs::exists(out));
        CHECK_FALSE(fs::exists(work / "missing.csv.manifest.json"));
    }
    SUBCASE("level outside (0, 1)") {
        CHECK(cli("estimate --input " + toy + " --level 1.5 --output " + q(work / "lvl.csv")).code == 2);
    }
    SUBCASE("unknown flag") { CHECK(cli("estimate --no-such-flag 1").code == 2); }
}

TEST_CASE("simulate writes panel, truth and manifest") {
    const auto out = work / "sim_default.csv";
    REQUIRE(cli("simulate --horizon 0 --output " + q(out)).code == 0);
    CHECK(fs::exists(out));
    CHECK(fs::exists(work / "sim_default.csv.truth.csv"));
    CHECK_FALSE(fs::exists(work / "sim_default.csv.future.csv"));
    const auto manifest = json::parse(slurp(work / "sim_default.csv.manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["config"]["model"] == 1);
    CHECK(manifest["seeds"]["master"] == 0);
}

TEST_CASE("config files and flag overrides") {
    const auto cfg = work / "cfg.json";
    std::ofstream(cfg) << R"({"method": "bayesian-imputation", "estimands": ["ATE"], "B": 50, "level": 0.8})";
    const auto out = work / "cfg_out.csv";
    REQUIRE(cli("estimate --config " + q(cfg) + " --input " + toy + " --level 0.9 --output " + q(out)).code == 0);
    const auto manifest = json::parse(slurp(work / "cfg_out.csv.manifest.json"));
    CHECK(manifest["config"]["level"] == 0.9);
    CHECK(manifest["config"]["B"] == 50);
    CHECK(manifest["method"] == "bayesian-imputation");
}

TEST_CASE("sqrt transform is recorded") {
    const auto out = work / "sqrt.csv";
    REQUIRE(cli("estimate --input " + toy + " --method bayesian-imputation --estimands ATE --transform sqrt --B 50 --output " + q(out)).code == 0);
    const auto m = json::parse(slurp(work / "sqrt.csv.manifest.json"));
    CHECK(m["config"]["transform"] == "sqrt");
    CHECK(m["scale"].get<std::string>().rfind("sqrt", 0) == 0);
}

TEST_CASE("benchmark plot data has one file per method and estimand") {
    const auto dir = work / "plots";
    fs::remove_all(dir);
    const Run r = cli("benchmark --model 1 --d 10 --n 20 --horizon 0 --replications 1 --methods CT,BI --estimands SATE,ATE,MCATE "
                      "--B 50 --n-starts 1 --output " +
                      q(work / "bench.csv") + " --plotdata " + q(dir));
    REQUIRE(r.code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        CHECK(e.path().filename().string().rfind("plot_", 0) == 0);
        ++files;
    }
    CHECK(files == 6);
}

TEST_CASE("state layout options") {
    const auto sim = work / "layout_sim.csv";
    REQUIRE(cli("simulate --model 1 --d 6 --n 15 --pre-period 15 --horizon 0 --seed 3 --output " + q(sim)).code == 0);
    const auto out = work / "layout_us.csv";
    const Run r = cli("estimate --input " + q(sim) + " --layout unit-specific --effect-dynamics random-walk --estimands SATE --B 50 --n-starts 1 --output " + q(out));
    REQUIRE(r.code == 0);
    const auto m = json::parse(slurp(work / "layout_us.csv.manifest.json"));
    CHECK(m["config"]["layout"] == "unit-specific");
    CHECK(m["config"]["effect_dynamics"] == "random-walk");
    CHECK(cli("estimate --input " + q(sim) + " --layout diagonal --output " + q(work / "bad_layout.csv")).code == 2);
}
