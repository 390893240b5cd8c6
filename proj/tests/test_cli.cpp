#include "hpfc/cli.hpp"
#include "hpfc/sim.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hpfc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out;
  std::string err;
};

Result hpfc_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  return {rc, out.str(), err.str()};
}

std::string config(const std::string& name) {
  return (testing::source_dir() / "configs" / name).string();
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hpfc_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  int n = 0;
  for (std::string line; std::getline(f, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("simulate") {
  const auto dir = fresh_dir("simulate");

  SUBCASE("writes the log and a summary") {
    const auto r = hpfc_cli({"simulate", "--config", config("onedof.json"), "--out", dir.string()});
    REQUIRE(r.status == 0);
    REQUIRE(fs::exists(dir / "onedof.csv"));
    const auto j = nlohmann::json::parse(slurp(dir / "onedof_summary.json"));
    CHECK(j["kind"] == "one_dof_rig");
    CHECK(j["first_contact_time"].get<double>() > 0.0);
    CHECK(j["settle_after_contact"].get<double>() < 1.0);
    CHECK(j["steady_rms_force_error"].get<double>() < 0.05);
    CHECK(j["mode_switches"] == 1);
    CHECK(j["aborted"] == false);
  }

  SUBCASE("override lands in the log header") {
    const auto r = hpfc_cli({"simulate", "-c", config("onedof.json"), "-o", dir.string(), "k=4500"});
    REQUIRE(r.status == 0);
    CHECK(slurp(dir / "onedof.csv").find("# environment.k=4500\n") != std::string::npos);
  }

  SUBCASE("missing config names the path") {
    const auto r = hpfc_cli({"simulate", "-c", "/no/such/cfg.json", "-o", dir.string()});
    CHECK(r.status != 0);
    CHECK(r.err.find("/no/such/cfg.json") != std::string::npos);
  }

  SUBCASE("unknown override key fails") {
    const auto r = hpfc_cli({"simulate", "-c", config("onedof.json"), "-o", dir.string(), "nope=1"});
    CHECK(r.status != 0);
    CHECK(r.err.find("nope") != std::string::npos);
  }

  SUBCASE("an aborted run exits nonzero but keeps its log") {
    const auto r = hpfc_cli({"simulate", "-c", config("onedof.json"), "-o", dir.string(), "kv=1",
                             "kp=1", "ki=5", "duration=60"});
    CHECK(r.status != 0);
    CHECK(r.err.find("unstable") != std::string::npos);
    CHECK(slurp(dir / "onedof.csv").find("# status=aborted") != std::string::npos);
  }

  SUBCASE("same config and seed give identical bytes") {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    for (const auto& d : {a, b}) {
      REQUIRE(hpfc_cli({"simulate", "-c", config("onedof_sine.json"), "-o", d.string(), "--seed",
                        "7", "noise=0.05", "duration=4"})
                  .status == 0);
    }
    const auto text = slurp(a / "onedof_sine.csv");
    CHECK(text == slurp(b / "onedof_sine.csv"));
    CHECK(text.find("# seed=7\n") != std::string::npos);
  }

  SUBCASE("output directory falls back to the environment") {
    ::setenv(cli::kOutDirEnv, dir.string().c_str(), 1);
    CHECK(cli::output_dir("") == dir);
    CHECK(cli::output_dir("elsewhere") == fs::path("elsewhere"));
    ::unsetenv(cli::kOutDirEnv);
    CHECK(cli::output_dir("") == fs::path("out"));
  }
}

TEST_CASE("analyze") {
  const auto dir = fresh_dir("analyze");

  SUBCASE("default gains: rank 5, one zero eigenvalue, stable") {
    const auto r = hpfc_cli({"analyze", "-o", dir.string()});
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
    CHECK(j["rank"] == 5);
    CHECK(j["zero_eigenvalues"] == 1);
    CHECK(j["stable"] == true);
    CHECK(j["motion_hurwitz"] == true);
    CHECK(j["warning"].is_null());
    CHECK(j["eigenvalues"].size() == 6);
  }

  SUBCASE("gains read from a config, expressed in one sign convention") {
    const auto r = hpfc_cli({"analyze", "-c", config("contour.json"), "-o", dir.string()});
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
    CHECK(j["stiffness"].get<double>() == 5000.0);
    CHECK(j["force_gains"]["kp1"].get<double>() < 0.0);
    CHECK(j["stable"] == true);
  }

  SUBCASE("Kv = 0 is reported, not a crash") {
    const auto r = hpfc_cli({"analyze", "--kv", "0", "-o", dir.string()});
    CHECK(r.status == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
    CHECK(j["motion_hurwitz"] == false);
    CHECK(j["warning"].get<std::string>().find("Kv > 0") != std::string::npos);
    CHECK(r.err.find("Kv > 0") != std::string::npos);
    CHECK(count_lines(dir / "frequency.csv") == 1);
  }

  SUBCASE("Kv Kp <= Ki is named too") {
    const auto r = hpfc_cli({"analyze", "--kv", "1", "--kp", "1", "--ki", "5", "-o", dir.string()});
    CHECK(r.status == 0);
    CHECK(r.err.find("Kv*Kp > Ki") != std::string::npos);
  }

  SUBCASE("omega grid sets the row count") {
    const auto r =
        hpfc_cli({"analyze", "--omega-grid", "0.1:100:logarithmic:50", "-o", dir.string()});
    REQUIRE(r.status == 0);
    CHECK(count_lines(dir / "frequency.csv") == 51);
    std::ifstream f(dir / "frequency.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "omega,magnitude");
  }

  SUBCASE("non-contact model") {
    const auto r = hpfc_cli({"analyze", "--non-contact", "-o", dir.string()});
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
    CHECK(j["zero_eigenvalues"] == 3);
  }
}

TEST_CASE("omega grid parsing") {
  const auto g = cli::parse_omega_grid("0.1:100:logarithmic:4");
  REQUIRE(g.size() == 4);
  CHECK(g[0] == doctest::Approx(0.1));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g[2] == doctest::Approx(10.0));
  CHECK(g[3] == 100.0);

  const auto lin = cli::parse_omega_grid("0:10:linear:3");
  CHECK(lin == std::vector<double>{0.0, 5.0, 10.0});
  CHECK(cli::parse_omega_grid("2:2:linear:1") == std::vector<double>{2.0});

  CHECK_THROWS(cli::parse_omega_grid("0:100:logarithmic:5"));
  CHECK_THROWS(cli::parse_omega_grid("1:100:cubic:5"));
  CHECK_THROWS(cli::parse_omega_grid("1:100:linear"));
  CHECK_THROWS(cli::parse_omega_grid("1:100:linear:2.5"));
  CHECK_THROWS(cli::parse_omega_grid("10:1:linear:5"));
  CHECK_THROWS(cli::parse_omega_grid("a:1:linear:5"));
}

TEST_CASE("sweep parameter parsing") {
  const auto [key, values] = cli::parse_sweep_param("k=300,1500,4500");
  CHECK(key == "k");
  CHECK(values == std::vector<std::string>{"300", "1500", "4500"});
  CHECK_THROWS(cli::parse_sweep_param("k"));
  CHECK_THROWS(cli::parse_sweep_param("k="));
  CHECK_THROWS(cli::parse_sweep_param("k=1,,2"));
}

TEST_CASE("sweep") {
  const auto dir = fresh_dir("sweep");

  SUBCASE("three stiffnesses, three converged logs") {
    const auto r = hpfc_cli(
        {"sweep", "-c", config("onedof.json"), "-o", dir.string(), "--param", "k=300,1500,4500"});
    REQUIRE(r.status == 0);
    for (const char* name : {"point_000.csv", "point_001.csv", "point_002.csv"}) {
      CHECK(fs::exists(dir / name));
    }
    const auto log = sim::read_log(dir / "point_002.csv");
    bool tagged = false;
    for (const auto& [k, v] : log.metadata) tagged |= (k == "environment.k" && v == "4500");
    CHECK(tagged);

    std::ifstream f(dir / "sweep.csv");
    std::string header, line;
    std::getline(f, header);
    CHECK(header.rfind("point,k,linear_stable,aborted,", 0) == 0);
    int rows = 0;
    while (std::getline(f, line)) {
      ++rows;
      CHECK(line.find(",1,0,") != std::string::npos);  // stable, not aborted
    }
    CHECK(rows == 3);
  }

  SUBCASE("two-point sweep gives two rows") {
    const auto r = hpfc_cli({"sweep", "-c", config("onedof.json"), "-o", dir.string(), "-p",
                             "desired=4,6", "duration=1", "--jobs", "1"});
    REQUIRE(r.status == 0);
    CHECK(count_lines(dir / "sweep.csv") == 3);
  }

  SUBCASE("unstable points are flagged and the rest complete") {
    // s^3 + s^2 + 405 s + 1500: Kv Kp = 405 < Ki, so the motion loop is not Hurwitz.
    const auto r = hpfc_cli({"sweep", "-c", config("onedof.json"), "-o", dir.string(), "-p",
                             "kv=35,1", "duration=10"});
    REQUIRE(r.status == 0);
    CHECK(r.err.find("1 of 2 points aborted") != std::string::npos);
    std::ifstream f(dir / "sweep.csv");
    std::string header, good, bad;
    std::getline(f, header);
    std::getline(f, good);
    std::getline(f, bad);
    CHECK(good.rfind("0,35,1,0,", 0) == 0);
    CHECK(bad.rfind("1,1,0,1,", 0) == 0);
    CHECK(bad.find("unstable") != std::string::npos);
  }

  SUBCASE("parallel and serial sweeps agree") {
    const auto a = fresh_dir("sweep_a"), b = fresh_dir("sweep_b");
    REQUIRE(hpfc_cli({"sweep", "-c", config("onedof.json"), "-o", a.string(), "-p", "k=300,4500",
                      "-j", "2", "duration=1"})
                .status == 0);
    REQUIRE(hpfc_cli({"sweep", "-c", config("onedof.json"), "-o", b.string(), "-p", "k=300,4500",
                      "-j", "1", "duration=1"})
                .status == 0);
    CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
    CHECK(slurp(a / "point_001.csv") == slurp(b / "point_001.csv"));
  }

  SUBCASE("bad parameter key fails before running") {
    const auto r =
        hpfc_cli({"sweep", "-c", config("onedof.json"), "-o", dir.string(), "-p", "nope=1,2"});
    CHECK(r.status != 0);
    CHECK_FALSE(fs::exists(dir / "sweep.csv"));
  }
}

TEST_CASE("export") {
  const auto dir = fresh_dir("export");
  fs::create_directories(dir);

  SUBCASE("round trip from simulate") {
    REQUIRE(hpfc_cli({"simulate", "-c", config("onedof.json"), "-o", dir.string(), "duration=1"})
                .status == 0);
    const auto r = hpfc_cli({"export", "--log", (dir / "onedof.csv").string(), "-o",
                             (dir / "tables").string()});
    REQUIRE(r.status == 0);
    const auto log = sim::read_log(dir / "onedof.csv");
    CHECK(count_lines(dir / "tables" / "force_error.csv") == 1 + static_cast<int>(log.rows.size()));
    std::ifstream f(dir / "tables" / "desired_position.csv");
    std::string header, first;
    std::getline(f, header);
    std::getline(f, first);
    CHECK(header == "t,z_d");
    CHECK(first == "0,-0.001");
  }

  SUBCASE("column selection") {
    REQUIRE(hpfc_cli({"simulate", "-c", config("onedof.json"), "-o", dir.string(), "duration=1"})
                .status == 0);
    const auto r = hpfc_cli({"export", "-l", (dir / "onedof.csv").string(), "-o",
                             (dir / "sel").string(), "--columns", "t,f_z"});
    REQUIRE(r.status == 0);
    CHECK_FALSE(fs::exists(dir / "sel" / "force_error.csv"));
    std::ifstream f(dir / "sel" / "columns.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "t,f_z");

    const auto missing = hpfc_cli({"export", "-l", (dir / "onedof.csv").string(), "-o",
                                   (dir / "sel").string(), "--columns", "t,bogus"});
    CHECK(missing.status != 0);
    CHECK(missing.err.find("bogus") != std::string::npos);
  }

  SUBCASE("empty log gives header-only tables") {
    sim::SimLog empty;
    empty.columns = {"t", "f_e"};
    std::ofstream(dir / "empty.csv") << sim::format_log(empty);
    const auto r =
        hpfc_cli({"export", "-l", (dir / "empty.csv").string(), "-o", (dir / "e").string()});
    INFO(r.err);
    REQUIRE(r.status == 0);
    CHECK(slurp(dir / "e" / "force_error.csv") == "t,f_e\n");
    CHECK(slurp(dir / "e" / "desired_position.csv") == "t,z_d\n");
  }

  SUBCASE("malformed log reports the row") {
    std::ofstream(dir / "bad.csv") << "# kind=one_dof_rig\nt,f_e\n0,1\n0.001,2\n0.002\n";
    const auto r = hpfc_cli({"export", "-l", (dir / "bad.csv").string(), "-o", dir.string()});
    CHECK(r.status != 0);
    CHECK(r.err.find("line 5") != std::string::npos);
    CHECK(r.err.find("data row 3") != std::string::npos);
  }

  SUBCASE("dual-arm logs use the remapped desired position") {
    sim::SimLog log;
    log.kind = sim::ScenarioKind::dual_arm_grab;
    log.columns = {"t", "f_e", "b_zbar_d"};
    log.rows = {{0.0, 1.0, 0.2}};
    sim::write_log(log, dir / "dual.csv");
    const auto r =
        hpfc_cli({"export", "-l", (dir / "dual.csv").string(), "-o", (dir / "d").string()});
    INFO(r.err);
    REQUIRE(r.status == 0);
    CHECK(slurp(dir / "d" / "desired_position.csv") == "t,b_zbar_d\n0,0.2\n");
  }
}

TEST_CASE("usage errors") {
  CHECK(hpfc_cli({}).status != 0);
  CHECK(hpfc_cli({"frobnicate"}).status != 0);
  CHECK(hpfc_cli({"simulate"}).status != 0);
  CHECK(hpfc_cli({"export"}).status != 0);
  CHECK(hpfc_cli({"--help"}).status == 0);
}
