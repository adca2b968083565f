#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "csl/commands.hpp"
#include "csl/io.hpp"

using namespace csl;
namespace fs = std::filesystem;

namespace {

const char* kBin = CSL_LAB_BIN;

int run(const std::string& args) {
  const std::string cmd = std::string(kBin) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "csl_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Json small_born_config(std::uint64_t trials) {
  Json j;
  j["scenario"] = Json{{"builder", "two-branch-delta"},
                       {"params", Json{{"lambda", 1.0}, {"cell_volume", 1.0}, {"density", 1.0}}},
                       {"delta_n", 4},
                       {"a1_squared", 2.0 / 3.0},
                       {"name", "cat"}};
  j["run"] = Json{{"dt", 1e-3}, {"t_max", 2.0},     {"trials", trials},
                  {"scheme", "physical-drift"},     {"master_seed", 20260808},
                  {"sample_times", Json::array({0.5, 1.0, 1.5, 2.0})}};
  return j;
}

}  // namespace

TEST_CASE("constraints command exit codes") {
  const fs::path dir = fresh_dir("constraints");
  const fs::path cfg = dir / "couplings.json";

  write_json_file(cfg, to_json(mass_proportional_couplings()));
  CHECK(run("constraints --config " + cfg.string() + " --out " + (dir / "ok").string()) == 0);

  CouplingSet equal = mass_proportional_couplings();
  equal.alpha_elec_over_nuc = 1.0;
  write_json_file(cfg, to_json(equal));
  CHECK(run("constraints --config " + cfg.string() + " --out " + (dir / "bad").string()) == 1);

  write_text_file(cfg, "{ not json");
  CHECK(run("constraints --config " + cfg.string() + " --out " + (dir / "oops").string()) == 2);

  CHECK(run("constraints --config /no/such/file.json --out " + (dir / "x").string()) == 2);
}

TEST_CASE("born command: pass, statistical gate and usage errors") {
  const fs::path dir = fresh_dir("born");
  const fs::path cfg = dir / "born.json";

  write_json_file(cfg, small_born_config(2'000));
  CHECK(run("born --config " + cfg.string() + " --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "report.json"));
  CHECK(fs::exists(dir / "ok" / "manifest.json"));

  // Tiny ensembles are flagged, not trusted.
  write_json_file(cfg, small_born_config(10));
  CHECK(run("born --config " + cfg.string() + " --out " + (dir / "tiny").string()) == 1);
  const Json rep = Json::parse(read_text_file(dir / "tiny" / "report.json"));
  CHECK(rep.at("note").get<std::string>() == "insufficient statistics");

  CHECK(run("born --config /missing.json --out " + (dir / "x").string()) == 2);

  Json bad = small_born_config(100);
  bad["run"]["dt"] = -1.0;
  write_json_file(cfg, bad);
  CHECK(run("born --config " + cfg.string() + " --out " + (dir / "y").string()) == 2);
}

TEST_CASE("overrides change the resolved config") {
  const fs::path dir = fresh_dir("overrides");
  const fs::path cfg = dir / "born.json";
  write_json_file(cfg, small_born_config(2'000));
  CHECK(run("born --config " + cfg.string() + " --out " + (dir / "o").string() +
            " --trials-override 500 --seed-override 42") == 0);
  const Json manifest = Json::parse(read_text_file(dir / "o" / "manifest.json"));
  CHECK(manifest.at("config").at("run").at("trials").get<std::uint64_t>() == 500);
  CHECK(manifest.at("config").at("run").at("master_seed").get<std::uint64_t>() == 42);
  CHECK(manifest.at("master_seed").get<std::uint64_t>() == 42);
}

TEST_CASE("rerun from a manifest reproduces outputs byte for byte") {
  const fs::path dir = fresh_dir("rerun");
  const fs::path cfg = dir / "born.json";
  write_json_file(cfg, small_born_config(400));

  const fs::path out_a = dir / "a";
  const fs::path out_b = dir / "b";
  CHECK(run("born --config " + cfg.string() + " --out " + out_a.string() +
            " --emit-trajectories") == 0);
  CHECK(run("rerun --manifest " + (out_a / "manifest.json").string() + " --out " +
            out_b.string()) == 0);

  CHECK(read_text_file(out_a / "report.json") == read_text_file(out_b / "report.json"));
  CHECK(read_text_file(out_a / "trajectories.csv") == read_text_file(out_b / "trajectories.csv"));
}

TEST_CASE("timing command writes the hook catalog and skips short fits") {
  const fs::path dir = fresh_dir("timing");
  const fs::path cfg = dir / "timing.json";
  Json j;
  j["params"] = Json{{"lambda", 1e-16}, {"cell_volume", 1e-15}, {"density", 3e25}};
  j["hooks"] = Json::array({Json{{"name", "pointer"}, {"delta_n", 30000000000ULL}},
                            Json{{"name", "LCD-like"}, {"delta_n", 1000}}});
  j["scaling"] = Json{{"delta_n_list", Json::array({2, 2})}};
  write_json_file(cfg, j);
  CHECK(run("timing --config " + cfg.string() + " --out " + (dir / "t").string()) == 0);
  const Json out = Json::parse(read_text_file(dir / "t" / "timing.json"));
  CHECK(out.at("scaling").contains("skipped"));
  CHECK(out.at("hooks")[0].at("t_collapse").get<double>() ==
        doctest::Approx(3.3333333333e-5).epsilon(1e-9));
  CHECK(out.at("hooks")[0].at("detectable").get<bool>());
  CHECK(!out.at("hooks")[1].at("detectable").get<bool>());
  CHECK(fs::exists(dir / "t" / "hooks.txt"));
}

TEST_CASE("branchlab command exit codes") {
  const fs::path dir = fresh_dir("branchlab");
  const fs::path cfg = dir / "bl.json";

  Json good{{"grid_size", 1024},
            {"dx", 1.0},
            {"centers", Json::array({256.0, 768.0})},
            {"widths", Json::array({12.0, 12.0})},
            {"momenta", Json::array({0.0, 0.0})},
            {"a_plus_squared", 2.0 / 3.0},
            {"dt", 0.2},
            {"steps", 100}};
  write_json_file(cfg, good);
  CHECK(run("branchlab --config " + cfg.string() + " --out " + (dir / "ok").string()) == 0);
  const Json inv = Json::parse(read_text_file(dir / "ok" / "invariants.json"));
  CHECK(inv.at("pass").get<bool>());
  CHECK(inv.at("cross_element_exactly_zero").get<bool>());

  // Long horizon: tracked regions collide, exit 1 with the step recorded.
  Json collide = good;
  collide["steps"] = 1000;
  write_json_file(cfg, collide);
  CHECK(run("branchlab --config " + cfg.string() + " --out " + (dir / "long").string()) == 1);
  const Json inv2 = Json::parse(read_text_file(dir / "long" / "invariants.json"));
  CHECK(inv2.at("halted").get<bool>());
  CHECK(inv2.at("collision_step").get<std::uint64_t>() > 0);

  // Overlapping packets: configuration error, exit 2.
  Json overlap = good;
  overlap["centers"] = Json::array({500.0, 520.0});
  write_json_file(cfg, overlap);
  CHECK(run("branchlab --config " + cfg.string() + " --out " + (dir / "bad").string()) == 2);
}

TEST_CASE("nogo command gates on trials") {
  const fs::path dir = fresh_dir("nogo");
  const fs::path cfg = dir / "nogo.json";
  Json j;
  j["params"] = Json{{"lambda", 1.0}, {"cell_volume", 1.0}, {"density", 1.0}};
  j["delta_n"] = 4;
  j["a1_squared_first"] = 0.7;
  j["run"] = Json{{"dt", 1e-3},  {"t_max", 5.0},
                  {"trials", 10}, {"scheme", "coefficient-independent"},
                  {"master_seed", 7}, {"sample_times", Json::array({1.0, 5.0})}};
  write_json_file(cfg, j);
  CHECK(run("nogo --config " + cfg.string() + " --out " + (dir / "tiny").string()) == 1);
  const Json out = Json::parse(read_text_file(dir / "tiny" / "nogo.json"));
  CHECK(out.at("note").get<std::string>() == "insufficient statistics");
}

TEST_CASE("unknown flags and missing subcommand are usage errors") {
  CHECK(run("") == 2);
  CHECK(run("born") == 2);  // missing --config
  CHECK(run("frobnicate --config x") == 2);
}

TEST_CASE("explicit serialized scenarios are accepted as config payload") {
  const fs::path dir = fresh_dir("explicit");
  const fs::path cfg = dir / "born.json";
  Json j = small_born_config(500);
  // Replace the builder block with the full serialized scenario.
  j["scenario"] = to_json(two_branch_delta_scenario(unit_params(), 4, 2.0 / 3.0, "cat"));
  write_json_file(cfg, j);
  CHECK(run("born --config " + cfg.string() + " --out " + (dir / "o").string()) == 0);
  const Json manifest = Json::parse(read_text_file(dir / "o" / "manifest.json"));
  CHECK(manifest.at("config").at("scenario").at("name").get<std::string>() == "cat");
}

TEST_CASE("trajectory CSV and JSON trailer formats") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 4, 0.5);
  RunConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 1.0;
  cfg.trials = 1;
  cfg.scheme = Scheme::physical_drift;
  cfg.master_seed = 7;
  cfg.sample_times = {0.25, 0.5, 0.75, 1.0};
  const Trajectory t = evolve(sc, cfg, 0);

  const std::string csv = trajectory_to_csv(t);
  CHECK(csv.rfind("t,p_1,p_2,log_sq_norm\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 samples

  const Json trailer = trajectory_trailer(t);
  REQUIRE(t.winner.has_value());
  CHECK(trailer.at("winner").get<std::size_t>() == *t.winner + 1);  // 1-based outside
  CHECK(trailer.at("t_decision").get<double>() == *t.t_decision);
  CHECK(trailer.at("t_level").get<double>() == *t.t_level);
  CHECK(trailer.at("log_weight").get<double>() == 0.0);

  // Round-trip: parsing the CSV rows back gives the recorded samples.
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  std::size_t row = 0;
  while (std::getline(is, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double tv, p1, p2, lsn;
    ls >> tv >> p1 >> p2 >> lsn;
    CHECK(tv == t.times[row]);
    CHECK(p1 == t.probs[row][0]);
    CHECK(p2 == t.probs[row][1]);
    CHECK(lsn == t.log_sq_norm[row]);
    ++row;
  }
  CHECK(row == 4);
}
