#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "snag/experiment.hpp"

using namespace snag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("snag_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cli {
  int code;
  std::string out;
  std::string err;
};

Cli cli(const std::string& args, const fs::path& dir) {
  const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = std::string(SNAG_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

json sbm_config() {
  return {{"sbm_blocks", 2}, {"sbm_nodes_per_block", 10}, {"sbm_p_in", 1.0}, {"sbm_p_out", 0.0},
          {"sbm_noise", 0.0}, {"hidden", 8},              {"max_epochs", 60}, {"patience", 10}};
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_WITH_AS(parse_config({{"sbm_blocks", 2}, {"budgit", 3}}), doctest::Contains("budgit"), InputError);
  CHECK_THROWS_AS(parse_config(json::object()), InputError);
  CHECK_THROWS_WITH_AS(parse_config({{"dataset", "/nonexistent/x"}}), doctest::Contains("/nonexistent/x"),
                       InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_blocks", 2}, {"mode", "bayes"}}), InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_blocks", 2}, {"seeds", json::array()}}), InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_blocks", 2}, {"hidden", "big"}}), InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_blocks", 2}, {"node_aggs", {"gcn", "geniepath"}}}), InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_blocks", 2}, {"mode", "fixed:node:gcn,gcn;skip:0;layer:max"}}), InputError);
  CHECK_THROWS_AS(parse_config({{"sbm_p_in", 0.1}, {"sbm_p_out", 0.3}}), InputError);
  auto c = parse_config({{"sbm_blocks", 2}, {"mode", "fixed:GCN-JK"}, {"seeds", {3, 4}}});
  CHECK(encode(*fixed_genotype(c)) == "node:gcn,gcn,gcn;skip:11;layer:concat");
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.search.budget == 200);
}

TEST_CASE("fixed GCN over five seeds on a separable SBM") {
  json j = sbm_config();
  j["mode"] = "fixed:GCN";
  j["seeds"] = {0, 1, 2, 3, 4};
  auto rep = run_experiment(parse_config(j));
  REQUIRE(rep.runs.size() == 5);
  for (const auto& r : rep.runs) CHECK(r.test_metric == 1.0);
  CHECK(rep.std == 0.0);
  CHECK(rep.mean == 1.0);
}

TEST_CASE("report mean and std follow the per-seed values") {
  json j = sbm_config();
  j["sbm_p_in"] = 0.3;
  j["sbm_p_out"] = 0.1;
  j["sbm_noise"] = 1.5;
  j["max_epochs"] = 10;
  j["mode"] = "fixed:GAT";
  j["seeds"] = {0, 1, 2};
  auto rep = run_experiment(parse_config(j));
  double sum = 0;
  for (const auto& r : rep.runs) sum += r.test_metric;
  CHECK(rep.mean == sum / 3);
  double ss = 0;
  for (const auto& r : rep.runs) ss += (r.test_metric - rep.mean) * (r.test_metric - rep.mean);
  CHECK(std::abs(rep.std - std::sqrt(ss / 2)) < 1e-12);
}

TEST_CASE("cli run: snag with budget 1 writes one-record traces") {
  const fs::path dir = scratch("run");
  json j = sbm_config();
  j["mode"] = "snag";
  j["layers"] = 2;
  j["node_aggs"] = {"gcn", "mlp"};
  j["derive_n"] = 1;
  j["grid_lr"] = {0.01};
  j["grid_hidden"] = {8};
  write(dir / "c.json", j.dump());
  auto r = cli("run --config " + (dir / "c.json").string() + " --out " + (dir / "out").string() + " --seed 5,6 --budget 1",
               dir);
  REQUIRE(r.code == 0);
  for (int s : {5, 6}) {
    const auto trace = slurp(dir / "out" / ("trace_seed" + std::to_string(s) + ".csv"));
    std::istringstream in(trace);
    std::string header, row, extra;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "iter,seconds,genotype,val_metric,baseline");
    CHECK_FALSE(std::getline(in, extra));
    const auto open = row.find('"'), close = row.rfind('"');
    REQUIRE(open != std::string::npos);
    REQUIRE(close > open);
    CHECK_NOTHROW(decode(row.substr(open + 1, close - open - 1)));
  }
  json rep = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(rep["runs"].size() == 2);
  CHECK(rep["mode"] == "snag");
}

TEST_CASE("cli ablate emits with and without columns") {
  const fs::path dir = scratch("ablate");
  json j = sbm_config();
  j["mode"] = "random";
  j["budget"] = 2;
  j["derive_n"] = 1;
  j["grid_lr"] = {0.01};
  j["grid_hidden"] = {8};
  j["seeds"] = {0};
  write(dir / "c.json", j.dump());
  auto r = cli("ablate --config " + (dir / "c.json").string() + " --out " + (dir / "out").string(), dir);
  REQUIRE(r.code == 0);
  json a = json::parse(slurp(dir / "out" / "ablation.json"));
  CHECK(a.size() == 2);
  CHECK(a.contains("with"));
  CHECK(a.contains("without"));
  for (const auto& run : a["without"]["runs"]) {
    CHECK(run["genotype"].get<std::string>().find(";layer:") == std::string::npos);
  }
  const auto trace = slurp(dir / "out" / "without" / "trace_seed0.csv");
  CHECK(trace.find(";layer:") == std::string::npos);
}

TEST_CASE("cli enumerate lists a 24-point space in order") {
  const fs::path dir = scratch("enum");
  write(dir / "c.json", R"({"sbm_blocks": 2, "layers": 2, "node_aggs": ["mlp", "gcn"]})");
  auto r = cli("enumerate --config " + (dir / "c.json").string(), dir);
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 25);
  CHECK(lines.back() == "count 24");
  CHECK(std::is_sorted(lines.begin(), lines.end() - 1));

  write(dir / "big.json", R"({"sbm_blocks": 2, "enum_cap": 10})");
  auto big = cli("enumerate --config " + (dir / "big.json").string(), dir);
  CHECK(big.code == 2);
  CHECK(big.err.find("15972") != std::string::npos);
}

TEST_CASE("cli convert: toy edge list, round trip and missing file") {
  const fs::path dir = scratch("convert");
  const fs::path raw = dir / "raw";
  fs::create_directories(raw);
  write(raw / "edges.txt", "0 1\n1 2\n");
  write(raw / "features.csv", "1,0\n0,1\n1,1\n");
  write(raw / "labels.txt", "cat\ndog\ncat\n");
  auto r = cli("convert --format edgelist --input " + raw.string() + " --out " + (dir / "ds").string(), dir);
  REQUIRE(r.code == 0);
  json m = json::parse(slurp(dir / "ds" / "manifest.json"));
  CHECK(m["num_nodes"] == 3);
  CHECK(m["num_classes"] == 2);
  LoadOptions raw_opts;
  raw_opts.row_normalize = false;
  Dataset ds = load_dataset(dir / "ds", raw_opts);
  CHECK(ds.graphs[0].num_nodes == 3);
  CHECK(ds.graphs[0].num_entries() == 4);
  CHECK(ds.num_features == 2);
  CHECK(ds.graphs[0].labels == std::vector<int>{0, 1, 0});

  fs::remove(raw / "features.csv");
  auto bad = cli("convert --format edgelist --input " + raw.string() + " --out " + (dir / "ds2").string(), dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find((raw / "features.csv").string()) != std::string::npos);
}

TEST_CASE("cli usage errors exit with 2") {
  const fs::path dir = scratch("usage");
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("run", dir).code == 2);
  write(dir / "c.json", R"({"sbm_blocks": 2, "colour": 1})");
  auto r = cli("run --config " + (dir / "c.json").string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("colour") != std::string::npos);
}
