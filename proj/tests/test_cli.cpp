#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bivalid/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / ("bivalid_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }
  void write(const std::string& rel, const std::string& content) const {
    fs::create_directories((dir / rel).parent_path());
    std::ofstream(dir / rel) << content;
  }
};

// Runs the CLI, capturing stderr into `log`; returns the exit status.
int run(const std::string& args, const Sandbox& box, std::string* log = nullptr) {
  const auto err = box.path("stderr.txt");
  const std::string cmd = std::string(BIVALID_CLI) + " " + args + " > /dev/null 2> " + err;
  const int status = std::system(cmd.c_str());
  if (log) {
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    *log = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Writes a snapshot with a planted block as <dir>/<date>.csv.
void write_fixture(const Sandbox& box, const std::string& dir, const std::string& date, std::uint64_t seed,
                   bool weighted = true) {
  bivalid::SynthSpec s;
  s.holders = 40;
  s.assets = 120;
  s.holder_law = {bivalid::DegreeLaw::Kind::power_law, 1, 2.0, 2, 40, {}};
  s.asset_law = {bivalid::DegreeLaw::Kind::regular, 2, 2.5, 1, 0, {}};
  s.blocks = {{5, 15, 1.0}};
  s.seed = seed;
  s.weighted = weighted;
  s.date = date;
  box.write(dir + "/" + date + ".csv", bivalid::snapshot_to_string(bivalid::generate(s)));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("validate writes edges and metadata") {
    Sandbox box("validate");
    write_fixture(box, "in", "2005Q1", 1);
    REQUIRE(run("validate " + box.path("in/2005Q1.csv") + " --out " + box.path("out") + " --pvalues", box) == 0);
    const auto edges = slurp(box.path("out/2005Q1_holders_edges.csv"));
    CHECK(edges.rfind("node_a,node_b,overlap,p_value\n", 0) == 0);
    CHECK(lines(edges) >= 2);
    const auto meta = nlohmann::json::parse(slurp(box.path("out/2005Q1_holders_meta.json")));
    CHECK(meta.at("method") == "bonferroni");
    CHECK(meta.at("p_star").get<double>() > 0.0);
    CHECK(fs::exists(box.path("out/2005Q1_holders_pvalues.csv")));
    const auto manifest = nlohmann::json::parse(slurp(box.path("out/manifest_validate.json")));
    CHECK(manifest.at("inputs").size() == 1);
    CHECK(manifest.at("outputs").size() == 3);
  }

  TEST_CASE("malformed input exits 1 and writes nothing") {
    Sandbox box("malformed");
    box.write("bad.csv", "holder_id,asset_id,shares\nA,x,1\nB,y\n");
    std::string log;
    CHECK(run("validate " + box.path("bad.csv") + " --out " + box.path("out"), box, &log) == 1);
    CHECK(log.find("row") != std::string::npos);
    CHECK_FALSE(fs::exists(box.path("out")));
    CHECK(run("validate " + box.path("missing.csv") + " --out " + box.path("out"), box) == 1);
    CHECK(run("validate " + box.path("bad.csv") + " --epsilon 2", box) == 1);
    CHECK(run("frobnicate", box) == 1);
  }

  TEST_CASE("timeseries over four quarters") {
    Sandbox box("timeseries");
    for (int q = 1; q <= 4; ++q) write_fixture(box, "in", "2001Q" + std::to_string(q), q);
    REQUIRE(run("timeseries " + box.path("in") + " --out " + box.path("out"), box) == 0);
    const auto ts = slurp(box.path("out/timeseries_holders.csv"));
    CHECK(lines(ts) == 5);
    CHECK(ts.find("2001Q1,") < ts.find("2001Q4,"));

    std::string log;
    REQUIRE(run("timeseries " + box.path("in/2001Q1.csv") + " " + box.path("in/2001Q2.csv") + " --buy-sell --by-type" +
                    " --out " + box.path("bs"),
                box, &log) == 0);
    CHECK(log.find("warning") != std::string::npos);
    CHECK(lines(slurp(box.path("bs/timeseries_buy_holders.csv"))) == 2);
    CHECK(lines(slurp(box.path("bs/timeseries_sell_holders.csv"))) == 2);
    const auto manifest = nlohmann::json::parse(slurp(box.path("bs/manifest_timeseries.json")));
    CHECK(manifest.at("warnings").size() >= 1);
  }

  TEST_CASE("timeseries breakdown by holder type") {
    Sandbox box("bytype");
    write_fixture(box, "in", "2001Q1", 3);
    std::string meta = "holder_id,type\n";
    for (int i = 0; i < 40; ++i) meta += "h" + std::string(i < 10 ? "0" : "") + std::to_string(i) + (i % 2 ? ",Bank\n" : ",Hedge Fund\n");
    box.write("types.csv", meta);
    REQUIRE(run("timeseries " + box.path("in") + " --by-type --holder-meta " + box.path("types.csv") + " --out " +
                    box.path("out"),
                box) == 0);
    const auto ts = slurp(box.path("out/timeseries_holders.csv"));
    CHECK(ts.find("validated_Bank") != std::string::npos);
    CHECK(ts.find("validated_Hedge Fund") != std::string::npos);
  }

  TEST_CASE("oracle negative control and exhaustive mode") {
    Sandbox box("oracle");
    nlohmann::json spec{{"holders", 4},
                        {"assets", 7},
                        {"holder_degrees", {{"law", "explicit"}, {"degrees", {2, 3, 3, 4}}}},
                        {"asset_degrees", {{"law", "explicit"}, {"degrees", {1, 2, 2, 1, 2, 2, 2}}}},
                        {"seed", 4},
                        {"date", "tiny"}};
    box.write("tiny.json", spec.dump());
    CHECK(run("oracle --exhaustive --spec " + box.path("tiny.json") + " --out " + box.path("ok"), box) == 0);
    CHECK(run("oracle --exhaustive --inject-fault --spec " + box.path("tiny.json") + " --out " + box.path("bad"),
              box) == 3);
    CHECK(run("oracle --samples 20000 --inject-fault --spec " + box.path("tiny.json") + " --out " + box.path("mc"),
              box) == 3);
    CHECK(fs::exists(box.path("mc/oracle_mc.csv")));
  }

  TEST_CASE("outputs do not depend on the worker count") {
    Sandbox box("workers");
    write_fixture(box, "in", "2002Q1", 5);
    write_fixture(box, "in", "2002Q2", 6);
    REQUIRE(run("validate " + box.path("in") + " --workers 1 --out " + box.path("w1"), box) == 0);
    REQUIRE(run("validate " + box.path("in") + " --workers 4 --out " + box.path("w4"), box) == 0);
    for (const auto& e : fs::directory_iterator(box.path("w1"))) {
      const auto name = e.path().filename().string();
      CHECK_MESSAGE(slurp(e.path()) == slurp(box.path("w4/" + name)), name);
    }
  }

  TEST_CASE("config file values yield to flags") {
    Sandbox box("config");
    write_fixture(box, "in", "2003Q1", 7);
    box.write("run.toml", "[validate]\nepsilon = 0.05\nmethod = \"fdr\"\n");
    REQUIRE(run("--config " + box.path("run.toml") + " validate " + box.path("in") + " --method bonferroni --out " +
                    box.path("out"),
                box) == 0);
    const auto meta = nlohmann::json::parse(slurp(box.path("out/2003Q1_holders_meta.json")));
    CHECK(meta.at("method") == "bonferroni");
    CHECK(meta.at("epsilon").get<double>() == 0.05);
  }

  TEST_CASE("delta, fit and synth") {
    Sandbox box("delta");
    box.write("in/2001Q1.csv", "holder_id,asset_id,shares\nA,x,10\nA,y,5\nB,x,3\n");
    box.write("in/2001Q2.csv", "holder_id,asset_id,shares\nA,x,12\nA,y,1\nB,z,4\n");
    REQUIRE(run("delta " + box.path("in") + " --out " + box.path("out"), box) == 0);
    CHECK(slurp(box.path("out/2001Q2_buy.csv")) == "holder_id,asset_id\nA,x\nB,z\n");
    CHECK(slurp(box.path("out/2001Q2_sell.csv")) == "holder_id,asset_id\nA,y\nB,x\n");
    CHECK(run("delta " + box.path("in/2001Q1.csv") + " --out " + box.path("one"), box) == 1);

    REQUIRE(run("fit " + box.path("in/2001Q1.csv") + " --out " + box.path("fit"), box) == 0);
    CHECK(fs::exists(box.path("fit/2001Q1_fit.csv")));

    REQUIRE(run("synth --seed 3 --out " + box.path("s1"), box) == 0);
    REQUIRE(run("synth --seed 3 --out " + box.path("s2"), box) == 0);
    CHECK(slurp(box.path("s1/oracle.csv")) == slurp(box.path("s2/oracle.csv")));
    CHECK(nlohmann::json::parse(slurp(box.path("s1/oracle_spec.json"))).at("spec").at("seed") == 3);
  }

  TEST_CASE("analyze on synthetic holdings") {
    Sandbox box("analyze");
    for (int q = 1; q <= 3; ++q) write_fixture(box, "in", "2004Q" + std::to_string(q), 10 + q);
    REQUIRE(run("synth --seed 12 --out " + box.path("meta") + " --spec " + box.path("none.json"), box) == 1);
    // security metadata for all fixture assets
    std::string meta = "asset_id,price,outstanding,category\n";
    for (int s = 0; s < 120; ++s) {
      auto id = std::to_string(s);
      id = "a" + std::string(3 - id.size(), '0') + id;
      meta += id + "," + std::to_string(1 + s % 7) + ",1e12," + (s % 2 ? "Energy" : "Utilities") + "\n";
    }
    box.write("sec.csv", meta);
    box.write("mkt.csv", "date,return\n2004Q1,0.01\n2004Q2,-0.02\n");
    std::string log;
    const int code = run("analyze " + box.path("in") + " --security-meta " + box.path("sec.csv") +
                             " --market-returns " + box.path("mkt.csv") + " --distress-n 5 --out " + box.path("out"),
                         box, &log);
    CHECK_MESSAGE(code == 0, log);
    CHECK(fs::exists(box.path("out/2004Q1_weights.csv")));
    CHECK(fs::exists(box.path("out/2004Q1_securities.csv")));
    CHECK(lines(slurp(box.path("out/distress.csv"))) == 3);
    CHECK(fs::exists(box.path("out/manifest_analyze.json")));
    CHECK(run("analyze " + box.path("in") + " --out " + box.path("nometa"), box) == 1);

    REQUIRE(run("analyze " + box.path("in") + " --layer assets --security-meta " + box.path("sec.csv") + " --out " +
                    box.path("assets"),
                box) == 0);
    CHECK(fs::exists(box.path("assets/2004Q1_internal_degree.csv")));
  }
}
