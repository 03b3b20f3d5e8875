#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = CROW_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "crow_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string p(const char* name) { return (work_dir() / name).string(); }

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_toy_config(const std::string& path) {
  std::ofstream out(path);
  out << R"({
  "flow": {"d_x": 8, "d_y": 1, "d_z": 7, "d_total": 12, "n_blocks": 2, "hidden": 8,
           "split": {"kind": "halves"}, "seed": 3},
  "train": {"batch": 8, "epochs": 4, "lr": 0.005, "seed": 3}
})";
}

void write_conditions(const std::string& path) {
  std::ofstream out(path);
  out << "t,y_1\n1,10\n2,20\n3,30\n";
}

}  // namespace

TEST_CASE("unknown flags exit with code 2 and usage text") {
  CHECK(run("synth --bogus-flag 1") == 2);
  CHECK(run("no-such-subcommand") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("synth -> train -> generate -> density -> analyze pipeline") {
  write_toy_config(p("toy.json"));
  write_conditions(p("cond.csv"));

  REQUIRE(run("synth --kind regime --n 32 --t 3 --d 8 --seed 5 --out " + p("data.crow")) == 0);
  REQUIRE(run("train --config " + p("toy.json") + " --data " + p("data.crow") + " --out " +
              p("model.crow")) == 0);
  CHECK(fs::exists(p("model.crow")));
  CHECK(fs::exists(p("model.crow.metrics.csv")));

  REQUIRE(run("generate --model " + p("model.crow") + " --conditions " + p("cond.csv") +
              " --n 12 --seed 9 --out " + p("gen_a.crow")) == 0);
  REQUIRE(run("generate --model " + p("model.crow") + " --conditions " + p("cond.csv") +
              " --n 12 --seed 11 --out " + p("gen_b.crow")) == 0);

  REQUIRE(run("density --model " + p("model.crow") + " --data " + p("data.crow") + " --out " +
              p("density.csv")) == 0);
  std::ifstream density(p("density.csv"));
  std::string header;
  std::getline(density, header);
  CHECK(header == "seq_id,t,logdet,log_density");
  std::size_t rows = 0;
  for (std::string line; std::getline(density, line);) rows += line.empty() ? 0 : 1;
  CHECK(rows == 32 * 3);

  REQUIRE(run("analyze --group-a " + p("gen_a.crow") + " --group-b " + p("gen_b.crow") +
              " --t-index 3 --alpha 0.01 --out " + p("analysis.csv")) == 0);
  std::ifstream ana(p("analysis.csv"));
  std::getline(ana, header);
  CHECK(header == "feature,t_stat,p_raw,p_corrected,significant");
}

TEST_CASE("fixed seeds reproduce output files byte for byte") {
  write_toy_config(p("toy2.json"));
  write_conditions(p("cond2.csv"));

  REQUIRE(run("synth --kind blob --n 6 --t 4 --grid-rows 10 --grid-cols 10 --seed 21 --out " +
              p("blob_a.crow")) == 0);
  REQUIRE(run("synth --kind blob --n 6 --t 4 --grid-rows 10 --grid-cols 10 --seed 21 --out " +
              p("blob_b.crow")) == 0);
  CHECK(slurp(p("blob_a.crow")) == slurp(p("blob_b.crow")));

  REQUIRE(run("synth --kind regime --n 16 --t 3 --d 8 --seed 2 --out " + p("rep.crow")) == 0);
  for (const char* tag : {"m1", "m2"}) {
    REQUIRE(run("train --config " + p("toy2.json") + " --data " + p("rep.crow") + " --out " +
                work_dir().string() + "/" + tag + ".crow --seed 13") == 0);
  }
  CHECK(slurp(p("m1.crow")) == slurp(p("m2.crow")));
  CHECK(slurp(p("m1.crow.metrics.csv")) == slurp(p("m2.crow.metrics.csv")));

  for (const char* tag : {"g1", "g2"}) {
    REQUIRE(run("generate --model " + p("m1.crow") + " --conditions " + p("cond2.csv") +
                " --n 4 --seed 31 --out " + work_dir().string() + "/" + tag + ".crow") == 0);
  }
  CHECK(slurp(p("g1.crow")) == slurp(p("g2.crow")));
}

TEST_CASE("generate accepts a mid-sequence covariate flip") {
  std::ofstream cond(p("flip.csv"));
  cond << "t,y_1\n1,10\n2,10\n3,30\n4,30\n";  // condition flips at t = 3
  cond.close();
  CHECK(run("generate --model " + p("m1.crow") + " --conditions " + p("flip.csv") +
            " --n 2 --seed 1 --out " + p("flip.crow")) == 0);
}

TEST_CASE("verify runs the oracle suite end to end") {
  CHECK(run("verify --seed 4") == 0);
}
