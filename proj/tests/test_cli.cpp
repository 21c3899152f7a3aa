#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "carleman_lab/run.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("cl_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the binary with stdout/stderr discarded; returns the exit status.
int lab(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" CARLEMAN_LAB_EXE "\" " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const std::vector<std::pair<std::string, std::string>>& small_configs() {
  static const std::vector<std::pair<std::string, std::string>> v{
      {"verify-identities", R"({"grid": {"N_list": [4, 16]}, "identities": {"trials": 5}, "ensemble": {"seed": 2}})"},
      {"simulate", R"({"grid": {"N": 8}, "time": {"T": 0.25, "K": 32}, "coefficients": {"a": 0.5, "g": 0.2},
                       "ensemble": {"M": 20, "seed": 4}, "output": {"every": 8}})"},
      {"verify-carleman", R"({"grid": {"L": 0.5, "N_list": [7, 15]}, "time": {"K": 64},
                              "weights": {"lambda": [1], "s": [11, 14]}, "family": {"family_seed": 3},
                              "ensemble": {"M": 6, "seed": 5}})"},
      {"inverse-source", R"({"grid": {"N_list": [7, 15]}, "time": {"K": 64}, "coefficients": {"a": 0.5},
                             "family": {"pairs": 3}, "ensemble": {"M": 6, "seed": 6}})"},
      {"cauchy", R"({"grid": {"N_list": [15]}, "time": {"K": 256}, "coefficients": {"a": 0.5, "b": 0.2, "c": 0.2},
                     "family": {"omegas": [10, 40, 160]}, "ensemble": {"M": 4, "seed": 7},
                     "continuation": {"enabled": true, "N": 8, "K": 16, "alpha": [1e-2, 1e-4]}})"},
  };
  return v;
}

}  // namespace

TEST(Cli, IdentitiesAtN64) {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"command": "verify-identities", "grid": {"N_list": [64]}})");
  ASSERT_EQ(lab("verify-identities --config " + cfg.string() + " --out " + s.dir.string()), 0);
  const auto body = lines(carleman_lab::csv_body(slurp(s.dir / "verify-identities.csv")));
  ASSERT_EQ(body.size(), 12u);  // header + one row per identity
  const auto head = split(body[0]);
  const auto col = std::find(head.begin(), head.end(), "max_residual") - head.begin();
  ASSERT_LT(col, static_cast<long>(head.size()));
  for (std::size_t i = 1; i < body.size(); ++i) {
    EXPECT_LE(carleman_lab::parse_number(split(body[i])[col]), 1e-12) << body[i];
  }
}

TEST(Cli, DeterministicAcrossRunsAndThreads) {
  Scratch s;
  for (const auto& [cmd, text] : small_configs()) {
    const auto cfg = s.write(cmd + ".json", text);
    const auto run_into = [&](const std::string& sub, const std::string& extra) {
      const auto out = s.dir / sub;
      EXPECT_EQ(lab(cmd + " --config " + cfg.string() + " --out " + out.string() + extra), 0) << cmd;
      std::string all;
      for (const auto& e : fs::directory_iterator(out)) {
        all += e.path().filename().string() + "\n" + carleman_lab::csv_body(slurp(e.path()));
      }
      return all;
    };
    const auto a = run_into(cmd + "_a", " --threads 1");
    const auto b = run_into(cmd + "_b", " --threads 1");
    const auto c = run_into(cmd + "_c", " --threads 3");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b) << cmd;
    EXPECT_EQ(a, c) << cmd;
  }
}

TEST(Cli, SeedOverrideAndThreadsFromEnvironment) {
  Scratch s;
  const auto cfg = s.write("c.json", small_configs()[1].second);
  ASSERT_EQ(lab("simulate --config " + cfg.string() + " --out " + (s.dir / "x").string() + " --seed 99",
                "CARLEMAN_LAB_THREADS=2"),
            0);
  const auto text = slurp(s.dir / "x" / "simulate.csv");
  EXPECT_NE(text.find("# master_seed: 99\n"), std::string::npos);
  EXPECT_NE(text.find("# threads: 2\n"), std::string::npos);
  ASSERT_EQ(lab("simulate --config " + cfg.string() + " --out " + (s.dir / "y").string()), 0);
  EXPECT_NE(carleman_lab::csv_body(text), carleman_lab::csv_body(slurp(s.dir / "y" / "simulate.csv")));
}

TEST(Cli, ValidationFailuresWriteNothing) {
  Scratch s;
  const auto out = s.dir / "out";
  const auto bad = s.write("bad.json", R"({"command": "simulate", "grid": {"N": 1}, "extra": 0})");
  EXPECT_EQ(lab("simulate --config " + bad.string() + " --out " + out.string()), 1);
  const auto broken = s.write("broken.json", "{\"command\": ");
  EXPECT_EQ(lab("simulate --config " + broken.string() + " --out " + out.string()), 1);
  EXPECT_EQ(lab("simulate --config " + (s.dir / "missing.json").string() + " --out " + out.string()), 1);
  EXPECT_EQ(lab("bogus --config " + bad.string()), 1);
  EXPECT_EQ(lab("simulate"), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, UnwritableOutput) {
  Scratch s;
  const auto cfg = s.write("c.json", small_configs()[0].second);
  const auto file = s.write("plain", "x");
  EXPECT_EQ(lab("verify-identities --config " + cfg.string() + " --out " + (file / "sub").string()), 1);
}

TEST(Cli, NumericFailureExitsTwo) {
  Scratch s;
  const auto cfg = s.write(
      "c.json", R"({"command": "simulate", "grid": {"N": 7}, "time": {"K": 64}, "coefficients": {"a": 1e6}})");
  const auto out = s.dir / "out";
  EXPECT_EQ(lab("simulate --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_TRUE(fs::is_empty(out));
}

TEST(Cli, HelpAndNoTemporaries) {
  EXPECT_EQ(lab("--help"), 0);
  Scratch s;
  const auto cfg = s.write("c.json", small_configs()[4].second);
  const auto out = s.dir / "out";
  ASSERT_EQ(lab("cauchy --config " + cfg.string() + " --out " + out.string()), 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(out)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"cauchy.csv", "cauchy_continuation.csv"}));
}
