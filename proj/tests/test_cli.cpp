// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gssl/cli.hpp"

using namespace gssl::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gssl_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// 100 images per class spread over the five training batches.
fs::path fake_cifar10(const fs::path& root) {
  auto dir = root / "cifar-10-batches-bin";
  fs::create_directories(dir);
  for (int b = 1; b <= 5; ++b) {
    std::ofstream f(dir / ("data_batch_" + std::to_string(b) + ".bin"), std::ios::binary);
    for (int r = 0; r < 200; ++r) {
      f.put(static_cast<char>(r % 10));
      for (int k = 0; k < 3072; ++k) f.put(static_cast<char>((k + r + b) & 0x7f));
    }
  }
  std::ofstream t(dir / "test_batch.bin", std::ios::binary);
  for (int r = 0; r < 20; ++r) {
    t.put(static_cast<char>(r % 10));
    for (int k = 0; k < 3072; ++k) t.put(static_cast<char>(k & 0x7f));
  }
  return root;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"train", "--help"}).code, kExitOk);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--out", "/tmp/x", "--no-such-flag"}).code, kExitUsage);
}

TEST(Cli, PrepareWritesDeterministicIndexFile) {
  auto dir = temp_dir("prepare");
  auto root = fake_cifar10(dir / "data");
  auto r = cli({"prepare", "--dataset", "cifar10", "--ratio", "0.01", "--seed", "42", "--out",
                (dir / "a.txt").string(), "--data-root", root.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  cli({"prepare", "--dataset", "cifar10", "--ratio", "0.01", "--seed", "42", "--out", (dir / "b.txt").string(),
       "--data-root", root.string()});
  EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
  std::ifstream f(dir / "a.txt");
  std::string header;
  std::getline(f, header);
  auto h = json::parse(header);
  EXPECT_EQ(h["counts"][0], 100);
  EXPECT_EQ(h["counts"][9], 1);
  EXPECT_EQ(h["seed"], 42);
  fs::remove_all(dir);
}

TEST(Cli, PrepareValidation) {
  auto dir = temp_dir("prepare_bad");
  EXPECT_EQ(cli({"prepare", "--dataset", "cifar10", "--ratio", "1.5", "--out", (dir / "a.txt").string()}).code,
            kExitUsage);
  auto missing = cli({"prepare", "--dataset", "cifar10", "--ratio", "0.1", "--out", (dir / "a.txt").string(),
                      "--data-root", (dir / "nowhere").string()});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_FALSE(missing.err.empty());
  EXPECT_FALSE(fs::exists(dir / "a.txt"));
  fs::remove_all(dir);
}

TEST(Cli, TrainFlagsEvalAndReport) {
  auto dir = temp_dir("train");
  auto a = dir / "runs" / "a", b = dir / "runs" / "b";
  auto r = cli({"train", "--dataset", "synthetic", "--epochs", "1", "--tasks=lorot_e,shuffle", "--seed", "3",
                "--quiet", "--out", a.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find(a.string()), std::string::npos);
  auto cfg = json::parse(slurp(a / "config.json"));
  EXPECT_EQ(cfg["tasks"].size(), 2u);
  EXPECT_EQ(cfg["lambda"], 0.1);
  ASSERT_EQ(cli({"train", "--dataset", "synthetic", "--epochs", "1", "--tasks=shuffle,lorot_e", "--seed", "4",
                 "--quiet", "--out", b.string()})
                .code,
            kExitOk);

  auto ev = cli({"eval", "--run", a.string()});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  auto ej = json::parse(ev.out);
  EXPECT_TRUE(ej["test_accuracy"].is_number());
  EXPECT_TRUE(ej["ssl_accuracy"].contains("lorot_e"));

  fs::create_directories(dir / "runs" / "broken");
  auto rep = cli({"report", (dir / "runs").string(), "--out", (dir / "report").string()});
  ASSERT_EQ(rep.code, kExitOk);
  EXPECT_NE(rep.err.find("broken"), std::string::npos);
  EXPECT_NE(rep.out.find("Imbalanced classification accuracy (%)"), std::string::npos);
  EXPECT_NE(rep.out.find("| +MoE(LoRot-E+ShuffleChannel) |"), std::string::npos);
  int rows = 0, bold = 0;
  std::istringstream lines(rep.out);
  for (std::string l; std::getline(lines, l);) {
    if (l.rfind("| +", 0) == 0) ++rows;
    for (auto p = l.find("**"); p != std::string::npos; p = l.find("**", p + 2)) ++bold;
  }
  EXPECT_EQ(rows, 2);
  EXPECT_GE(bold, 4);  // caption plus at least one bolded cell

  std::istringstream csv(slurp(dir / "report" / "report.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "method,dataset,ratio,accuracy,epochs,run_dir");
  std::vector<double> accs;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    accs.push_back(std::stod(cells.at(3)));
  }
  ASSERT_EQ(accs.size(), 2u);
  std::ifstream m(a / "metrics.jsonl");
  std::getline(m, line);
  EXPECT_EQ(accs[0], json::parse(line)["test_accuracy"].get<double>());
  fs::remove_all(dir);
}

TEST(Cli, TrainRejectsBadTasksAndConfig) {
  auto dir = temp_dir("train_bad");
  auto r = cli({"train", "--dataset", "synthetic", "--tasks=lorot_e,spin", "--out", (dir / "x").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("lorot_e, flip, shuffle"), std::string::npos);
  {
    std::ofstream f(dir / "c.json");
    f << R"({"dataset": "synthetic", "lambda": -2})";
  }
  EXPECT_EQ(cli({"train", "--config", (dir / "c.json").string(), "--out", (dir / "y").string()}).code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir / "y"));
  fs::remove_all(dir);
}

TEST(Cli, ReportOnNothingIsEmptyTable) {
  auto dir = temp_dir("empty");
  auto r = cli({"report", dir.string()});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("Imbalance Ratio"), std::string::npos);
  auto none = cli({"report"});
  EXPECT_EQ(none.code, kExitOk);
  fs::remove_all(dir);
}

TEST(Cli, SelftestPasses) {
  auto r = cli({"selftest"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, DumpTransformsWritesGrids) {
  auto dir = temp_dir("dump");
  auto r = cli({"dump-transforms", "--out", dir.string(), "--quadrant", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* name : {"lorot_e.png", "flip.png", "shuffle.png"}) {
    ASSERT_TRUE(fs::exists(dir / name));
    EXPECT_EQ(slurp(dir / name).substr(1, 3), "PNG");
  }
  EXPECT_EQ(cli({"dump-transforms", "--out", dir.string(), "--quadrant", "4"}).code, kExitUsage);
  fs::remove_all(dir);
}
