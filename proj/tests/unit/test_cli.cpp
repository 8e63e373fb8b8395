#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MUSE_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("muse_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kFast =
    " --epochs 2 --hidden 8 --k-iters 1 --context-layers 1 --max-path-len 2 --batch 16 --lr 1e-3";

fs::path synth(const fs::path& root) {
  const auto data = root / "data";
  const auto r = run("synth --out " + data.string() + " --entities 40 --seed 3");
  EXPECT_EQ(r.code, 0) << r.out;
  return data;
}

TEST(Cli, HelpExitsZero) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"stats", "train", "eval", "predict", "ablate"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("stats --dataset /nonexistent/muse").code, 2);
  const auto root = work_dir("usage");
  const auto data = synth(root);
  EXPECT_EQ(run("train --dataset " + data.string() + " --branches prior,edges --out " +
                (root / "o").string())
                .code,
            2);
  EXPECT_EQ(run("train --dataset " + data.string() + " --lr 0 --out " + (root / "o").string())
                .code,
            2);
}

TEST(Cli, StatsJson) {
  const auto root = work_dir("stats");
  const auto data = synth(root);
  const auto r = run("stats --json --dataset " + data.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["entities"], 40);
  EXPECT_EQ(j["relations"], 8);
}

TEST(Cli, TrainEvalPredictFlow) {
  const auto root = work_dir("flow");
  const auto data = synth(root);
  const auto out = root / "run";
  const auto emb = data / "embeddings.bin";
  auto r = run("train --dataset " + data.string() + " --embeddings " + emb.string() + " --out " +
               out.string() + kFast);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("selected_epoch"), std::string::npos);
  for (const char* f : {"config.json", "metrics.jsonl", "model.ckpt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream metrics(out / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    EXPECT_NO_THROW(nlohmann::json::parse(line));
    ++lines;
  }
  EXPECT_EQ(lines, 2);

  r = run("eval --checkpoint " + (out / "model.ckpt").string() + " --buckets lis_ris");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("overall"), std::string::npos);
  EXPECT_NE(r.out.find("\"mode\":\"lis_ris\""), std::string::npos);
  EXPECT_EQ(run("eval --checkpoint " + (out / "model.ckpt").string() + " --buckets nope").code, 2);

  const std::string ckpt = " --checkpoint " + (out / "model.ckpt").string();
  r = run("predict" + ckpt + " --head e000 --tail e001 --top-k 3");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("rank"), std::string::npos);

  // k larger than |R| is clamped to the 8 relations.
  r = run("predict" + ckpt + " --head e000 --tail e001 --top-k 100");
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t rows = 0;
  for (std::size_t p = r.out.find("base"); p != std::string::npos; p = r.out.find("base", p + 1)) ++rows;
  for (std::size_t p = r.out.find("comp"); p != std::string::npos; p = r.out.find("comp", p + 1)) ++rows;
  EXPECT_EQ(rows, 8u);

  r = run("predict" + ckpt + " --head nobody --tail e001");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("nobody"), std::string::npos);

  EXPECT_EQ(run("eval --checkpoint " + (root / "missing.ckpt").string()).code, 2);
  std::ofstream(root / "corrupt.ckpt") << "MUSECKPT0";
  EXPECT_EQ(run("eval --checkpoint " + (root / "corrupt.ckpt").string()).code, 1);
}

TEST(Cli, AblatePrintsSevenRowsAndStaysUnderOut) {
  const auto root = work_dir("ablate");
  const auto data = synth(root);
  const auto out = root / "abl";
  const auto r = run("ablate --dataset " + data.string() + " --out " + out.string() + kFast);
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* row : {"prior", "context", "path", "prior,context", "prior,path",
                          "context,path", "prior,context,path"}) {
    EXPECT_NE(r.out.find(row), std::string::npos) << row;
  }
  const auto j = nlohmann::json::parse(std::ifstream(out / "ablation.json"));
  ASSERT_EQ(j.size(), 7u);
  EXPECT_EQ(j[6]["branches"], "prior,context,path");
  // Nothing written outside the output and data directories.
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    EXPECT_TRUE(name == "data" || name == "abl") << name;
  }
}

}  // namespace
