#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "mario/corpus.hpp"
#include "mario/novelty.hpp"
#include "support/oracles.hpp"

using namespace mario;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mario_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kManifest = (fs::path(MARIO_DATA_DIR) / "corpus" / "manifest.txt").string();

// Tiny generator and infill checkpoints shared by the later cases.
const fs::path& tiny_models() {
  static const fs::path dir = [] {
    const fs::path d = scratch("models");
    const Result r = run({"--seed", "3", "--out", d.string(), "train", "--manifest", kManifest, "--steps", "4",
                          "--batch", "1", "--embed", "8", "--layers", "1", "--heads", "1",
                          "--infill-columns", "8", "--infill-max-span", "4", "--eval-every", "2", "--eval-stride",
                          "200"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli: usage errors exit with the config code") {
  CHECK(run({}).code == cli::kConfigError);
  CHECK(run({"bogus"}).code == cli::kConfigError);
  CHECK(run({"play", "--frobnicate"}).code == cli::kConfigError);
  const Result help = run({"--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("prepare") != std::string::npos);
  CHECK(help.out.find("annotate") != std::string::npos);
}

TEST_CASE("cli: sha256") {
  CHECK(cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("cli: prepare is deterministic and names missing files") {
  const fs::path a = scratch("prep_a"), b = scratch("prep_b");
  REQUIRE(run({"--out", a.string(), "prepare", "--manifest", kManifest, "--stride", "50"}).code == 0);
  REQUIRE(run({"--out", b.string(), "prepare", "--manifest", kManifest, "--stride", "50"}).code == 0);
  CHECK(read_text_file(a / "hashes.txt") == read_text_file(b / "hashes.txt"));
  CHECK(read_text_file(a / "stitched.txt") == render_ascii(load_corpus(kManifest).stitched));
  CHECK(fs::exists(a / "annotations.csv"));

  const nlohmann::json snap = nlohmann::json::parse(read_text_file(a / "config.json"));
  CHECK(snap["command"] == "prepare");
  CHECK(fs::path(snap["manifest"].get<std::string>()).is_absolute());

  const fs::path bad = scratch("prep_bad");
  write_text_file(bad / "manifest.txt", "nowhere.txt\n");
  const Result r = run({"--out", (bad / "out").string(), "prepare", "--manifest", (bad / "manifest.txt").string()});
  CHECK(r.code == cli::kRuntimeError);
  CHECK(r.err.find("nowhere.txt") != std::string::npos);
}

TEST_CASE("cli: annotate") {
  const fs::path d = scratch("annotate");
  const fs::path level = d / "level.txt";
  save_level_file(level, oracle::flat_level(60));
  const Result r = run({"--out", d.string(), "annotate", "--level", level.string(), "--stride", "5"});
  REQUIRE(r.code == 0);
  const std::string csv = read_text_file(d / "annotations.csv");
  CHECK(csv.rfind("start_col,prompt\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);
}

TEST_CASE("cli: train is reproducible and resumable") {
  const fs::path& d = tiny_models();
  const fs::path again = scratch("models_again");
  REQUIRE(run({"--seed", "3", "--out", again.string(), "train", "--manifest", kManifest, "--kind", "generator",
               "--steps", "4", "--batch", "1", "--embed", "8", "--layers", "1", "--heads", "1", "--infill-columns",
               "8", "--infill-max-span", "4", "--eval-every", "2", "--eval-stride", "200"})
              .code == 0);
  CHECK(read_text_file(d / "generator.ckpt") == read_text_file(again / "generator.ckpt"));
  const std::string metrics = read_text_file(d / "generator_metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 4);
  CHECK(fs::exists(d / "infill.ckpt"));
  CHECK(fs::exists(d / "generator_evals.csv"));

  const fs::path resumed = scratch("resumed");
  const Result r = run({"--seed", "3", "--out", resumed.string(), "train", "--manifest", kManifest, "--steps", "6",
                        "--batch", "1", "--eval-every", "0", "--resume", (d / "generator.ckpt").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("finished at step 6") != std::string::npos);
  const std::string m2 = read_text_file(resumed / "generator_metrics.csv");
  CHECK(std::count(m2.begin(), m2.end(), '\n') == 1 + 2);
  CHECK(m2.find("\n5,") != std::string::npos);
}

TEST_CASE("cli: sample") {
  const fs::path ckpt = tiny_models() / "generator.ckpt";
  const fs::path d = scratch("sample");
  Result r = run({"--out", d.string(), "sample", "--checkpoint", ckpt.string(), "--prompt",
                  "no pipes, no enemies, many blocks", "--columns", "6", "--count", "2", "--render"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(load_level_file(d / "sample_000.txt").width() == 6);
  CHECK(fs::exists(d / "sample_001.json"));
  const auto meta = nlohmann::json::parse(read_text_file(d / "sample_000.json"));
  CHECK(meta["match"].contains("blocks"));

  r = run({"--out", d.string(), "sample", "--checkpoint", ckpt.string(), "--prompt", "many dragons"});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("dragons") != std::string::npos);

  const fs::path none = scratch("sample_none");
  r = run({"--out", none.string(), "sample", "--checkpoint", ckpt.string(), "--count", "0"});
  CHECK(r.code == 0);
  CHECK_FALSE(fs::exists(none / "sample_000.txt"));

  r = run({"--out", none.string(), "sample", "--checkpoint", ckpt.string(), "--temperature", "0"});
  CHECK(r.code == cli::kConfigError);
}

TEST_CASE("cli: config file and environment") {
  const fs::path ckpt = tiny_models() / "generator.ckpt";
  const fs::path d = scratch("config");
  write_text_file(d / "run.ini", "[sample]\ntemperature=0\ncolumns=4\n");
  CHECK(run({"--config", (d / "run.ini").string(), "--out", d.string(), "sample", "--checkpoint", ckpt.string()})
            .code == cli::kConfigError);
  const Result ok = run({"--config", (d / "run.ini").string(), "--out", d.string(), "sample", "--checkpoint",
                         ckpt.string(), "--temperature", "1.5"});
  REQUIRE_MESSAGE(ok.code == 0, ok.err);
  CHECK(load_level_file(d / "sample_000.txt").width() == 4);
  const auto snap = nlohmann::json::parse(read_text_file(d / "config.json"));
  CHECK(snap["temperature"] == "1.5");
  CHECK(snap["columns"] == "4");

  const fs::path root = scratch("env_root");
  ::setenv("MARIO_OUT", root.c_str(), 1);
  const fs::path level = root / "flat.txt";
  save_level_file(level, oracle::flat_level(20));
  const Result p = run({"play", "--level", level.string()});
  ::unsetenv("MARIO_OUT");
  CHECK(p.code == 0);
  CHECK(fs::exists(root / "play" / "play_summary.csv"));
}

TEST_CASE("cli: eval") {
  const fs::path ckpt = tiny_models() / "generator.ckpt";
  const fs::path a = scratch("eval_a"), b = scratch("eval_b");
  REQUIRE(run({"--out", a.string(), "eval", "--checkpoint", ckpt.string(), "--manifest", kManifest, "--eval-stride",
               "100"})
              .code == 0);
  REQUIRE(run({"--out", b.string(), "eval", "--checkpoint", ckpt.string(), "--manifest", kManifest, "--eval-stride",
               "100"})
              .code == 0);
  const std::string csv = read_text_file(a / "eval.csv");
  CHECK(csv.rfind("tile_acc,path_acc,", 0) == 0);
  CHECK(csv == read_text_file(b / "eval.csv"));

  const Result empty = run({"--out", a.string(), "eval", "--checkpoint", ckpt.string(), "--manifest", kManifest,
                            "--val-fraction", "0.0001"});
  CHECK(empty.code == cli::kRuntimeError);
  CHECK(empty.err.find("EmptyValidation") != std::string::npos);
}

TEST_CASE("cli: play") {
  const fs::path d = scratch("play");
  save_level_file(d / "flat.txt", oracle::flat_level(20));
  save_level_file(d / "wall.txt", oracle::walled_level(20, 10, 6));
  const Result r = run({"--out", d.string(), "play", "--level", (d / "flat.txt").string(), "--level",
                        (d / "wall.txt").string(), "--render"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("flat.txt playable") != std::string::npos);
  CHECK(r.out.find("wall.txt not playable") != std::string::npos);
  CHECK(r.out.find('A') != std::string::npos);
  const std::string summary = read_text_file(d / "play_summary.csv");
  CHECK(summary.find("mae_playable,mae_not_playable,mae_all") != std::string::npos);
  CHECK(summary.find("\n2,0.5") != std::string::npos);
  CHECK(run({"--out", d.string(), "play", "--level", (d / "flat.txt").string(), "--jump", "0"}).code ==
        cli::kConfigError);
  CHECK(run({"--out", d.string(), "play", "--level", (d / "missing.txt").string()}).code == cli::kRuntimeError);
}

TEST_CASE("cli: novelty search") {
  const fs::path& m = tiny_models();
  const fs::path a = scratch("ns_a"), b = scratch("ns_b"), zero = scratch("ns_zero");
  const std::vector<std::string> common = {"ns", "--generator", (m / "generator.ckpt").string(), "--infill",
                                           (m / "infill.ckpt").string(), "--columns", "100", "--slide", "2"};
  auto with = [&](const fs::path& out, const std::string& iters) {
    std::vector<std::string> args = {"--seed", "9", "--out", out.string()};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), {"--iters", iters});
    return run(args);
  };
  Result r = with(zero, "0");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(zero / "elite_0029.txt"));
  CHECK_FALSE(fs::exists(zero / "elite_0030.txt"));
  CHECK(fs::exists(zero / "coverage.csv"));

  REQUIRE(with(a, "3").code == 0);
  REQUIRE(with(b, "3").code == 0);
  CHECK(read_text_file(a / "bcs.csv") == read_text_file(b / "bcs.csv"));
  CHECK(read_text_file(a / "manifest.json") == read_text_file(b / "manifest.json"));
  CHECK(import_bcs(read_text_file(a / "bcs.csv")).size() >= 30u);
}
