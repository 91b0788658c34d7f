// Drives the installed binary end to end through std::system: subcommand
// grammar, exit codes, artifact layout, and rerun determinism.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

const std::string kCli = ZSSEG_CLI_PATH;

std::string work_root() {
  static const std::string root = [] {
    auto dir = fs::temp_directory_path() / "zsseg_cli_tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
  }();
  return root;
}

int run(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = kCli + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  f << text;
}

// Shared fixture: dataset, config, and a short training run.
struct Walkthrough {
  std::string root, data, data_b, cfg_path, out_dir, ckpt;
  Walkthrough() {
    root = work_root() + "/walk";
    fs::create_directories(root);
    data = root + "/data";
    data_b = root + "/data_b";
    out_dir = root + "/run";
    cfg_path = root + "/run.cfg";
    REQUIRE(run("synth --out " + data + " --n 24 --size 48 --classes 4 --seed 3") == 0);
    REQUIRE(run("synth --out " + data_b + " --n 24 --size 48 --classes 4 --seed 3 "
                "--style textured") == 0);
    write_text(cfg_path,
               "dataset.root = " + data +
                   "\n"
                   "dataset.image_size = 48\n"
                   "fold.classes_per_fold = 2\n"
                   "backbone.block4_channels = 16\n"
                   "train.iterations = 8\n"
                   "train.batch_size = 1\n"
                   "train.out_dir = " + out_dir +
                   "\n"
                   "eval.episodes = 4\n");
    REQUIRE(run("train --config " + cfg_path, root + "/train.log") == 0);
    ckpt = out_dir + "/checkpoint_final.zscp";
  }
};

Walkthrough& walkthrough() {
  static Walkthrough w;
  return w;
}

}  // namespace

TEST_CASE("version and help exit zero") {
  REQUIRE(run("--version") == 0);
  REQUIRE(run("--help") == 0);
  REQUIRE(run("train --help") == 0);
}

TEST_CASE("argument errors exit with code 1") {
  REQUIRE(run("no-such-command") == 1);
  REQUIRE(run("train") == 1);                       // missing --config
  REQUIRE(run("predict --image x.png") == 1);       // missing required flags
  REQUIRE(run("synth") == 1);                       // missing --out
}

TEST_CASE("config errors exit with code 1 and name the offender") {
  const std::string dir = work_root() + "/cfgerr";
  fs::create_directories(dir);
  write_text(dir + "/typo.cfg", "learning_rat = 0.01\n");
  const std::string log = dir + "/err.log";
  REQUIRE(run("train --config " + dir + "/typo.cfg", log) == 1);
  REQUIRE(slurp(log).find("learning_rat") != std::string::npos);

  REQUIRE(run("train --config " + dir + "/absent.cfg") == 1);
}

TEST_CASE("training writes a header, checkpoints, and the class audit") {
  auto& w = walkthrough();
  const std::string log = slurp(w.root + "/train.log");
  REQUIRE(log.find("config_hash ") != std::string::npos);
  REQUIRE(log.find("seed ") != std::string::npos);
  REQUIRE(log.find("version ") != std::string::npos);
  REQUIRE(log.find("parameters ") != std::string::npos);
  REQUIRE(log.find("trainable") != std::string::npos);
  REQUIRE(fs::exists(w.ckpt));

  auto audit = nlohmann::json::parse(slurp(w.out_dir + "/train_audit.json"));
  REQUIRE(audit["train_classes"] == nlohmann::json({3, 4}));
  REQUIRE(audit["test_classes"] == nlohmann::json({1, 2}));
  for (const auto& [cls, n] : audit["sampled_class_counts"].items())
    REQUIRE((cls == "3" || cls == "4"));
}

TEST_CASE("eval writes one metrics line with the run's config hash") {
  auto& w = walkthrough();
  REQUIRE(run("eval --config " + w.cfg_path + " --checkpoint " + w.ckpt) == 0);
  const std::string text = slurp(w.out_dir + "/metrics.jsonl");
  auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
  REQUIRE(j["split"] == "test");
  REQUIRE(j["domain"] == "source");
  REQUIRE(j["n_episodes"] == 4);
  REQUIRE(j["per_class_iou"].size() <= 2);
  REQUIRE(j["config_hash"].is_string());

  REQUIRE(run("eval --config " + w.cfg_path + " --checkpoint " + w.ckpt +
              " --split train") == 0);
  const std::string text2 = slurp(w.out_dir + "/metrics.jsonl");
  auto j2 = nlohmann::json::parse(text2.substr(0, text2.find('\n')));
  REQUIRE(j2["split"] == "train");
  REQUIRE(j2["config_hash"] == j["config_hash"]);

  REQUIRE(run("eval --config " + w.cfg_path + " --checkpoint " + w.ckpt +
              " --split validation") == 1);
}

TEST_CASE("domain-eval emits source and target records in one file") {
  auto& w = walkthrough();
  write_text(w.root + "/map.json", R"({"1": 1, "2": 2})");
  REQUIRE(run("domain-eval --config " + w.cfg_path + " --checkpoint " + w.ckpt +
              " --target-root " + w.data_b + " --class-map " + w.root + "/map.json") == 0);
  std::ifstream in(w.out_dir + "/metrics_domain.jsonl");
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0]["domain"] == "source");
  REQUIRE(rows[1]["domain"] == "target");
  REQUIRE(rows[0]["config_hash"] == rows[1]["config_hash"]);

  write_text(w.root + "/badmap.json", R"({"1": 1, "7": 2})");
  REQUIRE(run("domain-eval --config " + w.cfg_path + " --checkpoint " + w.ckpt +
              " --target-root " + w.data_b + " --class-map " + w.root + "/badmap.json") == 1);
}

TEST_CASE("predict writes a mask of the input size, deterministically") {
  auto& w = walkthrough();
  const std::string img = w.data + "/images/000002.png";
  const std::string m1 = w.root + "/m1.png";
  const std::string m2 = w.root + "/m2.png";
  REQUIRE(run("predict --image " + img + " --checkpoint " + w.ckpt + " --out " + m1) == 0);
  REQUIRE(run("predict --image " + img + " --checkpoint " + w.ckpt + " --out " + m2) == 0);
  REQUIRE(slurp(m1) == slurp(m2));
  REQUIRE(!slurp(m1).empty());
}

TEST_CASE("a corrupt checkpoint exits 1 and leaves no partial output") {
  auto& w = walkthrough();
  const std::string bad = w.root + "/bad.zscp";
  const std::string good = slurp(w.ckpt);
  write_text(bad, good.substr(0, good.size() / 2));
  const std::string out = w.root + "/never_written.png";
  REQUIRE(run("predict --image " + w.data + "/images/000002.png --checkpoint " + bad +
              " --out " + out) == 1);
  REQUIRE(!fs::exists(out));
}

TEST_CASE("a run that diverges to a non-finite loss exits 2") {
  // The loss itself is clamp-bounded, so divergence needs a step size
  // that overflows the parameters to inf before saturation kicks in.
  auto& w = walkthrough();
  REQUIRE(run("train --config " + w.cfg_path + " --override train.lr=1e30 --override " +
              "train.iterations=4 --override train.out_dir=" + w.root + "/diverge") == 2);
}
