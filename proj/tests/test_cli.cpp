#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "vxt/persist.hpp"

namespace {

namespace fs = std::filesystem;

const fs::path kWork = fs::temp_directory_path() / "vxt_cli_tests";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args, const std::string& tag) {
  const std::string cmd = std::string(VXT_CLI_PATH) + " " + args + " > " +
                          (kWork / (tag + ".out")).string() + " 2> " +
                          (kWork / (tag + ".err")).string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

struct Fixture {
  Fixture() {
    fs::create_directories(kWork);
    data = (kWork / "data.vxtc").string();
    net = (kWork / "net.vxtc").string();
    if (!fs::exists(data)) {
      REQUIRE(run_cli("gen-data --seed 7 --out " + data +
                          " --count 12 --classes 6 --frames 16 --noise-std 0.05",
                      "gen") == 0);
      REQUIRE(run_cli("train --data " + data + " --out " + net +
                          " --seed 3 --epochs 1 --lr 0.02 --no-bias",
                      "train") == 0);
    }
  }
  std::string data, net;
};

}  // namespace

TEST_CASE("cli: gen-data and train produce loadable containers") {
  Fixture f;
  const auto dataset = vxt::load_dataset(f.data);
  REQUIRE(dataset.videos.size() == 12);
  REQUIRE(dataset.class_count == 6);
  const auto net = vxt::load_network(f.net);
  REQUIRE(net.class_count == 6);
  const std::string out = slurp(kWork / "train.out");
  REQUIRE(out.find("config: command = train") != std::string::npos);
  REQUIRE(out.find("config: epochs = 1") != std::string::npos);
}

TEST_CASE("cli: explain writes a conserving CSV line and heatmaps") {
  Fixture f;
  const std::string csv = (kWork / "explain.csv").string();
  const std::string maps = (kWork / "maps").string();
  const int rc = run_cli("explain --net " + f.net + " --data " + f.data +
                             " --video-id v0000 --method dtd --class auto --out " + csv +
                             " --heatmap-dir " + maps,
                         "explain");
  REQUIRE(rc == 0);
  const auto table = vxt::read_csv(csv);
  REQUIRE(table.header == std::vector<std::string>{"video_id", "method", "explained_class",
                                                   "explained_value", "score_sum"});
  REQUIRE(table.rows.size() == 1);
  const double explained = table.rows[0][3];
  const double score_sum = table.rows[0][4];
  REQUIRE(std::fabs(score_sum - explained) <= 1e-6 * std::fabs(explained));
  REQUIRE(fs::exists(fs::path(maps) / "frame_000.ppm"));
  REQUIRE(fs::exists(fs::path(maps) / "frame_015.ppm"));
}

TEST_CASE("cli: sweep-step default schedule emits ten rows") {
  Fixture f;
  const std::string csv = (kWork / "sweep.csv").string();
  REQUIRE(run_cli("sweep-step --net " + f.net + " --data " + f.data +
                      " --schedule default --topk 5 --out " + csv,
                  "sweep") == 0);
  const auto table = vxt::read_csv(csv);
  REQUIRE(table.rows.size() == 10);
  const auto schedule = vxt::step_schedule();
  for (std::size_t i = 0; i < 10; ++i) {
    REQUIRE(table.rows[i][0] == schedule[i].value());
    REQUIRE(table.rows[i][6] >= 0.0);
    REQUIRE(table.rows[i][6] <= 1.0);
  }
  const std::string out = slurp(kWork / "sweep.out");
  REQUIRE(out.find("config: command = sweep-step") != std::string::npos);
  REQUIRE(out.find("config: schedule = 1/16,") != std::string::npos);
}

TEST_CASE("cli: repeated runs produce byte-identical outputs") {
  Fixture f;
  const std::string a = (kWork / "run_a.csv").string();
  const std::string b = (kWork / "run_b.csv").string();
  const std::string args = " --net " + f.net + " --data " + f.data +
                           " --schedule 1/2,1,2 --topk 3 --out ";
  REQUIRE(run_cli("sweep-step" + args + a, "det_a") == 0);
  REQUIRE(run_cli("sweep-step" + args + b, "det_b") == 0);
  REQUIRE(slurp(a) == slurp(b));
}

TEST_CASE("cli: analyze writes the mean profile") {
  Fixture f;
  const std::string csv = (kWork / "profile.csv").string();
  REQUIRE(run_cli("analyze --net " + f.net + " --data " + f.data + " --out " + csv,
                  "analyze") == 0);
  const auto table = vxt::read_csv(csv);
  REQUIRE(table.header == std::vector<std::string>{"t", "mean_p"});
  REQUIRE(table.rows.size() == 16);
  double total = 0.0;
  for (const auto& row : table.rows) total += row[1];
  REQUIRE(total == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cli: sweep-offset over explicit offsets") {
  Fixture f;
  const std::string csv = (kWork / "osweep.csv").string();
  REQUIRE(run_cli("sweep-offset --net " + f.net + " --data " + f.data +
                      " --offsets 0 --step 1 --out " + csv,
                  "osweep") == 0);
  const auto table = vxt::read_csv(csv);
  REQUIRE(table.header ==
          std::vector<std::string>{"offset", "L", "A", "B", "C", "D", "excluded"});
  REQUIRE(table.rows.size() == 1);
  REQUIRE(table.rows[0][0] == 0.0);
}

TEST_CASE("cli: eval with k covering all classes scores 1.0") {
  Fixture f;
  const std::string csv = (kWork / "eval.csv").string();
  REQUIRE(run_cli("eval --net " + f.net + " --data " + f.data + " --topk 6 --out " + csv,
                  "eval") == 0);
  const auto table = vxt::read_csv(csv);
  REQUIRE(table.rows.size() == 1);
  REQUIRE(table.rows[0][3] == 1.0);
}

TEST_CASE("cli: exit codes distinguish usage from data errors") {
  Fixture f;
  REQUIRE(run_cli("frobnicate", "err_cmd") == 1);                       // unknown subcommand
  REQUIRE(run_cli("sweep-step --bogus x", "err_flag") == 1);            // unknown flag
  REQUIRE(run_cli("explain --net " + f.net + " --data " + f.data +
                      " --video-id v0000 --step 0.5",
                  "err_step") == 1);                                    // non-rational step
  REQUIRE(run_cli("eval --net " + (kWork / "missing.vxtc").string() + " --data " + f.data,
                  "err_missing") == 2);                                 // missing file
  REQUIRE(run_cli("explain --net " + f.net + " --data " + f.data + " --video-id nope",
                  "err_video") == 2);                                   // unknown video id
  const std::string err = slurp(kWork / "err_step.err");
  REQUIRE(err.find("usage error") != std::string::npos);
}
