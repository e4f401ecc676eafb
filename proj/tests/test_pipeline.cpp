#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "fixture.hpp"
#include "wmg/pipeline.hpp"

using namespace wmg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Every regular file below `root` except the manifest (which carries timestamps) and timing sidecars.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "manifest.json" || name == "timing.json") continue;
    out[fs::relative(e.path(), root).string()] = hash_string(slurp(e.path()));
  }
  return out;
}

struct smoke_run {
  fs::path dir;
  pipeline_result first;
  pipeline_result second;
  double seconds = 0.0;
};

const smoke_run& smoke() {
  static const smoke_run r = [] {
    smoke_run s;
    s.dir = wmg::testing::temp_dir("pipeline_a");
    const auto t0 = std::chrono::steady_clock::now();
    s.first = run_pipeline(smoke_config(), s.dir);
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.second = run_pipeline(smoke_config(), s.dir);
    return s;
  }();
  return r;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WMG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(pipeline_config, unknown_arch_is_rejected_before_any_work) {
  const auto dir = wmg::testing::temp_dir("pipeline_bad_arch");
  EXPECT_THROW(pipeline_config::from_json(parse_config_text(R"({"train": {"archs": ["gru", "transformer"]}})")),
               config_error);
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(pipeline_config, unknown_keys_are_rejected) {
  EXPECT_THROW(pipeline_config::from_json(parse_config_text(R"({"seeed": 3})")), config_error);
  EXPECT_THROW(pipeline_config::from_json(parse_config_text(R"({"train": {"hiden": 3}})")), config_error);
  EXPECT_THROW(pipeline_config::from_json(parse_config_text(R"({"analyses": ["ortho", "vibes"]})")), config_error);
  EXPECT_THROW(parse_config_text("{"), config_error);
}

TEST(pipeline_config, comments_and_defaults) {
  const auto c = pipeline_config::from_json(parse_config_text(R"({
    // one seed for everything
    "seed": 7, /* block comment */
    "train": {"diets": ["stsf:2:identity", "stmf:1", "mtmf"]}
  })"));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train.seed, 7u);
  ASSERT_EQ(c.diets.size(), 3u);
  EXPECT_EQ(c.diets[0].spec(), "stsf:2:identity");
  EXPECT_EQ(c.diets[0].make(3).tasks.size(), 1u);
  EXPECT_EQ(c.diets[1].make(3).tasks.size(), 3u);
  EXPECT_EQ(c.diets[2].make(3).tasks.size(), 9u);
  EXPECT_EQ(c.hidden, 128);
  const auto again = pipeline_config::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
  EXPECT_EQ(again.manifest_hash(), c.manifest_hash());
}

TEST(pipeline_config, invalid_diets) {
  EXPECT_THROW(parse_diet_entry("stmf"), config_error);
  EXPECT_THROW(parse_diet_entry("stsf:1"), config_error);
  EXPECT_THROW(parse_diet_entry("mtmf:2"), config_error);
  EXPECT_THROW(parse_diet_entry("stsf:x:location"), config_error);
  EXPECT_THROW(pipeline_config::from_json(parse_config_text(R"({"train": {"diets": ["stmf:3"], "max_n": 2}})")),
               config_error);
}

TEST(pipeline, invalid_config_does_no_work) {
  auto cfg = smoke_config();
  cfg.archs.clear();
  const auto dir = wmg::testing::temp_dir("pipeline_invalid");
  EXPECT_THROW(run_pipeline(cfg, dir / "out"), config_error);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(pipeline, smoke_config_completes_within_budget) {
  const auto& s = smoke();
  EXPECT_LT(s.seconds, 300.0);
  const std::vector<std::string> order{"stimuli", "frontend", "train/mtmf_gru", "record/mtmf_gru",
                                       "decode/mtmf_gru", "geometry/mtmf_gru", "report"};
  ASSERT_EQ(s.first.stages.size(), order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    EXPECT_EQ(s.first.stages[k].name, order[k]);
    EXPECT_FALSE(s.first.stages[k].skipped) << order[k];
  }
  EXPECT_TRUE(fs::exists(s.dir / "report" / "summary.json"));
  EXPECT_TRUE(fs::exists(s.dir / "manifest.json"));
  EXPECT_NE(s.first.bundle.summary.at("status"), "no data");
  EXPECT_FALSE(s.first.bundle.tables.empty());
}

TEST(pipeline, rerun_skips_every_stage_with_identical_bundle) {
  const auto& s = smoke();
  ASSERT_EQ(s.second.stages.size(), s.first.stages.size());
  for (const auto& st : s.second.stages) EXPECT_TRUE(st.skipped) << st.name;
  EXPECT_EQ(s.second.bundle.summary, s.first.bundle.summary);
  ASSERT_EQ(s.second.bundle.tables.size(), s.first.bundle.tables.size());
  for (std::size_t k = 0; k < s.first.bundle.tables.size(); ++k)
    EXPECT_EQ(s.second.bundle.tables[k].csv(), s.first.bundle.tables[k].csv());
  ASSERT_EQ(s.second.bundle.plots.size(), s.first.bundle.plots.size());
  for (std::size_t k = 0; k < s.first.bundle.plots.size(); ++k)
    EXPECT_EQ(s.second.bundle.plots[k].svg, s.first.bundle.plots[k].svg);
}

TEST(pipeline, artifacts_reference_the_manifest_hash) {
  const auto& s = smoke();
  const auto h = s.first.manifest_hash;
  EXPECT_EQ(h, smoke_config().manifest_hash());
  EXPECT_EQ(load_bank((s.dir / "record/mtmf_gru/bank.bin").string()).manifest_hash, h);
  EXPECT_EQ(load_checkpoint((s.dir / "train/mtmf_gru/model.ckpt").string()).meta.manifest_hash, h);
  EXPECT_EQ(nlohmann::json::parse(slurp(s.dir / "report/summary.json")).at("manifest_hash"), h);
  const auto manifest = nlohmann::json::parse(slurp(s.dir / "manifest.json"));
  EXPECT_EQ(manifest.at("manifest_hash"), h);
  EXPECT_EQ(manifest.at("config"), smoke_config().to_json());
  EXPECT_TRUE(manifest.at("timestamps").contains("started"));
}

TEST(pipeline, identical_manifest_gives_bit_identical_artifacts) {
  const auto& s = smoke();
  const auto other = wmg::testing::temp_dir("pipeline_b");
  run_pipeline(smoke_config(), other);
  const auto a = tree(s.dir);
  const auto b = tree(other);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.contains("record/mtmf_gru/bank.bin"));
  EXPECT_TRUE(a.contains("decode/mtmf_gru/decoders.bin"));
  EXPECT_TRUE(a.contains("report/summary.json"));
}

TEST(pipeline, corrupted_artifact_is_recomputed) {
  const auto& s = smoke();
  const auto dir = wmg::testing::temp_dir("pipeline_c");
  fs::copy(s.dir, dir, fs::copy_options::recursive);
  const auto bank = dir / "record/mtmf_gru/bank.bin";
  const auto before = slurp(bank);
  {
    std::fstream f(bank, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  const auto r = run_pipeline(smoke_config(), dir);
  for (const auto& st : r.stages) EXPECT_EQ(st.skipped, st.name != "record/mtmf_gru") << st.name;
  EXPECT_EQ(slurp(bank), before);
}

TEST(cli, exit_codes) {
  const auto dir = wmg::testing::temp_dir("cli");
  std::ofstream(dir / "bad.json") << R"({"train": {"archs": ["rnn-x"]}})";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "run").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "run"));
  EXPECT_EQ(run_cli("decode --out " + (dir / "d").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);

  std::ofstream(dir / "bank.bin") << "not a bank";
  EXPECT_EQ(run_cli("decode --bank " + (dir / "bank.bin").string() + " --out " + (dir / "d").string()), 4);

  std::ofstream(dir / "weak.json") << R"({"frontend": {"epochs_max": 1, "check_every": 1, "channels": [1, 1, 1]}})";
  EXPECT_EQ(run_cli("pretrain-frontend --config " + (dir / "weak.json").string() + " --out " + (dir / "f.bin").string()), 3);

  EXPECT_EQ(run_cli("gen-stimuli --split novel_angle --n 8 --seed 2 --out " + (dir / "stim").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "stim" / "images.bin"));
  EXPECT_EQ(read_image_blob((dir / "stim" / "images.bin").string()).size(), 8u);
}

TEST(cli, stage_commands_on_a_pipeline_run) {
  const auto& s = smoke();
  const auto dir = wmg::testing::temp_dir("cli_stages");
  const auto bank = (s.dir / "record/mtmf_gru/bank.bin").string();
  EXPECT_EQ(run_cli("decode --bank " + bank + " --feature category --space perceptual:0 --out " + (dir / "d").string()), 0);
  EXPECT_EQ(load_decoder_sets((dir / "d" / "decoders.bin").string()).size(), 1u);
  EXPECT_EQ(run_cli("geometry ortho --config /dev/null --bank " + bank + " --out " + (dir / "o").string()), 2);
  EXPECT_EQ(run_cli("report --run " + s.dir.string() + " --out " + (dir / "r").string()), 0);
  EXPECT_EQ(slurp(dir / "r" / "summary.json"), slurp(s.dir / "report" / "summary.json"));
}
