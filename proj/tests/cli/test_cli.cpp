#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "reference_tables.hpp"
#include "test_util.hpp"
#include "versnet/image_io.hpp"
#include "versnet/metrics.hpp"
#include "versnet/network.hpp"
#include "versnet/synthdata.hpp"

#ifndef VERSNET_CLI_PATH
#error "VERSNET_CLI_PATH must name the versnet executable"
#endif

using namespace versnet;
using test_support::read_bytes;
using test_support::read_text;
using test_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

RunResult run(const std::string& args, const fs::path& cwd) {
  const fs::path out = cwd / ".cli_output";
  const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(VERSNET_CLI_PATH) + " " + args + " > " +
                          quote(out.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_text(out);
  fs::remove(out);
  return r;
}

// Small network flags so training runs in seconds.
const std::string kSmallNet = " --block-channels 4,6,8,8 --fc-channels 8 --dropout 0 ";

class Cli : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  RunResult versnet(const std::string& args) { return run(args, dir.path()); }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(versnet("--help").code, 0);
  EXPECT_EQ(versnet("train --help").code, 0);
  EXPECT_EQ(versnet("").code, 2);
  EXPECT_EQ(versnet("no-such-command").code, 2);
  EXPECT_EQ(versnet("gen-data").code, 2);  // --out missing
  EXPECT_EQ(versnet("gen-data --out d --per-class x").code, 2);
}

TEST_F(Cli, GenDataCountsAndErrors) {
  const RunResult r = versnet("gen-data --out data --per-class 2 --classes 3 --chip-size 32 --seed 4");
  ASSERT_EQ(r.code, 0) << r.output;
  const DatasetManifest m = load_manifest(dir / "data/train");
  EXPECT_EQ(m.entries.size(), 6u);
  EXPECT_EQ(m.chip_size, 32);
  EXPECT_TRUE(fs::exists(dir / "data/train/effective_config.json"));

  const RunResult bad = versnet("gen-data --out data2 --chip-size 8");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("chip-size"), std::string::npos) << bad.output;
  EXPECT_EQ(versnet("gen-data --out data2 --classes 11").code, 2);
}

TEST_F(Cli, GenDataDeterministicAcrossWorkingDirectories) {
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  const std::string args = "gen-data --out ds --per-class 2 --classes 2 --chip-size 32 --seed 8";
  ASSERT_EQ(run(args, dir / "a").code, 0);
  ASSERT_EQ(run(args, dir / "b").code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a/ds")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "a/ds");
    EXPECT_EQ(read_bytes(e.path()), read_bytes(dir / "b/ds" / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 9u);
}

TEST_F(Cli, TrainEvalInferReport) {
  ASSERT_EQ(versnet("gen-data --out d --per-class 1 --chip-size 48 --seed 1").code, 0);
  ASSERT_EQ(versnet("gen-data --out d --split test --per-class 1 --chip-size 48 --seed 2").code, 0);

  const RunResult tr = versnet("train --data d --eval-data d/test --out run --epochs 5 --lr 0.005 --seed 3 --quiet" + kSmallNet);
  ASSERT_EQ(tr.code, 0) << tr.output;
  const double final_loss = std::stod(tr.output.substr(tr.output.find("final loss ") + 11));
  EXPECT_LT(final_loss, std::log(12.0));
  for (const char* f : {"final.vnck", "train_log.csv", "effective_config.json"}) EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;

  const RunResult ev = versnet("eval --data d/test --checkpoint run/final.vnck --report rep");
  ASSERT_EQ(ev.code, 0) << ev.output;
  for (const char* f : {"report.json", "pixel_confusion.csv", "chip_confusion.csv", "iou_histogram.csv", "iou_ecdf.csv",
                        "effective_config.json"}) {
    EXPECT_TRUE(fs::exists(dir / "rep" / f)) << f;
  }
  ASSERT_EQ(versnet("eval --data d/test --checkpoint run/final.vnck --report rep2").code, 0);
  EXPECT_EQ(read_bytes(dir / "rep/report.json"), read_bytes(dir / "rep2/report.json"));

  const RunResult txt = versnet("report --report rep");
  ASSERT_EQ(txt.code, 0);
  EXPECT_NE(txt.output.find("Average of"), std::string::npos) << txt.output;
  const RunResult csv = versnet("report --report rep/report.json --format csv");
  ASSERT_EQ(csv.code, 0);
  EXPECT_EQ(csv.output.rfind("class,precision,recall,f1,iou", 0), 0u) << csv.output;
  EXPECT_EQ(versnet("report --report rep --format xml").code, 2);
  EXPECT_EQ(versnet("report --report nowhere").code, 3);

  SarImage big(250, 330, 0.1f);
  save_image(big, (dir / "big.pgm").string());
  const RunResult inf = versnet("infer --image big.pgm --checkpoint run/final.vnck --out out/big");
  ASSERT_EQ(inf.code, 0) << inf.output;
  const LabelImage l = load_label((dir / "out/big_label.pgm").string());
  EXPECT_EQ(l.height(), 250u);
  EXPECT_EQ(l.width(), 330u);
  const RgbImage atr = load_ppm((dir / "out/big_atr.ppm").string());
  EXPECT_EQ(atr.height, 250u);
  EXPECT_EQ(atr.width, 330u);
}

TEST_F(Cli, ZeroLearningRateKeepsParameters) {
  ASSERT_EQ(versnet("gen-data --out d --per-class 1 --classes 2 --chip-size 32").code, 0);
  ASSERT_EQ(versnet("train --data d --out r0 --epochs 1 --lr 0 --seed 5 --eval-every 1 --quiet" + kSmallNet).code, 0);
  ASSERT_EQ(versnet("train --data d --out r1 --epochs 2 --lr 0 --seed 5 --quiet" + kSmallNet).code, 0);
  const Checkpoint a = load_checkpoint((dir / "r0/final.vnck").string());
  const Checkpoint b = load_checkpoint((dir / "r1/final.vnck").string());
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(versnet("train --data d --out r2 --lr -1 --quiet" + kSmallNet).code, 2);
}

TEST_F(Cli, EvalOracleAndExclusions) {
  ASSERT_EQ(versnet("gen-data --out d --split test --per-class 10 --chip-size 32 --seed 6").code, 0);
  const RunResult ev = versnet("eval --data d --oracle-truth --report oracle");
  ASSERT_EQ(ev.code, 0) << ev.output;
  EXPECT_NE(ev.output.find("100.00%"), std::string::npos) << ev.output;
  EXPECT_NE(ev.output.find("1.000"), std::string::npos) << ev.output;

  const DatasetManifest m = load_manifest(dir / "d/test");
  std::string ids = "# bad chips\n";
  for (int i : {0, 11, 22, 33, 44}) ids += m.entries[static_cast<std::size_t>(i)].id + "\n";
  test_support::write_text(dir / "excl.txt", ids);
  const RunResult ex = versnet("eval --data d/test/manifest.json --oracle-truth --exclusions excl.txt --report ex");
  ASSERT_EQ(ex.code, 0) << ex.output;
  EXPECT_NE(ex.output.find("excluded 5 chips"), std::string::npos) << ex.output;
  const std::string js = read_text(dir / "ex/report.json");
  EXPECT_NE(js.find("\"chip_count\": 95"), std::string::npos);
  EXPECT_NE(js.find("\"excluded_count\": 5"), std::string::npos);
  EXPECT_EQ(versnet("eval --data d --report x").code, 2);  // neither checkpoint nor oracle
}

TEST_F(Cli, ExitCodes) {
  const RunResult missing = versnet("train --data missing_dir --out r" + kSmallNet);
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.output.find("missing_dir"), std::string::npos) << missing.output;
  EXPECT_EQ(versnet("eval --data missing --oracle-truth --report r").code, 3);
  test_support::write_text(dir / "junk.vnck", "not a checkpoint");
  ASSERT_EQ(versnet("gen-data --out d --per-class 1 --classes 1 --chip-size 32").code, 0);
  EXPECT_EQ(versnet("eval --data d --checkpoint junk.vnck --report r").code, 3);
  EXPECT_EQ(versnet("train --data d --out r --lr 1e30 --epochs 2 --quiet" + kSmallNet).code, 4);
  // manifest with a non-target class
  std::string mf = read_text(dir / "d/train/manifest.json");
  const auto pos = mf.find("\"class_id\": 2");
  ASSERT_NE(pos, std::string::npos);
  mf.replace(pos, 13, "\"class_id\": 12");
  test_support::write_text(dir / "d/train/manifest.json", mf);
  EXPECT_EQ(versnet("eval --data d/train --oracle-truth --report r").code, 5);
}

TEST_F(Cli, MosaicRandomAndFromScene) {
  const RunResult r = versnet("mosaic --random-targets 25 --size 512 --classes 10 --seed 3 --out m/scene");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("25 targets"), std::string::npos);
  const LabelImage truth = load_label((dir / "m/scene_truth.pgm").string());
  EXPECT_EQ(truth.height(), 512u);
  std::set<int> classes;
  for (auto v : truth.classes()) {
    if (is_target_class(v)) classes.insert(v);
  }
  EXPECT_EQ(classes.size(), 10u);
  EXPECT_EQ(std::set<int>(truth.classes().begin(), truth.classes().end()).size(), 12u);
  ASSERT_EQ(versnet("mosaic --scene m/scene_scene.json --out m2/again").code, 0);
  EXPECT_EQ(read_bytes(dir / "m/scene_img.pgm"), read_bytes(dir / "m2/again_img.pgm"));
  EXPECT_EQ(versnet("mosaic --random-targets 30 --size 128 --out m3/x").code, 2);
  EXPECT_EQ(versnet("mosaic --out m3/x").code, 2);
  test_support::write_text(dir / "broken.json", "{\"height\":");
  EXPECT_EQ(versnet("mosaic --scene broken.json --out m3/x").code, 3);
}

TEST_F(Cli, ConfigFileOverlay) {
  test_support::write_text(dir / "gen.json", "{\"per-class\": 3, \"classes\": 2, \"chip-size\": 32, \"seed\": 12}");
  ASSERT_EQ(versnet("gen-data --config gen.json --out d --per-class 1").code, 0);
  const DatasetManifest m = load_manifest(dir / "d/train");
  EXPECT_EQ(m.entries.size(), 2u);  // command line wins over the file
  EXPECT_EQ(m.seed, 12u);
  const std::string eff = read_text(dir / "d/train/effective_config.json");
  EXPECT_NE(eff.find("\"seed\""), std::string::npos) << eff;
  test_support::write_text(dir / "bad.json", "{\"colour\": 1}");
  EXPECT_EQ(versnet("gen-data --config bad.json --out d2").code, 2);
  EXPECT_EQ(versnet("gen-data --config absent.json --out d2").code, 3);
}

TEST_F(Cli, EmptySceneAndPublishedReport) {
  test_support::write_text(dir / "empty.json", "{\"height\": 40, \"width\": 48, \"placements\": []}");
  ASSERT_EQ(versnet("mosaic --scene empty.json --out e/scene").code, 0);
  const LabelImage l = load_label((dir / "e/scene_truth.pgm").string());
  EXPECT_EQ(l.count(kBackgroundClass), 40u * 48u);

  EvaluationReport rep;
  rep.naming = ClassNaming::Mstar;
  rep.pixel = build_report(ConfusionMatrix::from_rows(tables::kPixelConfusion, 1));
  test_support::write_text(dir / "published.json", report_to_json(rep));
  const RunResult r = versnet("report --report published.json");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("0.923"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("T72"), std::string::npos);
}
