#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "versnet/errors.hpp"
#include "versnet/image_io.hpp"
#include "versnet/metrics.hpp"
#include "versnet/network.hpp"
#include "versnet/synthdata.hpp"
#include "versnet/trainer.hpp"

namespace versnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void OptionSet::resolve() {
  if (!config_file_.empty()) {
    std::ifstream in(config_file_);
    if (!in) throw IoError("cannot open config file " + config_file_);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(config_file_ + ": " + e.what(), e.byte);
    }
    if (!file.is_object()) throw UsageError(config_file_ + ": expected a JSON object");
    for (auto& e : entries_) {
      const auto it = file.find(e.key);
      if (it == file.end() || e.opt->count() > 0) continue;
      try {
        e.set(*it);
      } catch (const json::exception& err) {
        throw UsageError(config_file_ + ": bad value for '" + e.key + "': " + err.what());
      }
      e.from_file = true;
    }
    for (const auto& [key, value] : file.items()) {
      bool known = false;
      for (const auto& e : entries_) known = known || e.key == key;
      if (!known) throw UsageError(config_file_ + ": unknown option '" + key + "'");
    }
  }
  for (const auto& e : entries_) {
    if (e.required && e.opt->count() == 0 && !e.from_file) throw UsageError("--" + e.key + " is required");
  }
}

json OptionSet::effective() const {
  json j = json::object();
  for (const auto& e : entries_) j[e.key] = e.get();
  return j;
}

namespace {

constexpr std::uint64_t kInitSalt = 0x494e4954ULL;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_effective_config(const fs::path& dir, const std::string& command, const OptionSet& options) {
  ensure_dir(dir);
  json j{{"command", command}, {"options", options.effective()}, {"generator_version", kGeneratorVersion}};
  write_text(dir / "effective_config.json", j.dump(2) + "\n");
}

fs::path prefix_dir(const std::string& prefix) {
  const fs::path parent = fs::path(prefix).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

// Accepts a manifest file, a directory holding one, or a dataset root with
// a <split>/ subdirectory.
DatasetManifest resolve_manifest(const std::string& path, const std::string& split) {
  const fs::path p(path);
  if (fs::is_regular_file(p) || fs::exists(p / kManifestFile)) return load_manifest(p);
  if (fs::exists(p / split / kManifestFile)) return load_manifest(p / split);
  throw IoError("no dataset manifest at " + path);
}

ChipVoteRule parse_vote(const std::string& s) {
  if (s == "all") return ChipVoteRule::ArgmaxAllClasses;
  if (s == "targets") return ChipVoteRule::ArgmaxTargetClasses;
  throw UsageError("--vote must be 'all' or 'targets', got '" + s + "'");
}

std::string fmt(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ------------------------------------------------------------- gen-data

struct GenDataOpts {
  int classes = kNumTargetClasses;
  int per_class = 200;
  int chip_size = kDefaultChipSize;
  std::uint64_t seed = 0;
  std::string out;
  std::string split = "train";
};

Command gen_data_command(CLI::App& app) {
  auto o = std::make_shared<GenDataOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("gen-data", "Generate a synthetic chip dataset with a manifest");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--classes", o->classes, "Number of target classes (1-10)");
  s.add("--per-class", o->per_class, "Chips per class");
  s.add("--chip-size", o->chip_size, "Chip side length in pixels (>= 32)");
  s.add("--seed", o->seed, "Random seed");
  s.add("--out", o->out, "Dataset root directory", true);
  s.add("--split", o->split, "Split name")->check(CLI::IsMember({"train", "test"}));
  cmd.run = [o, opts = cmd.options] {
    if (o->classes < 1 || o->classes > kNumTargetClasses) throw UsageError("--classes must be in 1..10");
    if (o->per_class < 1) throw UsageError("--per-class must be >= 1");
    if (o->chip_size < kMinChipSize) {
      throw UsageError("--chip-size must be >= " + std::to_string(kMinChipSize) + ", got " + std::to_string(o->chip_size));
    }
    if (o->split != "train" && o->split != "test") throw UsageError("--split must be train or test");
    const DatasetManifest m = gen_dataset(o->per_class, o->chip_size, o->split, o->seed, o->out, o->classes);
    write_effective_config(m.dir, "gen-data", *opts);
    std::map<int, int> counts;
    for (const auto& e : m.entries) ++counts[e.class_id];
    std::cout << "wrote " << m.entries.size() << " chips to " << m.dir.string() << ":";
    for (const auto& [c, n] : counts) std::cout << ' ' << class_name(c, m.naming) << '=' << n;
    std::cout << '\n';
    return kOk;
  };
  return cmd;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string data;
  std::string eval_data;
  std::string out;
  int epochs = 10;
  double lr = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int eval_every = 0;
  double lr_decay = 1.0;
  int lr_decay_every = 0;
  std::vector<int> block_channels{32, 64, 128, 256};
  int fc_channels = 512;
  float dropout = 0.5f;
  std::string vote = "all";
  bool quiet = false;
};

Command train_command(CLI::App& app) {
  auto o = std::make_shared<TrainOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("train", "Train the network on a chip dataset");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--data", o->data, "Training manifest, split directory or dataset root", true);
  s.add("--eval-data", o->eval_data, "Held-out manifest evaluated at checkpoints");
  s.add("--out", o->out, "Checkpoint and log directory", true);
  s.add("--epochs", o->epochs, "Number of epochs");
  s.add("--lr", o->lr, "Learning rate");
  s.add("--momentum", o->momentum, "Momentum coefficient");
  s.add("--seed", o->seed, "Random seed");
  s.add("--eval-every", o->eval_every, "Checkpoint (and evaluate) every N epochs; 0 = end only");
  s.add("--lr-decay", o->lr_decay, "Step decay factor");
  s.add("--lr-decay-every", o->lr_decay_every, "Epochs between decay steps; 0 = constant rate");
  s.add("--block-channels", o->block_channels, "Channels of the four conv blocks")->expected(4)->delimiter(',');
  s.add("--fc-channels", o->fc_channels, "Channels of the 6x6 convolution");
  s.add("--dropout", o->dropout, "Dropout rate after the 6x6 convolution");
  s.add("--vote", o->vote, "Chip vote rule: all | targets");
  s.add_flag("--quiet", o->quiet, "Only print the final summary");
  cmd.run = [o, opts = cmd.options] {
    if (o->block_channels.size() != 4) throw UsageError("--block-channels needs exactly four values");
    TrainConfig tc;
    tc.learning_rate = o->lr;
    tc.momentum = o->momentum;
    tc.epochs = o->epochs;
    tc.seed = o->seed;
    tc.eval_every = o->eval_every;
    tc.checkpoint_dir = o->out;
    tc.lr_decay = o->lr_decay;
    tc.lr_decay_every = o->lr_decay_every;
    tc.vote = parse_vote(o->vote);
    try {
      tc.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    VersNetConfig nc;
    std::copy(o->block_channels.begin(), o->block_channels.end(), nc.block_channels.begin());
    nc.fc_channels = o->fc_channels;
    nc.dropout_rate = o->dropout;
    try {
      nc.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }

    const DatasetManifest train_set = resolve_manifest(o->data, "train");
    if (train_set.entries.empty()) throw InvalidArgument("dataset " + o->data + " has no chips");
    const auto chips = load_chips(train_set, nc.num_classes);
    std::vector<LoadedChip> eval_chips;
    if (!o->eval_data.empty()) eval_chips = load_chips(resolve_manifest(o->eval_data, "test"), nc.num_classes);
    write_effective_config(o->out, "train", *opts);

    Prng init(mix_seed(o->seed, kInitSalt));
    NetworkParams net = build(nc, init);
    const bool quiet = o->quiet;
    const int epochs = o->epochs;
    TrainResult r = train(tc, std::move(net), chips, eval_chips.empty() ? nullptr : &eval_chips,
                          [quiet, epochs](const TrainLogRecord& rec) {
                            if (quiet) return;
                            std::cout << "epoch " << rec.epoch << '/' << epochs << "  loss " << fmt(rec.mean_loss, 4);
                            if (rec.eval_mean_iou) std::cout << "  eval mean IoU " << fmt(*rec.eval_mean_iou, 3);
                            std::cout << "  " << fmt(rec.seconds, 1) << " s\n" << std::flush;
                          });
    EvalOptions eo;
    eo.vote = tc.vote;
    const bool on_eval = !eval_chips.empty();
    const double iou = on_eval && r.log.back().eval_mean_iou ? *r.log.back().eval_mean_iou
                                                             : evaluate(r.params, on_eval ? eval_chips : chips, eo)
                                                                   .pixel.average_targets.iou;
    std::cout << "final loss " << fmt(r.log.back().mean_loss, 4) << ", mean target IoU " << fmt(iou, 3) << " ("
              << (on_eval ? "eval" : "training") << " set); checkpoint "
              << (fs::path(o->out) / kFinalCheckpoint).string() << '\n';
    return kOk;
  };
  return cmd;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
  std::string data;
  std::string checkpoint;
  std::string report;
  std::string exclusions;
  std::string vote = "all";
  std::string naming;
  bool oracle_truth = false;
};

Command eval_command(CLI::App& app) {
  auto o = std::make_shared<EvalOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset and write the report files");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--data", o->data, "Manifest, split directory or dataset root", true);
  s.add("--checkpoint", o->checkpoint, "Checkpoint file (not needed with --oracle-truth)");
  s.add("--report", o->report, "Output directory for the report files", true);
  s.add("--exclusions", o->exclusions, "File listing chip ids or image names to drop");
  s.add("--vote", o->vote, "Chip vote rule: all | targets");
  s.add("--naming", o->naming, "Class names: synthetic | mstar (default: from the manifest)");
  s.add_flag("--oracle-truth", o->oracle_truth, "Score the truth labels as predictions");
  cmd.run = [o, opts = cmd.options] {
    if (o->checkpoint.empty() && !o->oracle_truth) throw UsageError("--checkpoint is required");
    EvalOptions eo;
    eo.vote = parse_vote(o->vote);
    eo.oracle_truth = o->oracle_truth;

    NetworkParams net;
    if (!o->checkpoint.empty()) {
      net = load_checkpoint(o->checkpoint).params;
    } else {
      net.config = VersNetConfig{};
    }
    DatasetManifest m = resolve_manifest(o->data, "test");
    if (!o->exclusions.empty()) {
      const ExclusionResult ex = apply_exclusions(m, read_exclusion_file(o->exclusions));
      std::cout << "excluded " << ex.removed << " chips";
      if (ex.unknown > 0) std::cout << " (" << ex.unknown << " ids matched nothing)";
      std::cout << '\n';
      m = ex.manifest;
    }
    try {
      eo.naming = o->naming.empty() ? m.naming : naming_from_string(o->naming);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    for (const auto& e : m.entries) {
      if (e.class_id >= net.config.num_classes) {
        throw SchemaError("chip " + e.id + " has class " + std::to_string(e.class_id) + " but the checkpoint has " +
                          std::to_string(net.config.num_classes) + " classes");
      }
    }
    const EvaluationReport report = evaluate(net, m, eo);

    const fs::path dir(o->report);
    ensure_dir(dir);
    write_text(dir / "report.json", report_to_json(report));
    write_text(dir / "pixel_confusion.csv", confusion_to_csv(report.pixel.pixel_confusion, report.naming));
    write_text(dir / "chip_confusion.csv", confusion_to_csv(report.chips->confusion, report.naming));
    write_text(dir / "iou_histogram.csv", iou_histogram_csv(*report.iou));
    write_text(dir / "iou_ecdf.csv", iou_ecdf_csv(*report.iou));
    write_effective_config(dir, "eval", *opts);

    const ChipAccuracy& ca = *report.chips;
    std::cout << "chips " << report.chip_count << ", overall accuracy " << fmt(100.0 * ca.overall, 2) << "% ("
              << ca.correct << '/' << ca.total << "), mean target IoU " << fmt(report.pixel.average_targets.iou, 3)
              << '\n';
    return kOk;
  };
  return cmd;
}

// ---------------------------------------------------------------- infer

struct InferOpts {
  std::string image;
  std::string checkpoint;
  std::string out;
};

Command infer_command(CLI::App& app) {
  auto o = std::make_shared<InferOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("infer", "Segment an image of any size");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--image", o->image, "Input PGM", true);
  s.add("--checkpoint", o->checkpoint, "Checkpoint file", true);
  s.add("--out", o->out, "Output prefix", true);
  cmd.run = [o, opts = cmd.options] {
    const SarImage image = load_image(o->image);
    const NetworkParams net = load_checkpoint(o->checkpoint).params;
    const LabelImage labels = predict(net, image);
    ensure_dir(prefix_dir(o->out));
    save_label(labels, o->out + "_label.pgm");
    save_ppm(render_atr(labels), o->out + "_atr.ppm");
    write_effective_config(prefix_dir(o->out), "infer", *opts);
    std::map<int, std::size_t> counts;
    for (const auto c : labels.classes()) ++counts[c];
    std::cout << "segmented " << labels.height() << 'x' << labels.width() << " image;";
    for (const auto& [c, n] : counts) std::cout << ' ' << class_name(c, ClassNaming::Synthetic) << '=' << n;
    std::cout << '\n';
    return kOk;
  };
  return cmd;
}

// --------------------------------------------------------------- mosaic

struct MosaicOpts {
  std::string scene;
  int random_targets = -1;
  int size = 512;
  int classes = kNumTargetClasses;
  int footprint = kDefaultChipSize;
  std::uint64_t seed = 0;
  std::string out;
};

Command mosaic_command(CLI::App& app) {
  auto o = std::make_shared<MosaicOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("mosaic", "Compose a multi-target scene with its truth labels");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--scene", o->scene, "Scene JSON listing placements");
  s.add("--random-targets", o->random_targets, "Generate a random scene with this many targets instead");
  s.add("--size", o->size, "Random scene side length");
  s.add("--classes", o->classes, "Classes used by a random scene");
  s.add("--footprint", o->footprint, "Footprint per target in a random scene");
  s.add("--seed", o->seed, "Seed for a random scene");
  s.add("--out", o->out, "Output prefix", true);
  cmd.run = [o, opts = cmd.options] {
    SceneSpec scene;
    if (!o->scene.empty()) {
      std::ifstream in(o->scene);
      if (!in) throw IoError("cannot open scene " + o->scene);
      std::stringstream buf;
      buf << in.rdbuf();
      try {
        scene = scene_from_json(buf.str());
      } catch (const ParseError& e) {
        throw e.in_context(o->scene);
      }
    } else if (o->random_targets >= 0) {
      try {
        scene = random_scene(o->size, o->size, o->random_targets, o->classes, o->seed, o->footprint);
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
    } else {
      throw UsageError("either --scene or --random-targets is required");
    }
    const Chip mosaic = compose_mosaic(scene);
    ensure_dir(prefix_dir(o->out));
    save_image(mosaic.image, o->out + "_img.pgm");
    save_label(mosaic.label, o->out + "_truth.pgm");
    save_ppm(render_atr(mosaic.label), o->out + "_truth_atr.ppm");
    write_text(o->out + "_scene.json", scene_to_json(scene));
    write_effective_config(prefix_dir(o->out), "mosaic", *opts);
    std::set<int> present(mosaic.label.classes().begin(), mosaic.label.classes().end());
    std::cout << scene.height << 'x' << scene.width << " scene, " << scene.placements.size()
              << " targets; truth classes:";
    for (const int c : present) std::cout << ' ' << c;
    std::cout << '\n';
    return kOk;
  };
  return cmd;
}

// --------------------------------------------------------------- report

struct ReportOpts {
  std::string report;
  std::string format = "text";
  std::string out;
};

Command report_command(CLI::App& app) {
  auto o = std::make_shared<ReportOpts>();
  Command cmd;
  cmd.app = app.add_subcommand("report", "Render a report JSON as a per-class table");
  cmd.options = std::make_shared<OptionSet>(cmd.app);
  auto& s = *cmd.options;
  s.add("--report", o->report, "report.json or the directory holding it", true);
  s.add("--format", o->format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
  s.add("--out", o->out, "Write to this file instead of stdout");
  cmd.run = [o, opts = cmd.options] {
    fs::path path(o->report);
    if (fs::is_directory(path)) path /= "report.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    EvaluationReport report;
    try {
      report = report_from_json(buf.str());
    } catch (const ParseError& e) {
      throw e.in_context(path.string());
    }
    if (o->format != "text" && o->format != "csv") throw UsageError("--format must be text or csv");
    const std::string text = o->format == "csv" ? render_report_csv(report) : render_report_text(report);
    if (o->out.empty()) {
      std::cout << text;
    } else {
      ensure_dir(prefix_dir(o->out));
      write_text(o->out, text);
      write_effective_config(prefix_dir(o->out), "report", *opts);
    }
    return kOk;
  };
  return cmd;
}

}  // namespace

std::vector<Command> register_commands(CLI::App& app) {
  std::vector<Command> cmds;
  cmds.push_back(gen_data_command(app));
  cmds.push_back(train_command(app));
  cmds.push_back(eval_command(app));
  cmds.push_back(infer_command(app));
  cmds.push_back(mosaic_command(app));
  cmds.push_back(report_command(app));
  return cmds;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const OutOfRange*>(&e)) {
    return kUsage;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return kIo;
  }
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const InvalidLabel*>(&e) ||
      dynamic_cast<const ShapeError*>(&e)) {
    return kSchema;
  }
  return kFailure;
}

}  // namespace versnet::cli
