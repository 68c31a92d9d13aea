#include "ismallnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

#include "ismallnet/archive.hpp"
#include "ismallnet/config.hpp"
#include "ismallnet/data.hpp"
#include "ismallnet/decouple.hpp"
#include "ismallnet/errors.hpp"
#include "ismallnet/metrics.hpp"
#include "ismallnet/model.hpp"
#include "ismallnet/overlay.hpp"
#include "ismallnet/png_io.hpp"
#include "ismallnet/train.hpp"

namespace ismallnet {
namespace fs = std::filesystem;

namespace {

/// Usage / IO problems map to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string checkpoint;
  std::string out;
  std::string data;
  std::string split;
  std::string pred;
  std::string gt;
  std::string images;
  bool save_float = false;
};

struct Context {
  AppConfig cfg;
  json raw = json::object();  ///< config file as written
  Flags flags;
};

Context make_context(const Flags& flags) {
  Context ctx;
  ctx.flags = flags;
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) throw UsageError("cannot open config: " + flags.config);
    try {
      ctx.raw = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + flags.config + ": " + e.what());
    }
    ctx.cfg = ctx.raw.get<AppConfig>();
  }
  if (flags.seed) {
    ctx.cfg.synth.seed = *flags.seed;
    ctx.cfg.train.seed = *flags.seed;
  }
  if (!flags.variant.empty()) {
    ctx.cfg.model.variant = parse_variant(flags.variant);
    ctx.cfg.model.mnim.topology = ctx.cfg.model.topology();
  }
  if (!flags.split.empty()) ctx.cfg.split = flags.split;
  if (!flags.data.empty()) {
    ctx.cfg.data_root = flags.data;
  } else if (ctx.cfg.data_root.empty()) {
    if (const char* env = std::getenv("ISMALLNET_DATA_ROOT")) ctx.cfg.data_root = env;
  }
  return ctx;
}

fs::path require_root(const Context& ctx) {
  if (ctx.cfg.data_root.empty()) {
    throw UsageError("no dataset root: pass --data, set data_root in the config, or set ISMALLNET_DATA_ROOT");
  }
  return ctx.cfg.data_root;
}

fs::path out_dir(const Context& ctx, const char* fallback) {
  fs::path dir = ctx.flags.out.empty() ? fs::path(fallback) : fs::path(ctx.flags.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  return dir;
}

std::string eval_split(const Context& ctx) {
  return ctx.cfg.eval_split.empty() ? ctx.cfg.split : ctx.cfg.eval_split;
}

fs::path decoupled_path(const fs::path& root, const std::string& id) { return root / "decoupled" / (id + ".bin"); }

std::vector<DecoupledLabel> labels_for(const fs::path& root, const std::vector<Sample>& samples) {
  std::vector<DecoupledLabel> labels;
  for (const auto& s : samples) {
    const fs::path cache = decoupled_path(root, s.id);
    if (fs::exists(cache)) {
      try {
        labels.push_back(load_decoupled(cache, s.mask));
        continue;
      } catch (const ShapeError&) {
        // cache made at a different resolution; recompute below
      }
    }
    labels.push_back(decouple(s.mask));
  }
  return labels;
}

/// The checkpoint's model config must agree with an explicit model section / variant flag.
void check_manifest(const Context& ctx, const Checkpoint& ckpt) {
  std::vector<std::string> diffs;
  if (ctx.raw.contains("model")) {
    diffs = diff_fields(json(ckpt.model_config), json(ctx.cfg.model));
  } else if (!ctx.flags.variant.empty() && ctx.cfg.model.variant != ckpt.model_config.variant) {
    diffs.push_back("variant");
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint manifest does not match the config; differing fields:";
    for (const auto& d : diffs) msg += " model." + d;
    throw UsageError(msg);
  }
}

ISmallNet model_from_checkpoint(const Context& ctx, Checkpoint& ckpt) {
  if (ctx.flags.checkpoint.empty()) throw UsageError("--checkpoint is required");
  ckpt = load_checkpoint(ctx.flags.checkpoint);
  check_manifest(ctx, ckpt);
  ISmallNet model = build_variant(ckpt.model_config);
  load_parameters(model, ckpt);
  return model;
}

Gray8 to_gray8(const Plane<float>& map) {
  Gray8 out(map.height(), map.width());
  std::transform(map.values().begin(), map.values().end(), out.values().begin(), [](float p) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f));
  });
  return out;
}

BinaryMask binarize(const Gray8& g) {
  BinaryMask m(g.height(), g.width());
  std::transform(g.values().begin(), g.values().end(), m.values().begin(), [](std::uint8_t v) { return v >= 128 ? 1 : 0; });
  return m;
}

/// ids of `<id>.png` files, or `<id>_fused.png` when any such file exists.
std::map<std::string, fs::path> prediction_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::map<std::string, fs::path> plain, fused;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    const std::string suffix = "_fused";
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
      fused.emplace(stem.substr(0, stem.size() - suffix.size()), entry.path());
    } else if (!stem.ends_with("_interior") && !stem.ends_with("_boundary")) {
      plain.emplace(stem, entry.path());
    }
  }
  return fused.empty() ? plain : fused;
}

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.emplace(entry.path().stem().string(), entry.path());
  }
  return files;
}

void write_report(const fs::path& dir, const MetricsReport& report) {
  std::ofstream(dir / "report.json") << to_json(report).dump(2) << '\n';
  std::ofstream(dir / "report.txt") << to_key_value(report);
}

int cmd_synth(const Context& ctx, std::ostream& out) {
  const fs::path root = ctx.flags.out.empty() ? require_root(ctx) : fs::path(ctx.flags.out);
  std::error_code ec;
  for (const char* sub : {"images", "masks", "splits"}) fs::create_directories(root / sub, ec);
  if (ec || !fs::is_directory(root / "splits")) throw UsageError("cannot create dataset layout in " + root.string());

  const auto samples = synthesize_dataset(ctx.cfg.synth, ctx.cfg.num_samples);
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    save_sample(root, s);
    ids.push_back(s.id);
  }
  write_split(root, ctx.cfg.split, ids);
  out << "wrote " << samples.size() << " samples to " << root.string() << '\n';
  return kExitOk;
}

int cmd_decouple(const Context& ctx, std::ostream& out) {
  const fs::path root = require_root(ctx);
  if (!fs::is_directory(root / "masks")) throw UsageError("missing masks directory: " + (root / "masks").string());
  fs::create_directories(root / "decoupled");
  int written = 0;
  for (const auto& [id, path] : png_files(root / "masks")) {
    save_decoupled(decoupled_path(root, id), decouple(binarize(read_png_gray8(path))));
    ++written;
  }
  out << "decoupled " << written << " masks into " << (root / "decoupled").string() << '\n';
  return kExitOk;
}

int cmd_train(const Context& ctx, std::ostream& out) {
  const fs::path root = require_root(ctx);
  const fs::path dir = out_dir(ctx, "runs");
  const auto train_set = load_dataset(root, ctx.cfg.split, ctx.cfg.load);
  std::vector<Sample> eval_set;
  if (!ctx.cfg.eval_split.empty()) eval_set = load_dataset(root, ctx.cfg.eval_split, ctx.cfg.load);
  const auto labels = labels_for(root, train_set);

  torch::manual_seed(ctx.cfg.train.seed);
  std::optional<Checkpoint> resume;
  if (!ctx.flags.checkpoint.empty()) {
    resume = load_checkpoint(ctx.flags.checkpoint);
    check_manifest(ctx, *resume);
  }
  ISmallNet model = build_variant(resume ? resume->model_config : ctx.cfg.model);

  TrainOptions options;
  options.eval_set = &eval_set;
  options.out_dir = dir;
  options.labels = &labels;
  options.resume = resume ? &*resume : nullptr;
  options.progress = &out;
  std::ofstream(dir / "config.json") << json(ctx.cfg).dump(2) << '\n';
  const TrainResult result = train(model, train_set, ctx.cfg.train, options);
  out << "trained " << result.last.step << " steps; checkpoint " << (dir / "last.ckpt").string() << '\n';
  if (result.best) out << "best mIoU " << result.best->best_miou << " at epoch " << result.best->best_epoch << '\n';
  return kExitOk;
}

int cmd_eval(const Context& ctx, std::ostream& out) {
  const fs::path root = require_root(ctx);
  const fs::path dir = out_dir(ctx, ".");
  const auto samples = load_dataset(root, eval_split(ctx), ctx.cfg.load);
  MetricsReport report;
  if (!ctx.flags.pred.empty()) {
    const auto files = prediction_files(ctx.flags.pred);
    MetricsAccumulator acc(ctx.cfg.train.threshold);
    for (const auto& s : samples) {
      const auto it = files.find(s.id);
      if (it == files.end()) throw UsageError("no prediction for id '" + s.id + "' in " + ctx.flags.pred);
      const Gray8 raw = read_png_gray8(it->second);
      if (!raw.same_shape(s.mask)) throw UsageError("prediction for '" + s.id + "' has the wrong size");
      std::vector<float> p(raw.size());
      std::transform(raw.values().begin(), raw.values().end(), p.begin(), [](std::uint8_t v) { return v / 255.0f; });
      acc.add(p, s.mask);
    }
    report = acc.report();
  } else {
    Checkpoint ckpt;
    ISmallNet model = model_from_checkpoint(ctx, ckpt);
    report = evaluate(model, samples, ctx.cfg.train.threshold);
  }
  write_report(dir, report);
  out << to_key_value(report);
  return kExitOk;
}

int cmd_predict(const Context& ctx, std::ostream& out) {
  const fs::path root = require_root(ctx);
  const fs::path dir = out_dir(ctx, "predictions");
  const auto samples = load_dataset(root, eval_split(ctx), ctx.cfg.load);
  Checkpoint ckpt;
  ISmallNet model = model_from_checkpoint(ctx, ckpt);
  const auto predictions = predict(model, samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& id = samples[i].id;
    const auto& p = predictions[i];
    write_png_gray8(dir / (id + "_fused.png"), to_gray8(p.fused));
    if (p.interior) write_png_gray8(dir / (id + "_interior.png"), to_gray8(*p.interior));
    if (p.boundary) write_png_gray8(dir / (id + "_boundary.png"), to_gray8(*p.boundary));
    if (ctx.flags.save_float) {
      Archive a;
      a.manifest = R"({"kind":"prediction"})";
      auto add = [&](const char* name, const Plane<float>& m) {
        a.arrays.emplace(name, NamedArray{{m.height(), m.width()}, m.vector()});
      };
      add("fused", p.fused);
      if (p.interior) add("interior", *p.interior);
      if (p.boundary) add("boundary", *p.boundary);
      save_archive(dir / (id + ".pred"), a);
    }
  }
  out << "wrote predictions for " << samples.size() << " samples to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_compare(const Context& ctx, std::ostream& out) {
  if (ctx.flags.pred.empty() || ctx.flags.gt.empty()) throw UsageError("compare needs --pred and --gt");
  const auto preds = prediction_files(ctx.flags.pred);
  const auto gts = png_files(ctx.flags.gt);
  std::vector<std::string> missing;
  for (const auto& [id, p] : gts) {
    if (!preds.count(id)) missing.push_back("no prediction for " + id);
  }
  for (const auto& [id, p] : preds) {
    if (!gts.count(id)) missing.push_back("no ground truth for " + id);
  }
  if (!missing.empty()) {
    std::string msg = "prediction and ground-truth ids do not match:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw UsageError(msg);
  }
  const fs::path dir = out_dir(ctx, "overlays");
  json summary = json::object();
  for (const auto& [id, gt_path] : gts) {
    const BinaryMask gt = binarize(read_png_gray8(gt_path));
    const BinaryMask pred = binarize(read_png_gray8(preds.at(id)));
    if (!gt.same_shape(pred)) throw UsageError("size mismatch for id " + id);
    std::optional<GrayImage> background;
    if (!ctx.flags.images.empty() && fs::exists(fs::path(ctx.flags.images) / (id + ".png"))) {
      const Gray8 raw = read_png_gray8(fs::path(ctx.flags.images) / (id + ".png"));
      if (raw.same_shape(gt)) {
        background = GrayImage(raw.height(), raw.width());
        std::transform(raw.values().begin(), raw.values().end(), background->values().begin(),
                       [](std::uint8_t v) { return v / 255.0f; });
      }
    }
    const auto regions = classify_regions(pred, gt);
    write_png_rgb8(dir / (id + "_overlay.png"), render_overlay(background ? &*background : nullptr, pred, regions));
    json counts = {{"detected", 0}, {"false_alarm", 0}, {"missed", 0}};
    for (const auto& r : regions) counts[to_string(r.outcome)] = counts[to_string(r.outcome)].get<int>() + 1;
    summary[id] = counts;
  }
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  out << "wrote " << gts.size() << " overlays to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"iSmallNet infrared small-target detector", "ismallnet"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "structured JSON config file");
    sub->add_option("--seed", seed, "overrides synth.seed and train.seed");
    sub->add_option("--variant", flags.variant, "model variant");
    sub->add_option("--checkpoint", flags.checkpoint, "checkpoint file");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--data", flags.data, "dataset root (default: $ISMALLNET_DATA_ROOT)");
    sub->add_option("--split", flags.split, "split name");
  };
  auto* synth = app.add_subcommand("synth", "write synthetic samples in the SIRST layout");
  auto* dec = app.add_subcommand("decouple", "cache interior/boundary maps for every mask");
  auto* trn = app.add_subcommand("train", "train a model");
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint or a prediction directory");
  auto* prd = app.add_subcommand("predict", "write fused/interior/boundary prediction maps");
  auto* cmp = app.add_subcommand("compare", "render detected/false-alarm/missed overlays");
  for (auto* sub : {synth, dec, trn, evl, prd, cmp}) add_common(sub);
  evl->add_option("--pred", flags.pred, "evaluate prediction PNGs instead of a checkpoint");
  prd->add_flag("--float", flags.save_float, "also write 32-bit float containers");
  cmp->add_option("--pred", flags.pred, "prediction directory")->required();
  cmp->add_option("--gt", flags.gt, "ground-truth mask directory")->required();
  cmp->add_option("--images", flags.images, "optional image directory for the background");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.get_subcommands().front()->count("--seed")) flags.seed = seed;
    const Context ctx = make_context(flags);
    if (synth->parsed()) return cmd_synth(ctx, out);
    if (dec->parsed()) return cmd_decouple(ctx, out);
    if (trn->parsed()) return cmd_train(ctx, out);
    if (evl->parsed()) return cmd_eval(ctx, out);
    if (prd->parsed()) return cmd_predict(ctx, out);
    return cmd_compare(ctx, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LoadError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
}

}  // namespace ismallnet
