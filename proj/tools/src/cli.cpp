#include "tgseg_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <csignal>
#include <pthread.h>
#include <thread>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tgseg/config.hpp"
#include "tgseg/datasets.hpp"
#include "tgseg/image_io.hpp"
#include "tgseg/metrics.hpp"
#include "tgseg/numerics.hpp"
#include "tgseg/service.hpp"
#include "tgseg/training.hpp"

namespace fs = std::filesystem;

namespace tgseg::cli {

namespace {

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

DatasetManifest resolve_manifest(const RunConfig& cfg, const std::string& manifest_flag) {
  const std::string manifest = manifest_flag.empty() ? cfg.data.manifest : manifest_flag;
  if (!manifest.empty()) return read_manifest(manifest);
  if (cfg.data.root.empty()) throw Error(ErrorCode::configuration, "data.root is not set and no manifest was given");
  if (!fs::is_directory(cfg.data.root)) throw Error(ErrorCode::not_found, "dataset root not found: " + cfg.data.root);
  std::optional<fs::path> exclusions;
  if (!cfg.data.exclusions.empty()) exclusions = cfg.data.exclusions;
  return build_manifest(cfg.data.root, parse_dataset_kind(cfg.data.kind), exclusions);
}

Box parse_box(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_box, "box must be x0,y0,x1,y1 (got '" + text + "')");
    }
  }
  if (v.size() != 4) throw Error(ErrorCode::invalid_box, "box must be x0,y0,x1,y1 (got '" + text + "')");
  return Box{v[0], v[1], v[2], v[3]};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

int cmd_train(const std::string& config_path, const std::string& manifest_flag, const std::string& out_flag,
              int steps, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  if (!out_flag.empty()) cfg.output_dir = out_flag;
  if (steps > 0) cfg.train.max_steps = steps;
  const DatasetManifest manifest = resolve_manifest(cfg, manifest_flag);
  Model model = Model::create(cfg.model);
  const auto samples = prepare_samples(model, manifest, parse_split(cfg.data.train_split));
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", dump_run_config(cfg));
  TrainOutputs outputs;
  outputs.directory = dir;
  outputs.on_epoch = [&](int epoch, double loss) {
    out << "epoch " << epoch << " mean_loss " << std::setprecision(6) << loss << '\n';
  };
  const TrainResult r = train(cfg.train, samples, model, outputs);
  out << "steps " << r.steps.size() << " samples " << samples.size() << '\n';
  out << "checkpoint " << (dir / "checkpoint.tgs").generic_string() << '\n';
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, const std::string& manifest_flag,
             const std::string& out_flag, std::ostream& out) {
  RunConfig cfg = config_or_default(config_path);
  const DatasetManifest manifest = resolve_manifest(cfg, manifest_flag);
  const Model model = load_checkpoint(checkpoint);
  std::optional<Split> split;
  if (cfg.data.eval_split != "all") split = parse_split(cfg.data.eval_split);
  std::vector<EvalRecord> records;
  for (const SampleRecord& r : manifest.samples) {
    if (split && r.split != *split) continue;
    const LoadedSample s = load_sample(manifest, r);
    GeometricPrompt geometry;
    double box[4];
    if (cfg.eval.use_gt_box && mask_bounding_box(s.mask, box)) geometry.box = Box{box[0], box[1], box[2], box[3]};
    const auto t0 = std::chrono::steady_clock::now();
    const Prediction p = model.predict(s.image, s.prompt, geometry);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double d = cfg.eval.boundary_distance > 0 ? cfg.eval.boundary_distance
                                                    : default_boundary_distance(s.mask.height(), s.mask.width());
    records.push_back({r.id, iou(p.mask, s.mask), boundary_iou(p.mask, s.mask, d), s.prompt, ms});
  }
  const Aggregate agg = aggregate(records);
  const fs::path dir = out_flag.empty() ? fs::path(cfg.output_dir) / "eval" : fs::path(out_flag);
  std::string lines;
  for (const EvalRecord& r : records) lines += to_jsonl(r) + "\n";
  write_text(dir / "records.jsonl", lines);
  const std::string method = "tgseg " + std::string(freeze_regime_name(model.regime()));
  const std::string table =
      format_report("Results on the " + std::string(dataset_kind_name(manifest.kind)) + " dataset", {{method, agg}});
  write_text(dir / "report.txt", table);
  out << table;
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path, const std::string& prompt,
              const std::string& box_text, const std::string& out_dir, std::ostream& out) {
  const Model model = load_checkpoint(checkpoint);
  const FeatureMap image = io::read_image(image_path);
  GeometricPrompt geometry;
  if (!box_text.empty()) geometry.box = parse_box(box_text);
  const Prediction p = model.predict(image, prompt, geometry);
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  io::write_file(dir / "mask.png", io::encode_mask_png(p.mask));
  const Grid2D shown = numerics::bilinear_resample(p.similarity.grid, image.height(), image.width());
  const bool raw = p.similarity.normalization == SimilarityNormalization::raw;
  io::write_file(dir / "similarity.png", io::encode_grid_png(shown, raw ? -1.0 : 0.0, 1.0));
  out << "mask " << (dir / "mask.png").generic_string() << '\n';
  out << "similarity " << (dir / "similarity.png").generic_string() << '\n';
  out << "best_head_score " << std::setprecision(6) << p.heads.best << " head " << p.heads.best_index << '\n';
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& checkpoint, const std::string& host_flag,
              int port_flag, std::ostream& out) {
  RunConfig cfg = config_or_default(config_path);
  // Block termination signals in every thread; a watcher thread receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::shared_ptr<const Model> model =
      checkpoint.empty() ? std::make_shared<const Model>(Model::create(cfg.model))
                         : std::make_shared<const Model>(load_checkpoint(checkpoint));
  SegmentationService service(model, cfg.service);
  const std::string host = host_flag.empty() ? cfg.service.host : host_flag;
  const int port = port_flag >= 0 ? port_flag : cfg.service.port;
  const int bound = service.start(host, port);
  out << "listening on " << host << ':' << bound << " model " << service.fingerprint() << std::endl;
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.wait();
  watcher.join();
  return 0;
}

int cmd_params(const std::string& config_path, bool full_scale, const std::string& regime_flag, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  const FreezeRegime regime = regime_flag.empty() ? cfg.train.regime : parse_freeze_regime(regime_flag);
  ParamReport r;
  if (full_scale) {
    r = report_of(full_scale_blocks(regime));
    const ParamReport base = report_of(sam_hq_blocks());
    out << "SAM-HQ trainable " << base.trainable << " total " << base.total << '\n';
  } else {
    const Model model = Model::create(cfg.model);
    r = count_params(model, regime);
  }
  out << freeze_regime_name(regime) << " trainable " << r.trainable << " total " << r.total << " fraction "
      << std::setprecision(4) << 100.0 * r.fraction() << "%\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-guided segmentation: training, evaluation, inference and serving", "tgseg"};
  app.require_subcommand(1);

  std::string config, checkpoint, manifest, image, prompt, box, out_path, host, root, kind = "synthetic",
                                                                              exclusions, regime;
  int steps = 0, port = -1, count = 10, size = 64;
  std::uint64_t seed = 0;
  bool full_scale = false;

  auto* train = app.add_subcommand("train", "Train on a dataset and write checkpoints");
  train->add_option("--config", config, "Run configuration (JSON)")->required();
  train->add_option("--manifest", manifest, "Manifest to train on instead of scanning data.root");
  train->add_option("--out", out_path, "Output directory (overrides output_dir)");
  train->add_option("--steps", steps, "Optimizer steps (overrides train.max_steps)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and print a results table");
  eval->add_option("--config", config, "Run configuration (JSON)");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Manifest to evaluate");
  eval->add_option("--out", out_path, "Directory for records.jsonl and report.txt");

  auto* infer = app.add_subcommand("infer", "Segment one image from a text prompt");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--image", image, "Input PNG or JPEG")->required();
  infer->add_option("--prompt", prompt, "Category prompt")->required();
  infer->add_option("--box", box, "Box prompt x0,y0,x1,y1 in image pixels");
  infer->add_option("--out", out_path, "Directory for mask.png and similarity.png");

  auto* serve = app.add_subcommand("serve", "Run the HTTP inference service");
  serve->add_option("--config", config, "Run configuration (JSON)");
  serve->add_option("--checkpoint", checkpoint, "Checkpoint file (default: freshly initialised model)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  auto* dump = app.add_subcommand("dump-config", "Print the effective configuration with defaults");
  dump->add_option("--config", config, "Run configuration (JSON)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic thin-structure dataset");
  synth->add_option("--out", out_path, "Dataset root")->required();
  synth->add_option("--count", count, "Number of samples");
  synth->add_option("--size", size, "Image side in pixels");
  synth->add_option("--seed", seed, "Generator seed");

  auto* man = app.add_subcommand("manifest", "Scan a dataset root into a JSON-lines manifest");
  man->add_option("--root", root, "Dataset root")->required();
  man->add_option("--kind", kind, "synthetic, ThinObject5K, DIS5K or BIG");
  man->add_option("--exclusions", exclusions, "Exclusion list (default: shipped list for DIS5K)");
  man->add_option("--out", out_path, "Manifest path (default: <root>/manifest.jsonl)");

  auto* params = app.add_subcommand("params", "Report trainable and total parameter counts");
  params->add_option("--config", config, "Run configuration (JSON)");
  params->add_option("--regime", regime, "clip_frozen or clip_partial");
  params->add_flag("--full-scale", full_scale, "Count the full-size architecture instead of the toy model");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) return cmd_train(config, manifest, out_path, steps, out);
    if (*eval) return cmd_eval(config, checkpoint, manifest, out_path, out);
    if (*infer) return cmd_infer(checkpoint, image, prompt, box, out_path, out);
    if (*serve) return cmd_serve(config, checkpoint, host, port, out);
    if (*dump) {
      out << dump_run_config(config_or_default(config));
      return 0;
    }
    if (*synth) {
      const DatasetManifest m = generate_synthetic_dataset(out_path, seed, count, size);
      out << "wrote " << m.samples.size() << " samples and " << (fs::path(out_path) / "manifest.jsonl").generic_string()
          << '\n';
      return 0;
    }
    if (*man) {
      std::optional<fs::path> list;
      if (!exclusions.empty()) list = exclusions;
      const DatasetManifest m = build_manifest(root, parse_dataset_kind(kind), list);
      const fs::path path = out_path.empty() ? fs::path(root) / "manifest.jsonl" : fs::path(out_path);
      write_manifest(m, path);
      for (const Exclusion& e : m.excluded) err << "excluded " << e.path << ": " << e.reason << '\n';
      for (const std::string& note : m.notes) out << note << '\n';
      out << "manifest " << path.generic_string() << '\n';
      return 0;
    }
    if (*params) return cmd_params(config, full_scale, regime, out);
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace tgseg::cli
