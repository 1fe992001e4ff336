#include "tgseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "config_json.hpp"

namespace tgseg {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads typed fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(json j, std::string path) : obj_(std::move(j)), path_(std::move(path)) {
    if (!obj_.is_null() && !obj_.is_object()) fail("", "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "must be true or false");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) fail(key, "must be a number");
        if constexpr (std::is_integral_v<T>) {
          if (!v.is_number_integer()) fail(key, "must be an integer");
          if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_integer() && !v.is_number_unsigned()) fail(key, "must be non-negative");
          }
        }
      } else {
        if (!v.is_string()) fail(key, "must be a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  json sub(const char* key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return json();
    return obj_.at(key);
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!obj_.is_object()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(it.key(), "is not a recognised setting");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? path_ : child(key.c_str());
    throw Error(ErrorCode::configuration, "config key '" + (where.empty() ? std::string("<root>") : where) + "' " + what);
  }

  json obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string normalization_name(SimilarityNormalization n) {
  return n == SimilarityNormalization::raw ? "raw" : "unit_interval";
}

}  // namespace

namespace detail {

ordered_json model_config_to_json(const ModelConfig& c) {
  const BackboneConfig& b = c.backbone;
  ordered_json j;
  j["mode"] = b.mode == BackboneMode::toy ? "toy" : "real";
  j["backbone"] = {{"seed", b.seed},
                   {"input_size", b.input_size},
                   {"patch_size", b.patch_size},
                   {"text_dim", b.text_dim},
                   {"text_hidden_dim", b.text_hidden_dim},
                   {"text_buckets", b.text_buckets},
                   {"visual_dim", b.visual_dim},
                   {"heads", b.heads},
                   {"embed_dim", b.embed_dim},
                   {"embed_stride", b.embed_stride},
                   {"hires_channels", b.hires_channels},
                   {"text_weights", b.text_weights},
                   {"visual_weights", b.visual_weights},
                   {"segmentation_weights", b.segmentation_weights}};
  j["model"] = {{"projection_hidden_dim", c.projection_hidden_dim},
                {"normalization", normalization_name(c.normalization)},
                {"decoder_hidden_dim", c.decoder.hidden_dim},
                {"point_sigma", c.decoder.point_sigma},
                {"init_seed", c.init_seed},
                {"projection_weights", c.projection_weights},
                {"gains",
                 {{"text_projection", c.gains.text_projection},
                  {"projection", c.gains.projection},
                  {"prompt_encoder", c.gains.prompt_encoder},
                  {"decoder", c.gains.decoder}}}};
  return j;
}

void model_config_from_json(const json& j, ModelConfig& c) {
  std::string mode = c.backbone.mode == BackboneMode::toy ? "toy" : "real";
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) throw Error(ErrorCode::configuration, "config key 'mode' must be a string");
    mode = j["mode"].get<std::string>();
  }
  if (mode == "toy") {
    c.backbone.mode = BackboneMode::toy;
  } else if (mode == "real") {
    c.backbone.mode = BackboneMode::real;
  } else {
    throw Error(ErrorCode::configuration, "config key 'mode' must be \"toy\" or \"real\"");
  }
  {
    Section s(j.contains("backbone") ? j["backbone"] : json(), "backbone");
    BackboneConfig& b = c.backbone;
    s.get("seed", b.seed);
    s.get("input_size", b.input_size);
    s.get("patch_size", b.patch_size);
    s.get("text_dim", b.text_dim);
    s.get("text_hidden_dim", b.text_hidden_dim);
    s.get("text_buckets", b.text_buckets);
    s.get("visual_dim", b.visual_dim);
    s.get("heads", b.heads);
    s.get("embed_dim", b.embed_dim);
    s.get("embed_stride", b.embed_stride);
    s.get("hires_channels", b.hires_channels);
    s.get("text_weights", b.text_weights);
    s.get("visual_weights", b.visual_weights);
    s.get("segmentation_weights", b.segmentation_weights);
    s.finish();
  }
  {
    Section s(j.contains("model") ? j["model"] : json(), "model");
    s.get("projection_hidden_dim", c.projection_hidden_dim);
    std::string norm = normalization_name(c.normalization);
    s.get("normalization", norm);
    if (norm == "raw") {
      c.normalization = SimilarityNormalization::raw;
    } else if (norm == "unit_interval") {
      c.normalization = SimilarityNormalization::unit_interval;
    } else {
      throw Error(ErrorCode::configuration, "config key 'model.normalization' must be \"raw\" or \"unit_interval\"");
    }
    s.get("decoder_hidden_dim", c.decoder.hidden_dim);
    s.get("point_sigma", c.decoder.point_sigma);
    s.get("init_seed", c.init_seed);
    s.get("projection_weights", c.projection_weights);
    Section g(s.sub("gains"), "model.gains");
    g.get("text_projection", c.gains.text_projection);
    g.get("projection", c.gains.projection);
    g.get("prompt_encoder", c.gains.prompt_encoder);
    g.get("decoder", c.gains.decoder);
    g.finish();
    s.finish();
  }
}

}  // namespace detail

void RunConfig::validate() const {
  model.validate();
  train.validate();
  parse_dataset_kind(data.kind);
  parse_split(data.train_split);
  if (data.eval_split != "all") parse_split(data.eval_split);
  if (data.synthetic_count < 1) throw Error(ErrorCode::configuration, "data.synthetic_count must be at least 1");
  if (data.synthetic_size < 16) throw Error(ErrorCode::configuration, "data.synthetic_size must be at least 16");
  if (eval.boundary_distance != 0.0 && !(eval.boundary_distance >= 1.0)) {
    throw Error(ErrorCode::configuration, "eval.boundary_distance must be 0 (automatic) or at least 1");
  }
  if (service.port < 0 || service.port > 65535) throw Error(ErrorCode::configuration, "service.port out of range");
  if (service.workers < 1) throw Error(ErrorCode::configuration, "service.workers must be at least 1");
  if (service.queue_capacity < 1) throw Error(ErrorCode::configuration, "service.queue_capacity must be at least 1");
  if (service.max_upload_bytes < 1) throw Error(ErrorCode::configuration, "service.max_upload_bytes must be positive");
  if (service.image_ttl_seconds < 1) throw Error(ErrorCode::configuration, "service.image_ttl_seconds must be positive");
  if (output_dir.empty()) throw Error(ErrorCode::configuration, "output_dir must not be empty");
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  root.sub("mode");
  root.sub("backbone");
  root.sub("model");
  detail::model_config_from_json(j, c.model);

  std::string regime(freeze_regime_name(c.train.regime));
  root.get("regime", regime);
  c.train.regime = parse_freeze_regime(regime);
  {
    Section s(root.sub("train"), "train");
    s.get("learning_rate", c.train.learning_rate);
    s.get("batch_size", c.train.batch_size);
    s.get("epochs", c.train.epochs);
    s.get("max_steps", c.train.max_steps);
    s.get("momentum", c.train.momentum);
    s.get("accumulation_steps", c.train.accumulation_steps);
    s.get("seed", c.train.seed);
    s.finish();
  }
  {
    Section s(root.sub("loss"), "loss");
    s.get("bce_weight", c.train.loss.bce_weight);
    s.get("dice_weight", c.train.loss.dice_weight);
    s.get("dice_smooth", c.train.loss.dice_smooth);
    s.finish();
  }
  {
    Section s(root.sub("data"), "data");
    s.get("kind", c.data.kind);
    s.get("root", c.data.root);
    s.get("manifest", c.data.manifest);
    s.get("exclusions", c.data.exclusions);
    s.get("train_split", c.data.train_split);
    s.get("eval_split", c.data.eval_split);
    s.get("synthetic_count", c.data.synthetic_count);
    s.get("synthetic_size", c.data.synthetic_size);
    s.get("synthetic_seed", c.data.synthetic_seed);
    s.finish();
  }
  {
    Section s(root.sub("eval"), "eval");
    s.get("boundary_distance", c.eval.boundary_distance);
    s.get("use_gt_box", c.eval.use_gt_box);
    s.finish();
  }
  {
    Section s(root.sub("service"), "service");
    s.get("host", c.service.host);
    s.get("port", c.service.port);
    s.get("max_upload_bytes", c.service.max_upload_bytes);
    s.get("image_ttl_seconds", c.service.image_ttl_seconds);
    s.get("workers", c.service.workers);
    s.get("queue_capacity", c.service.queue_capacity);
    s.get("cors_origin", c.service.cors_origin);
    s.finish();
  }
  root.get("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  ordered_json j = detail::model_config_to_json(c.model);
  j["regime"] = freeze_regime_name(c.train.regime);
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},               {"max_steps", c.train.max_steps},
                {"momentum", c.train.momentum},           {"accumulation_steps", c.train.accumulation_steps},
                {"seed", c.train.seed}};
  j["loss"] = {{"bce_weight", c.train.loss.bce_weight},
               {"dice_weight", c.train.loss.dice_weight},
               {"dice_smooth", c.train.loss.dice_smooth}};
  j["data"] = {{"kind", c.data.kind},
               {"root", c.data.root},
               {"manifest", c.data.manifest},
               {"exclusions", c.data.exclusions},
               {"train_split", c.data.train_split},
               {"eval_split", c.data.eval_split},
               {"synthetic_count", c.data.synthetic_count},
               {"synthetic_size", c.data.synthetic_size},
               {"synthetic_seed", c.data.synthetic_seed}};
  j["eval"] = {{"boundary_distance", c.eval.boundary_distance}, {"use_gt_box", c.eval.use_gt_box}};
  j["service"] = {{"host", c.service.host},
                  {"port", c.service.port},
                  {"max_upload_bytes", c.service.max_upload_bytes},
                  {"image_ttl_seconds", c.service.image_ttl_seconds},
                  {"workers", c.service.workers},
                  {"queue_capacity", c.service.queue_capacity},
                  {"cors_origin", c.service.cors_origin}};
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

}  // namespace tgseg
