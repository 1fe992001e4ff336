#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "tgseg/model.hpp"
#include "tgseg/training.hpp"

namespace tgseg {

struct DataConfig {
  std::string kind = "synthetic";
  std::string root;
  std::string manifest;    // used instead of scanning root when set
  std::string exclusions;  // overrides the shipped list
  std::string train_split = "train";
  std::string eval_split = "all";  // train, val or all
  int synthetic_count = 10;
  int synthetic_size = 64;
  std::uint64_t synthetic_seed = 0;
};

struct EvalConfig {
  double boundary_distance = 0.0;  // 0: max(1, round(0.02 * diagonal)) per image
  bool use_gt_box = true;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload_bytes = 8u << 20;
  int image_ttl_seconds = 3600;
  int workers = 1;
  int queue_capacity = 16;
  std::string cors_origin = "*";
};

/// Everything a run needs; a JSON document with every field optional.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  ServiceConfig service;
  std::string output_dir = "runs/default";

  void validate() const;
};

/// Parses and validates. Unknown keys and wrong types raise configuration
/// errors naming the offending key.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Effective configuration with every default filled in.
std::string dump_run_config(const RunConfig& config);

}  // namespace tgseg
