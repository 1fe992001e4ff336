#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgseg/config.hpp"
#include "tgseg/model.hpp"

namespace tgseg {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;
};

/// HTTP inference service.
///
///   POST /v1/images   raw PNG/JPEG body -> {"image_id", "width", "height"}
///                     413 when larger than max_upload_bytes, 415 for other types.
///                     Ids are SHA-256 of the uploaded bytes; entries expire
///                     image_ttl_seconds after the last upload or use.
///   POST /v1/segment  {"image_id" | "image": base64, "prompt", "box"?: [x0, y0, x1, y1],
///                      "points"?: [[x, y, 1 | 0], ...],
///                      "options"?: {"threshold": real, "normalization": "unit_interval" | "raw"}}
///                     -> {"image_id", "prompt", "mask": {"size": [h, w], "counts": rle},
///                         "similarity_map": {"size": [h, w], "normalization", "png_base64"},
///                         "best_head_score", "best_head_index", "head_scores", "model_fingerprint"}
///                     404 unknown image, 422 empty prompt or invalid box, 503 queue full.
///                     Latency is returned in the X-Latency-Ms header so bodies
///                     stay byte-identical across repeated requests.
///   GET  /v1/health   {"status": "ok", "model_fingerprint", "mode", "regime"}
///
/// Inference runs on a bounded queue drained by `workers` threads; the model
/// is immutable while serving and replaced atomically by swap_model.
class SegmentationService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  SegmentationService(std::shared_ptr<const Model> model, ServiceConfig config, Clock clock = {});
  ~SegmentationService();
  SegmentationService(const SegmentationService&) = delete;
  SegmentationService& operator=(const SegmentationService&) = delete;

  HttpResponse upload_image(const std::string& body);
  HttpResponse segment(const std::string& json_body);
  HttpResponse health() const;

  void swap_model(std::shared_ptr<const Model> model);
  std::string fingerprint() const;
  std::size_t stored_images() const;

  /// Binds and serves in a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tgseg
