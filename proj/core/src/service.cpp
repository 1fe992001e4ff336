#include "tgseg/service.hpp"

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "tgseg/encoding.hpp"
#include "tgseg/hash.hpp"
#include "tgseg/image_io.hpp"
#include "tgseg/numerics.hpp"
#include "tgseg/rle.hpp"
#include "tgseg/training.hpp"

namespace tgseg {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using TimePoint = std::chrono::steady_clock::time_point;

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
  ordered_json j;
  j["error"] = {{"code", code}, {"message", message}};
  return {status, j.dump(), "application/json", {}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::invalid_prompt:
    case ErrorCode::empty_prompt:
    case ErrorCode::invalid_box:
    case ErrorCode::invalid_input:
    case ErrorCode::invalid_size:
    case ErrorCode::degenerate_vector: return 422;
    default: return 500;
  }
}

// Fixed-capacity FIFO drained by a fixed set of worker threads.
class WorkQueue {
 public:
  WorkQueue(int workers, int capacity) : capacity_(static_cast<std::size_t>(capacity)) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }
  ~WorkQueue() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  bool try_push(std::function<void()> task) {
    {
      std::lock_guard lock(mu_);
      if (tasks_.size() >= capacity_) return false;
      tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
    return true;
  }

 private:
  void run() {
    while (true) {
      std::function<void()> task;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !tasks_.empty(); });
        if (tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      task();
    }
  }

  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

struct StoredImage {
  std::shared_ptr<const FeatureMap> image;
  TimePoint expires;
  std::string encoded_for;  // fingerprint the cached encoding belongs to
  std::shared_ptr<const EncodedImage> encoded;
};

}  // namespace

struct SegmentationService::Impl {
  ServiceConfig config;
  Clock clock;
  mutable std::mutex model_mu;
  std::shared_ptr<const Model> model;
  std::string model_fingerprint;
  mutable std::mutex store_mu;
  std::map<std::string, StoredImage> images;
  WorkQueue queue;
  std::mutex server_mu;
  std::condition_variable stopped_cv;
  bool running = false;
  std::unique_ptr<httplib::Server> server;
  std::thread server_thread;

  Impl(ServiceConfig c, Clock clk)
      : config(std::move(c)), clock(std::move(clk)), queue(config.workers, config.queue_capacity) {}

  TimePoint now() const { return clock ? clock() : std::chrono::steady_clock::now(); }

  void purge_expired_locked(TimePoint t) {
    for (auto it = images.begin(); it != images.end();) {
      it = it->second.expires <= t ? images.erase(it) : std::next(it);
    }
  }

  std::pair<std::shared_ptr<const Model>, std::string> snapshot() const {
    std::lock_guard lock(model_mu);
    return {model, model_fingerprint};
  }
};

SegmentationService::SegmentationService(std::shared_ptr<const Model> model, ServiceConfig config, Clock clock)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(clock))) {
  swap_model(std::move(model));
}

SegmentationService::~SegmentationService() { stop(); }

void SegmentationService::swap_model(std::shared_ptr<const Model> model) {
  if (!model) throw Error(ErrorCode::configuration, "service needs a model");
  std::string fp = model_fingerprint(*model);
  std::lock_guard lock(impl_->model_mu);
  impl_->model = std::move(model);
  impl_->model_fingerprint = std::move(fp);
}

std::string SegmentationService::fingerprint() const { return impl_->snapshot().second; }

std::size_t SegmentationService::stored_images() const {
  std::lock_guard lock(impl_->store_mu);
  return impl_->images.size();
}

HttpResponse SegmentationService::health() const {
  auto [model, fp] = impl_->snapshot();
  ordered_json j;
  j["status"] = "ok";
  j["model_fingerprint"] = fp;
  j["mode"] = model->config().backbone.mode == BackboneMode::toy ? "toy" : "real";
  j["regime"] = freeze_regime_name(model->regime());
  return {200, j.dump(), "application/json", {}};
}

HttpResponse SegmentationService::upload_image(const std::string& body) {
  if (body.size() > impl_->config.max_upload_bytes) {
    return error_response(413, "payload-too-large",
                          "image exceeds " + std::to_string(impl_->config.max_upload_bytes) + " bytes");
  }
  const auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
  if (io::sniff_format(bytes) == io::ImageFormat::unknown) {
    return error_response(415, "unsupported-media-type", "only PNG and JPEG images are accepted");
  }
  FeatureMap image;
  try {
    image = io::decode_image(bytes);
  } catch (const Error& e) {
    return error_response(415, "unsupported-media-type", e.what());
  }
  const std::string id = sha256_hex(bytes);
  ordered_json j;
  j["image_id"] = id;
  j["width"] = image.width();
  j["height"] = image.height();
  {
    std::lock_guard lock(impl_->store_mu);
    const TimePoint t = impl_->now();
    impl_->purge_expired_locked(t);
    StoredImage& slot = impl_->images[id];
    if (!slot.image) slot.image = std::make_shared<const FeatureMap>(std::move(image));
    slot.expires = t + std::chrono::seconds(impl_->config.image_ttl_seconds);
  }
  return {200, j.dump(), "application/json", {}};
}

HttpResponse SegmentationService::segment(const std::string& json_body) {
  json req;
  try {
    req = json::parse(json_body);
  } catch (const json::exception& e) {
    return error_response(400, "bad-request", std::string("request body is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error_response(400, "bad-request", "request body must be a JSON object");

  std::string prompt;
  GeometricPrompt geometry;
  double threshold = 0.0;
  std::string normalization;
  std::string image_id;
  std::shared_ptr<const FeatureMap> image;
  try {
    if (!req.contains("prompt") || !req["prompt"].is_string()) {
      return error_response(422, error_code_name(ErrorCode::invalid_prompt), "prompt must be a non-empty string");
    }
    prompt = normalize_prompt(req["prompt"].get<std::string>());
    if (req.contains("box") && !req["box"].is_null()) {
      const json& b = req["box"];
      if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
        return error_response(422, error_code_name(ErrorCode::invalid_box), "box must be [x_min, y_min, x_max, y_max]");
      }
      geometry.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    }
    if (req.contains("points")) {
      for (const json& p : req["points"]) {
        if (!p.is_array() || p.size() != 3) {
          return error_response(422, error_code_name(ErrorCode::invalid_input), "points must be [x, y, label]");
        }
        geometry.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<int>() != 0});
      }
    }
    if (req.contains("options")) {
      const json& o = req["options"];
      threshold = o.value("threshold", 0.0);
      normalization = o.value("normalization", "");
      if (!normalization.empty() && normalization != "raw" && normalization != "unit_interval") {
        return error_response(422, error_code_name(ErrorCode::invalid_input),
                              "options.normalization must be raw or unit_interval");
      }
    }
    if (req.contains("image_id")) {
      image_id = req["image_id"].get<std::string>();
      std::lock_guard lock(impl_->store_mu);
      const TimePoint t = impl_->now();
      impl_->purge_expired_locked(t);
      auto it = impl_->images.find(image_id);
      if (it == impl_->images.end()) return error_response(404, "not-found", "unknown or expired image_id");
      it->second.expires = t + std::chrono::seconds(impl_->config.image_ttl_seconds);
      image = it->second.image;
    } else if (req.contains("image")) {
      const auto bytes = base64_decode(req["image"].get<std::string>());
      if (bytes.size() > impl_->config.max_upload_bytes) {
        return error_response(413, "payload-too-large", "inline image is too large");
      }
      if (io::sniff_format(bytes) == io::ImageFormat::unknown) {
        return error_response(415, "unsupported-media-type", "only PNG and JPEG images are accepted");
      }
      image_id = sha256_hex(bytes);
      image = std::make_shared<const FeatureMap>(io::decode_image(bytes));
    } else {
      return error_response(422, error_code_name(ErrorCode::invalid_input), "image_id or image is required");
    }
    if (geometry.box) validate_box(*geometry.box, image->height(), image->width());
  } catch (const Error& e) {
    return error_response(status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(422, error_code_name(ErrorCode::invalid_input), e.what());
  }

  auto task = std::make_shared<std::packaged_task<HttpResponse()>>([=, this]() -> HttpResponse {
    auto [model, fp] = impl_->snapshot();
    std::shared_ptr<const EncodedImage> encoded;
    {
      std::lock_guard lock(impl_->store_mu);
      auto it = impl_->images.find(image_id);
      if (it != impl_->images.end() && it->second.encoded_for == fp) encoded = it->second.encoded;
    }
    if (!encoded) {
      encoded = std::make_shared<const EncodedImage>(model->encode_image(*image));
      std::lock_guard lock(impl_->store_mu);
      auto it = impl_->images.find(image_id);
      if (it != impl_->images.end()) {
        it->second.encoded = encoded;
        it->second.encoded_for = fp;
      }
    }
    const Prediction pred = model->predict(*encoded, prompt, geometry);
    const BinaryMask mask = threshold == 0.0 ? pred.mask : threshold_logits(pred.logits, threshold);
    const Rle rle = rle_encode(mask);

    SimilarityMap sim = pred.similarity;
    const std::string norm =
        normalization.empty() ? (sim.normalization == SimilarityNormalization::raw ? "raw" : "unit_interval")
                              : normalization;
    if (norm == "raw" && sim.normalization == SimilarityNormalization::unit_interval) {
      for (double& v : sim.grid.values()) v = 2.0 * v - 1.0;
    } else if (norm == "unit_interval" && sim.normalization == SimilarityNormalization::raw) {
      for (double& v : sim.grid.values()) v = (v + 1.0) / 2.0;
    }
    const Grid2D shown = numerics::bilinear_resample(sim.grid, image->height(), image->width());
    const auto png = norm == "raw" ? io::encode_grid_png(shown, -1.0, 1.0) : io::encode_grid_png(shown, 0.0, 1.0);

    ordered_json j;
    j["image_id"] = image_id;
    j["prompt"] = prompt;
    j["mask"] = {{"size", {rle.height, rle.width}}, {"counts", rle_counts_to_string(rle.counts)}};
    j["similarity_map"] = {{"size", {shown.height(), shown.width()}},
                           {"grid_size", {sim.grid.height(), sim.grid.width()}},
                           {"normalization", norm},
                           {"png_base64", base64_encode(png)}};
    j["best_head_score"] = pred.heads.best;
    j["best_head_index"] = pred.heads.best_index;
    j["head_scores"] = pred.heads.per_head;
    j["model_fingerprint"] = fp;
    return {200, j.dump(), "application/json", {}};
  });
  auto result = task->get_future();
  if (!impl_->queue.try_push([task] { (*task)(); })) {
    return error_response(503, "busy", "inference queue is full");
  }
  try {
    return result.get();
  } catch (const Error& e) {
    return error_response(status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

namespace {

void reply(httplib::Response& res, const HttpResponse& r, TimePoint started) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  res.set_header("X-Latency-Ms", std::to_string(ms));
}

}  // namespace

int SegmentationService::start(const std::string& host, int port) {
  std::lock_guard lock(impl_->server_mu);
  if (impl_->server) throw Error(ErrorCode::configuration, "service is already running");
  auto server = std::make_unique<httplib::Server>();
  const std::string origin = impl_->config.cors_origin;
  server->set_payload_max_length(impl_->config.max_upload_bytes * 2 + (1u << 20));
  server->set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Expose-Headers", "X-Latency-Ms");
  });
  server->Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, health(), std::chrono::steady_clock::now());
  });
  server->Post("/v1/images", [this](const httplib::Request& req, httplib::Response& res) {
    const auto t = std::chrono::steady_clock::now();
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) {
        reply(res, error_response(422, "invalid-input", "multipart upload needs an 'image' field"), t);
        return;
      }
      reply(res, upload_image(req.get_file_value("image").content), t);
      return;
    }
    reply(res, upload_image(req.body), t);
  });
  server->Post("/v1/segment", [this](const httplib::Request& req, httplib::Response& res) {
    const auto t = std::chrono::steady_clock::now();
    reply(res, segment(req.body), t);
  });
  server->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unexpected error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    const HttpResponse r = error_response(500, "internal", what);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  const int bound = port == 0 ? server->bind_to_any_port(host) : (server->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  httplib::Server* raw = server.get();
  impl_->server = std::move(server);
  impl_->server_thread = std::thread([raw] { raw->listen_after_bind(); });
  raw->wait_until_ready();
  impl_->running = true;
  return bound;
}

void SegmentationService::wait() {
  std::unique_lock lock(impl_->server_mu);
  impl_->stopped_cv.wait(lock, [&] { return !impl_->running; });
}

void SegmentationService::stop() {
  {
    std::lock_guard lock(impl_->server_mu);
    if (!impl_->server) return;
    impl_->server->stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
    impl_->server.reset();
    impl_->running = false;
  }
  impl_->stopped_cv.notify_all();
}

}  // namespace tgseg
