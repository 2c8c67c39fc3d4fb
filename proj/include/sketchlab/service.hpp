#pragma once

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <sodium.h>

#include "json.hpp"
#include "sketchlab/bounded_queue.hpp"
#include "sketchlab/checkpoint.hpp"
#include "sketchlab/contour.hpp"
#include "sketchlab/dataset.hpp"
#include "sketchlab/image_io.hpp"
#include "sketchlab/probe.hpp"
#include "sketchlab/probe_groups.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include "httplib.h"

namespace sketchlab {

inline constexpr int kDefaultStudioPort = 8700;
inline constexpr std::size_t kDefaultQueueDepth = 8;
inline constexpr std::size_t kMaxPayloadBytes = 4u << 20;

// ---------------------------------------------------------------------------
// base64

inline std::string base64_encode(const ByteBuffer& bytes) {
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

/// Strict decode; whitespace is tolerated, anything else malformed throws.
inline ByteBuffer base64_decode(const std::string& text) {
  ByteBuffer out(text.size() / 4 * 3 + 3);
  std::size_t n = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), " \r\n\t", &n, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw ValidationError("malformed base64 payload");
  }
  out.resize(n);
  return out;
}

// ---------------------------------------------------------------------------
// Registry

struct RegistryEntry {
  std::string model_id;
  std::filesystem::path checkpoint;
  std::string display_name;
};

struct RegistryConfig {
  std::vector<RegistryEntry> entries;
  std::size_t queue_depth = kDefaultQueueDepth;
  std::string cors_origin = "*";
};

/// Registry file:
///   {"queue_depth": 8, "cors_origin": "*",
///    "models": [{"model_id": "ours", "checkpoint": "ours.sklb", "display_name": "ours"}]}
/// Relative checkpoint paths resolve against the registry's directory.
inline RegistryConfig registry_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  RegistryConfig cfg;
  try {
    if (j.contains("queue_depth")) cfg.queue_depth = j.at("queue_depth").get<std::size_t>();
    if (j.contains("cors_origin")) cfg.cors_origin = j.at("cors_origin").get<std::string>();
    for (const auto& m : j.at("models")) {
      RegistryEntry e;
      e.model_id = m.at("model_id").get<std::string>();
      std::filesystem::path p = m.at("checkpoint").get<std::string>();
      e.checkpoint = p.is_relative() ? base / p : p;
      e.display_name = m.value("display_name", e.model_id);
      cfg.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("registry: ") + e.what());
  }
  if (cfg.entries.empty()) throw ConfigError("registry: no models");
  if (cfg.queue_depth == 0) throw ConfigError("registry: queue_depth must be >= 1");
  std::set<std::string> seen;
  for (const auto& e : cfg.entries) {
    if (e.model_id.empty()) throw ConfigError("registry: empty model_id");
    if (!seen.insert(e.model_id).second) {
      throw ConfigError("registry: duplicate model_id '" + e.model_id + "'");
    }
  }
  return cfg;
}

inline RegistryConfig load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("registry " + path.string() + ": " + e.what());
  }
  return registry_from_json(j, path.parent_path());
}

/// STUDIO_PORT, when set, wins over the command-line value.
inline int resolve_port(int cli_port, const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return cli_port;
  try {
    std::size_t used = 0;
    const int p = std::stoi(env_value, &used);
    if (used != std::strlen(env_value) || p < 0 || p > 65535) throw std::out_of_range("port");
    return p;
  } catch (const std::exception&) {
    throw ConfigError(std::string("STUDIO_PORT is not a port number: ") + env_value);
  }
}

// ---------------------------------------------------------------------------
// Per-model work queue

/// Runs submitted jobs one at a time on its own thread. At most `depth`
/// jobs wait behind the running one; submit refuses beyond that.
class ModelWorker {
 public:
  explicit ModelWorker(std::size_t depth) : queue_(depth), thread_([this] { run(); }) {}
  ~ModelWorker() {
    queue_.close();
    thread_.join();
  }
  ModelWorker(const ModelWorker&) = delete;
  ModelWorker& operator=(const ModelWorker&) = delete;

  template <typename F>
  auto submit(F fn) -> std::optional<std::future<decltype(fn())>> {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
    auto fut = task->get_future();
    if (!queue_.try_push([task] { (*task)(); })) return std::nullopt;
    return fut;
  }

  std::size_t pending() const { return queue_.size(); }
  std::size_t depth() const { return queue_.capacity(); }

 private:
  void run() {
    while (auto job = queue_.pop()) (*job)();
  }

  BoundedQueue<std::function<void()>> queue_;
  std::thread thread_;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

struct LoadedModel {
  RegistryEntry entry;
  CheckpointMeta meta;
  Generator<float> generator;
  std::unique_ptr<ModelWorker> worker;

  int resolution() const { return meta.image_size; }
};

/// Places a decoded gray image on a white canvas of `size`, centered,
/// cropping whatever overhangs.
inline SketchRaster fit_to_canvas(const Tensor<float>& gray, int size) {
  SketchRaster out(size);
  const int h = gray.height(), w = gray.width();
  const int oy = (size - h) / 2, ox = (size - w) / 2;
  for (int y = 0; y < h; ++y) {
    const int ty = y + oy;
    if (ty < 0 || ty >= size) continue;
    for (int x = 0; x < w; ++x) {
      const int tx = x + ox;
      if (tx >= 0 && tx < size) out.set(tx, ty, gray(0, y, x));
    }
  }
  return out;
}

/// Starter template: binarized mean of jittered synthetic face contours.
inline SketchRaster average_face_template(int size, int count = 32, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::vector<SketchRaster> faces;
  faces.reserve(count);
  for (int i = 0; i < count; ++i) {
    faces.push_back(render_contour(face_template(random_face_shape(rng, 0.25), size), size));
  }
  return binarize(average_face(faces), 0.75f);
}

class StudioService {
 public:
  explicit StudioService(const RegistryConfig& cfg) : cfg_(cfg) {
    if (sodium_init() < 0) throw IoError("libsodium failed to initialize");
    for (const auto& e : cfg.entries) {
      // Any failure here propagates: the service refuses to start.
      LoadedGenerator lg = load_generator(e.checkpoint);
      if (lg.meta.image_size < kMinRenderSize) {
        throw ValidationError("checkpoint " + e.checkpoint.string() + " has no usable image_size");
      }
      auto m = std::make_unique<LoadedModel>(LoadedModel{
          e, std::move(lg.meta), std::move(lg.generator),
          std::make_unique<ModelWorker>(cfg.queue_depth)});
      order_.push_back(e.model_id);
      models_.emplace(e.model_id, std::move(m));
    }
    std::set<int> sizes;
    for (const auto& [id, m] : models_) sizes.insert(m->resolution());
    for (int s : sizes) {
      templates_.push_back({"average_face_" + std::to_string(s), s,
                            base64_encode(png_from_gray(average_face_template(s).pixels()))});
    }
  }

  const RegistryConfig& config() const { return cfg_; }
  ModelWorker& worker(const std::string& model_id) { return *models_.at(model_id)->worker; }

  ServiceResponse health() const {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& id : order_) {
      const auto& m = *models_.at(id);
      models.push_back({{"model_id", id},
                        {"display_name", m.entry.display_name},
                        {"image_size", m.resolution()},
                        {"norm_free_prefix", m.meta.generator.norm_free_prefix}});
    }
    return {200, {{"status", "ok"}, {"models", models}}};
  }

  ServiceResponse templates() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : templates_) {
      out.push_back({{"template_id", t.id}, {"size", t.size}, {"sketch", t.png_base64}});
    }
    return {200, out};
  }

  ServiceResponse generate(const std::string& body) {
    return guarded(body, [&](const nlohmann::json& req) {
      auto& m = model_for(req);
      const SketchRaster sketch = decode_sketch(req, m.resolution());
      const auto t0 = std::chrono::steady_clock::now();
      auto out = run_on(m, [&m, sketch] { return png_from_rgb(generator_forward(m.generator, sketch).pixels()); });
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      return ServiceResponse{200, {{"image", base64_encode(out)}, {"latency_ms", ms}}};
    });
  }

  ServiceResponse probe(const std::string& body) {
    return guarded(body, [&](const nlohmann::json& req) {
      auto& m = model_for(req);
      const int size = m.resolution();
      const int n_down = m.meta.generator.n_downsample;
      const SketchRaster sketch = decode_sketch(req, size);

      PixelPoint p;
      const auto& point = req.contains("point") ? req.at("point") : nlohmann::json("auto");
      if (point.is_string() && point.get<std::string>() == "auto") {
        p = template_probe_point(size);
      } else if (point.is_array() && point.size() == 2 && point[0].is_number_integer() &&
                 point[1].is_number_integer()) {
        p = {point[0].get<int>(), point[1].get<int>()};
      } else {
        throw BadRequest("point must be [x, y] integers or \"auto\"");
      }

      std::vector<int> layers;
      if (req.contains("layers")) {
        if (!req.at("layers").is_array() || req.at("layers").empty()) {
          throw BadRequest("layers must be a non-empty array");
        }
        for (const auto& l : req.at("layers")) {
          if (!l.is_number_integer()) throw BadRequest("layers must be integers");
          const int v = l.get<int>();
          if (v < 0 || v > n_down) {
            throw BadRequest("layer " + std::to_string(v) + " outside 0.." + std::to_string(n_down));
          }
          layers.push_back(v);
        }
      } else {
        for (int i = 0; i <= n_down; ++i) layers.push_back(i);
      }

      if (!is_interior(p, size, n_down)) {
        const auto w = receptive_window(n_down, p, n_down);
        return ServiceResponse{
            422,
            {{"error", "probe point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                           ") is too close to the border: its layer-" + std::to_string(n_down) +
                           " receptive field [" + std::to_string(w.x0) + "," + std::to_string(w.y0) +
                           ")-(" + std::to_string(w.x1) + "," + std::to_string(w.y1) +
                           ") leaves the " + std::to_string(size) + "x" + std::to_string(size) +
                           " image"}}};
      }

      const int last = *std::max_element(layers.begin(), layers.end());
      auto stack = run_on(m, [&m, sketch, last] { return extract_feature_stack(m.generator, sketch, last); });
      nlohmann::json per_layer = nlohmann::json::array();
      for (int l : layers) {
        const auto rf = receptive_field(l, n_down);
        const ProbeVector v = probe_vector(stack[l], p);
        double sq = 0;
        for (float x : v) sq += static_cast<double>(x) * x;
        per_layer.push_back({{"layer", l},
                             {"rf_size", rf.size},
                             {"rf_stride", rf.stride},
                             {"vector_norm", std::sqrt(sq)},
                             {"vector_dim", v.size()}});
      }
      return ServiceResponse{
          200, {{"model_id", m.entry.model_id}, {"point", {p.x, p.y}}, {"layers", per_layer}}};
    });
  }

  /// Binds the API onto an httplib server.
  void mount(httplib::Server& srv) {
    srv.set_payload_max_length(kMaxPayloadBytes);
    const std::string origin = cfg_.cors_origin;
    srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    srv.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, health());
    });
    srv.Get("/api/templates", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, templates());
    });
    srv.Post("/api/generate", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, generate(req.body));
    });
    srv.Post("/api/probe", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, probe(req.body));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const char* msg = res.status == 413 ? "payload exceeds 4 MiB" : httplib::status_message(res.status);
      res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    });
  }

 private:
  struct HttpError : std::runtime_error {
    HttpError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
    int status;
  };
  struct BadRequest : HttpError {
    explicit BadRequest(const std::string& m) : HttpError(400, m) {}
  };

  struct Template {
    std::string id;
    int size;
    std::string png_base64;
  };

  template <typename F>
  ServiceResponse guarded(const std::string& body, F&& handler) {
    try {
      if (body.size() > kMaxPayloadBytes) throw HttpError(413, "payload exceeds 4 MiB");
      nlohmann::json req;
      try {
        req = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error&) {
        throw BadRequest("body is not valid JSON");
      }
      if (!req.is_object()) throw BadRequest("body must be a JSON object");
      return handler(req);
    } catch (const HttpError& e) {
      return {e.status, {{"error", e.what()}}};
    } catch (const nlohmann::json::exception& e) {
      return {400, {{"error", e.what()}}};
    } catch (const std::exception& e) {
      return {500, {{"error", e.what()}}};
    }
  }

  LoadedModel& model_for(const nlohmann::json& req) {
    if (!req.contains("model_id") || !req.at("model_id").is_string()) {
      throw BadRequest("model_id missing");
    }
    const auto id = req.at("model_id").get<std::string>();
    auto it = models_.find(id);
    if (it == models_.end()) throw HttpError(404, "unknown model_id '" + id + "'");
    return *it->second;
  }

  static SketchRaster decode_sketch(const nlohmann::json& req, int size) {
    if (!req.contains("sketch") || !req.at("sketch").is_string()) throw BadRequest("sketch missing");
    try {
      return fit_to_canvas(gray_from_png(base64_decode(req.at("sketch").get<std::string>())), size);
    } catch (const ValidationError& e) {
      throw BadRequest(std::string("sketch: ") + e.what());
    }
  }

  template <typename F>
  static auto run_on(LoadedModel& m, F fn) -> decltype(fn()) {
    auto fut = m.worker->submit(std::move(fn));
    if (!fut) throw HttpError(503, "model '" + m.entry.model_id + "' queue is full");
    return fut->get();
  }

  RegistryConfig cfg_;
  std::vector<std::string> order_;
  std::map<std::string, std::unique_ptr<LoadedModel>> models_;
  std::vector<Template> templates_;
};

}  // namespace sketchlab
