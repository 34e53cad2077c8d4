#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "samg/adapt.hpp"
#include "samg/bundle_io.hpp"
#include "samg/codec.hpp"
#include "samg/diagnostics.hpp"
#include "samg/image_io.hpp"
#include "samg/points_io.hpp"
#include "samg/segment.hpp"

namespace samg::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int max_concurrency = 2;
  std::filesystem::path store_dir;  // empty keeps bundles in memory only

  void validate() const {
    if (port < 0 || port > 65535) throw Error(Error::Kind::kInvalidArgument, "port must be in [0, 65535]");
    if (max_concurrency < 1) throw Error(Error::Kind::kInvalidArgument, "max concurrency must be >= 1");
    if (!store_dir.empty() && !std::filesystem::is_directory(store_dir))
      throw Error(Error::Kind::kInvalidArgument, "bundle store directory does not exist: " + store_dir.string());
  }
};

inline std::string bundle_id(const PointFeatureBundle& b) { return codec::sha256_hex(serialize_bundle(b)); }

/// Bundles keyed by the hash of their canonical serialization, each with the
/// reference image and masks it was built from. With a directory the store is
/// mirrored to <id>.json, <id>.ref.png and <id>.masks.png and reloaded on start.
class BundleStore {
 public:
  struct Entry {
    PointFeatureBundle bundle;
    Image reference;
    std::vector<BinaryMask> masks;
  };

  explicit BundleStore(std::filesystem::path dir = {}) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    for (const auto& f : std::filesystem::directory_iterator(dir_)) {
      const auto name = f.path().filename().string();
      if (f.path().extension() != ".json") continue;
      const std::string id = name.substr(0, name.size() - 5);
      auto e = std::make_shared<Entry>();
      e->bundle = load_bundle(f.path());
      if (bundle_id(e->bundle) != id) continue;  // corrupted or renamed
      e->reference = io::read_image(dir_ / (id + ".ref.png"));
      e->masks = io::read_label_masks(dir_ / (id + ".masks.png"));
      entries_[id] = std::move(e);
    }
  }

  std::string put(Entry entry) {
    const std::string id = bundle_id(entry.bundle);
    std::unique_lock lock(mu_);
    if (entries_.count(id)) return id;
    if (!dir_.empty()) {
      io::write_image(dir_ / (id + ".ref.png"), entry.reference);
      io::write_png(dir_ / (id + ".masks.png"), io::labels_from_masks(entry.masks));
      // Bundle file last: its presence marks a complete entry.
      save_bundle(entry.bundle, dir_ / (id + ".json"));
    }
    entries_[id] = std::make_shared<const Entry>(std::move(entry));
    return id;
  }

  std::shared_ptr<const Entry> get(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(Error::Kind::kNotFound, "unknown bundle id '" + id + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, std::shared_ptr<const Entry>>> list() const {
    std::shared_lock lock(mu_);
    return {entries_.begin(), entries_.end()};
  }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const Entry>> entries_;
};

/// Caps concurrent inference; excess requests wait for a slot.
class InferenceGate {
 public:
  explicit InferenceGate(int slots) : sem_(slots) {}

  class Slot {
   public:
    explicit Slot(InferenceGate& g) : g_(g) {
      g_.sem_.acquire();
      const int now = ++g_.in_flight_;
      int peak = g_.peak_.load();
      while (now > peak && !g_.peak_.compare_exchange_weak(peak, now)) {
      }
    }
    ~Slot() {
      --g_.in_flight_;
      g_.sem_.release();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    InferenceGate& g_;
  };

  int in_flight() const { return in_flight_.load(); }
  int peak() const { return peak_.load(); }

 private:
  std::counting_semaphore<> sem_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

inline const char* kind_name(Error::Kind k) {
  switch (k) {
    case Error::Kind::kInvalidArgument: return "invalid_argument";
    case Error::Kind::kDimensionMismatch: return "dimension_mismatch";
    case Error::Kind::kValidation: return "validation";
    case Error::Kind::kFormat: return "format";
    case Error::Kind::kVersionMismatch: return "version_mismatch";
    case Error::Kind::kBackend: return "backend";
    case Error::Kind::kNotFound: return "not_found";
    case Error::Kind::kNumeric: return "numeric";
  }
  return "unknown";
}

inline int http_status(Error::Kind k) {
  switch (k) {
    case Error::Kind::kNotFound: return 404;
    case Error::Kind::kBackend:
    case Error::Kind::kNumeric: return 500;
    default: return 400;
  }
}

class Service {
 public:
  Service(const EncoderBackend& backend, ServiceConfig config)
      : backend_(backend), config_((config.validate(), std::move(config))), store_(config_.store_dir),
        gate_(config_.max_concurrency) {
    routes();
  }

  httplib::Server& server() { return server_; }
  const BundleStore& store() const { return store_; }
  const InferenceGate& gate() const { return gate_; }

  /// Binds the configured port (or a free one when port = 0) and returns it.
  int bind() {
    if (config_.port == 0) {
      bound_port_ = server_.bind_to_any_port(config_.host);
    } else if (server_.bind_to_port(config_.host, config_.port)) {
      bound_port_ = config_.port;
    } else {
      bound_port_ = -1;
    }
    if (bound_port_ < 0)
      throw Error(Error::Kind::kInvalidArgument, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    return bound_port_;
  }

  /// Blocks until stop(); in-flight requests complete before it returns.
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  int port() const { return bound_port_; }

 private:
  static std::string field(const httplib::Request& req, const std::string& key, bool required = true) {
    if (req.has_file(key)) return req.get_file_value(key).content;
    if (req.has_param(key)) return req.get_param_value(key);
    if (required) throw Error(Error::Kind::kValidation, "missing form field '" + key + "'");
    return {};
  }

  static std::vector<std::uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }

  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_json(res, {{"error", {{"kind", kind_name(e.kind())}, {"message", e.what()}}}}, http_status(e.kind()));
      } catch (const nlohmann::json::exception& e) {
        send_json(res, {{"error", {{"kind", "format"}, {"message", e.what()}}}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", {{"kind", "internal"}, {"message", e.what()}}}}, 500);
      }
    };
  }

  void routes() {
    server_.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"},
                      {"backend", backend_.name()},
                      {"max_concurrency", config_.max_concurrency},
                      {"in_flight", gate_.in_flight()},
                      {"peak_in_flight", gate_.peak()},
                      {"bundles", store_.list().size()}});
    }));

    server_.Get("/api/bundles", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& [id, e] : store_.list())
        out.push_back({{"bundle_id", id},
                       {"task_name", e->bundle.task_name},
                       {"objects", e->bundle.objects.size()},
                       {"reference_size", {e->bundle.reference_width, e->bundle.reference_height}},
                       {"weights", {{"w1", e->bundle.weights.w1}, {"w2", e->bundle.weights.w2}}}});
      send_json(res, {{"bundles", out}});
    }));

    server_.Get(R"(/api/bundles/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      res.set_content(serialize_bundle(store_.get(req.matches[1])->bundle), "application/json");
    }));

    server_.Post("/api/identify", guarded([this](const httplib::Request& req, httplib::Response& res) {
      BundleStore::Entry e;
      e.reference = io::decode_image(bytes(field(req, "image")));
      e.masks = io::decode_label_masks(bytes(field(req, "mask")));
      const auto points = parse_extra_points(field(req, "points"), e.masks.size(), "points");
      std::string task = field(req, "task_name", false);
      {
        InferenceGate::Slot slot(gate_);
        e.bundle = build_bundle(e.reference, e.masks, points, backend_, task.empty() ? "task" : task);
      }
      const auto shape = [&](int dim) { return nlohmann::json{e.bundle.feature_rows(), dim}; };
      const nlohmann::json summary{{"objects", e.bundle.objects.size()},
                                   {"seg_matrix", shape(e.bundle.seg_dim())},
                                   {"ctx_matrix", shape(e.bundle.ctx_dim())}};
      const std::string id = store_.put(std::move(e));
      send_json(res, {{"bundle_id", id}, {"summary", summary}});
    }));

    server_.Post("/api/adapt", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto src = store_.get(body.at("bundle_id").get<std::string>());
      AdaptationConfig cfg;
      cfg.steps = body.value("steps", cfg.steps);
      cfg.learning_rate = body.value("lr", cfg.learning_rate);
      BundleStore::Entry e = *src;
      AdaptationResult r;
      {
        InferenceGate::Slot slot(gate_);
        r = adapt_weights(e.reference, e.masks, e.bundle, backend_, cfg);
      }
      const std::string id = store_.put(std::move(e));
      send_json(res, {{"bundle_id", id},
                      {"w1", r.weights.w1},
                      {"w2", r.weights.w2},
                      {"initial_loss", r.initial_loss},
                      {"final_loss", r.final_loss}});
    }));

    server_.Post("/api/segment", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = store_.get(field(req, "bundle_id"));
      const Image frame = io::decode_image(bytes(field(req, "image")));
      const std::string debug = field(req, "debug", false);
      SegmentationResult r;
      {
        InferenceGate::Slot slot(gate_);
        r = segment_frame(frame, entry->bundle, backend_);
      }
      auto png64 = [](const cv::Mat& m) { return codec::base64_encode(io::encode_png(m)); };
      nlohmann::json masks = nlohmann::json::array();
      for (const auto& m : r.object_masks) masks.push_back(png64(io::mask_to_mat(m)));
      nlohmann::json out{{"width", frame.width()},
                         {"height", frame.height()},
                         {"union_mask", png64(io::mask_to_mat(r.union_mask))},
                         {"object_masks", masks},
                         {"masked_image", png64(io::to_mat_bgr(r.masked_frame))}};
      if (debug == "1" || debug == "true") out["diagnostics"] = diagnostics_json(r.diagnostics);
      send_json(res, out);
    }));

    auto similarity = guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = store_.get(field(req, "bundle_id"));
      const int object_id = std::stoi(field(req, "object_id"));
      const std::string kind = field(req, "kind", false);
      const std::string index = field(req, "index", false);
      const BundleObject* obj = nullptr;
      for (const auto& o : entry->bundle.objects)
        if (o.object_id == object_id) obj = &o;
      if (!obj) throw Error(Error::Kind::kNotFound, "bundle has no object " + std::to_string(object_id));
      const PointFeature* pf = &obj->type1;
      if (kind == "type2") {
        const int k = index.empty() ? 0 : std::stoi(index);
        if (k < 0 || k >= kExtraPointsPerObject) throw Error(Error::Kind::kInvalidArgument, "type-2 index must be 0..2");
        pf = &obj->type2[static_cast<std::size_t>(k)];
      } else if (!kind.empty() && kind != "type1") {
        throw Error(Error::Kind::kInvalidArgument, "kind must be type1 or type2");
      }
      const Image frame = req.has_file("image") ? io::decode_image(bytes(field(req, "image"))) : entry->reference;
      SimilarityMap map;
      {
        InferenceGate::Slot slot(gate_);
        map = similarity_map(*pf, encode_frame(frame, backend_));
      }
      const auto png = io::encode_png(io::similarity_to_mat(map.values));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
    server_.Get("/api/similarity", similarity);
    server_.Post("/api/similarity", similarity);
  }

  const EncoderBackend& backend_;
  ServiceConfig config_;
  BundleStore store_;
  InferenceGate gate_;
  httplib::Server server_;
  int bound_port_ = -1;
};

}  // namespace samg::service
