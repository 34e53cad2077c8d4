#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "samg/eval.hpp"
#include "samg/image_io.hpp"
#include "samg/points_io.hpp"
#include "samg/service.hpp"
#include "samg/synthetic_backend.hpp"

using namespace samg;
namespace fs = std::filesystem;

namespace {

// Synthetic backend whose decoder is slow enough for requests to overlap.
class SlowBackend final : public EncoderBackend {
 public:
  std::string name() const override { return inner_.name(); }
  int segmenter_dim() const override { return inner_.segmenter_dim(); }
  int context_dim() const override { return inner_.context_dim(); }
  ImageEmbedding encode_segmenter(const Image& i) const override { return inner_.encode_segmenter(i); }
  FeatureGrid encode_context(const Image& i) const override { return inner_.encode_context(i); }
  MaskCandidates decode(const ImageEmbedding& e, const PromptSet& p) const override {
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
    return inner_.decode(e, p);
  }

 private:
  SyntheticBackend inner_;
};

std::string png(const Image& img) {
  const auto b = io::encode_png(img);
  return {b.begin(), b.end()};
}

std::string label_png(const std::vector<BinaryMask>& masks) {
  const auto b = io::encode_png(io::labels_from_masks(masks));
  return {b.begin(), b.end()};
}

struct Fixture {
  eval::Reference ref;
  std::string points;
  scene::SceneFrame test_frame;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticBackend be;
    Fixture x;
    x.ref = eval::build_reference(scene::default_scene(), be, "svc");
    std::vector<ExtraPoints> pts;
    for (const auto& m : x.ref.frame.masks) pts.push_back(eval::auto_extra_points(m));
    x.points = extra_points_json(pts);
    x.test_frame = eval::suite_frame(scene::default_scene(), scene::SettingName::kVideoHard, 3, 1);
    return x;
  }();
  return f;
}

class ServiceTest : public ::testing::Test {
 protected:
  void start(const EncoderBackend& be, service::ServiceConfig cfg) {
    cfg.port = 0;
    svc_ = std::make_unique<service::Service>(be, cfg);
    port_ = svc_->bind();
    thread_ = std::thread([this] { svc_->listen(); });
    svc_->server().wait_until_ready();
  }
  void stop() {
    if (!svc_) return;
    svc_->stop();
    thread_.join();
    svc_.reset();
  }
  void TearDown() override { stop(); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60);
    return c;
  }

  std::string identify() {
    const auto& f = fixture();
    httplib::MultipartFormDataItems items{{"image", png(f.ref.frame.image), "ref.png", "image/png"},
                                          {"mask", label_png(f.ref.frame.masks), "mask.png", "image/png"},
                                          {"points", f.points, "points.json", "application/json"},
                                          {"task_name", "svc", "", ""}};
    auto res = client().Post("/api/identify", items);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    const auto j = nlohmann::json::parse(res->body);
    EXPECT_EQ(j["summary"]["seg_matrix"], nlohmann::json({12, 256}));
    EXPECT_EQ(j["summary"]["ctx_matrix"], nlohmann::json({12, 768}));
    return j["bundle_id"];
  }

  nlohmann::json segment(const std::string& id, bool debug = false) {
    httplib::MultipartFormDataItems items{{"bundle_id", id, "", ""},
                                          {"image", png(fixture().test_frame.image), "f.png", "image/png"}};
    if (debug) items.push_back({"debug", "1", "", ""});
    auto res = client().Post("/api/segment", items);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    return nlohmann::json::parse(res->body);
  }

  std::unique_ptr<service::Service> svc_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, IdentifyThenSegmentMatchesLibrary) {
  SyntheticBackend be;
  start(be, {});
  const std::string id = identify();
  EXPECT_EQ(id, service::bundle_id(fixture().ref.bundle));
  const auto j = segment(id, true);
  const auto local = segment_frame(fixture().test_frame.image, fixture().ref.bundle, be);
  const auto mask = io::masks_from_labels(cv::imdecode(codec::base64_decode(j["union_mask"].get<std::string>()),
                                                       cv::IMREAD_UNCHANGED));
  ASSERT_EQ(mask.size(), 1u);
  EXPECT_EQ(mask[0], local.union_mask);
  EXPECT_EQ(j["object_masks"].size(), 3u);
  const auto& passes = j["diagnostics"]["objects"][0]["passes"];
  EXPECT_EQ(passes[0]["point_count"], 5);
  EXPECT_EQ(passes[1]["point_count"], 6);
  EXPECT_EQ(passes[2]["point_count"], 7);
  EXPECT_TRUE(passes[0]["box"].is_null());
  EXPECT_FALSE(passes[1]["box"].is_null());
}

TEST_F(ServiceTest, UnknownBundleIs404Json) {
  SyntheticBackend be;
  start(be, {});
  auto res = client().Get("/api/bundles/" + std::string(64, 'a'));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"]["kind"], "not_found");
  httplib::MultipartFormDataItems items{{"bundle_id", "abc", "", ""},
                                        {"image", png(fixture().test_frame.image), "f.png", "image/png"}};
  res = client().Post("/api/segment", items);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ServiceTest, MalformedRequestsAre400) {
  SyntheticBackend be;
  start(be, {});
  const auto& f = fixture();
  httplib::MultipartFormDataItems items{{"image", png(f.ref.frame.image), "ref.png", "image/png"},
                                        {"mask", label_png(f.ref.frame.masks), "mask.png", "image/png"},
                                        {"points", R"({"objects": [)", "points.json", "application/json"}};
  auto res = client().Post("/api/identify", items);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_NE(nlohmann::json::parse(res->body)["error"]["message"].get<std::string>().find("points:1"), std::string::npos);
  res = client().Post("/api/adapt", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, ConcurrencyCapQueuesRequests) {
  SlowBackend be;
  service::ServiceConfig cfg;
  cfg.max_concurrency = 1;
  start(be, cfg);
  const std::string id = identify();
  std::vector<nlohmann::json> out(2);
  std::vector<std::thread> ts;
  for (int i = 0; i < 2; ++i) ts.emplace_back([&, i] { out[static_cast<std::size_t>(i)] = segment(id); });
  for (auto& t : ts) t.join();
  EXPECT_EQ(out[0]["union_mask"], out[1]["union_mask"]);
  EXPECT_EQ(svc_->gate().peak(), 1);
  auto h = client().Get("/healthz");
  ASSERT_TRUE(h);
  EXPECT_EQ(nlohmann::json::parse(h->body)["peak_in_flight"], 1);
}

TEST(InferenceGate, NeverExceedsSlots) {
  service::InferenceGate gate(2);
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i)
    ts.emplace_back([&] {
      service::InferenceGate::Slot s(gate);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    });
  for (auto& t : ts) t.join();
  EXPECT_LE(gate.peak(), 2);
  EXPECT_GE(gate.peak(), 1);
  EXPECT_EQ(gate.in_flight(), 0);
}

TEST_F(ServiceTest, AdaptCreatesNewBundleAndSimilarityPng) {
  SyntheticBackend be;
  start(be, {});
  const std::string id = identify();
  auto res = client().Post("/api/adapt", nlohmann::json{{"bundle_id", id}, {"steps", 50}}.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = nlohmann::json::parse(res->body);
  // The id is the content hash of the adapted bundle; unchanged weights keep the id.
  auto local = fixture().ref.bundle;
  local.task_name = "svc";
  AdaptationConfig cfg;
  cfg.steps = 50;
  adapt_weights(fixture().ref.frame.image, fixture().ref.frame.masks, local, be, cfg);
  EXPECT_EQ(j["bundle_id"], service::bundle_id(local));
  EXPECT_EQ(j["w1"].get<double>(), local.weights.w1);
  EXPECT_LE(j["final_loss"].get<double>(), j["initial_loss"].get<double>());
  auto list = client().Get("/api/bundles");
  EXPECT_EQ(nlohmann::json::parse(list->body)["bundles"].size(), j["bundle_id"] == id ? 1u : 2u);

  auto sim = client().Get("/api/similarity?bundle_id=" + id + "&object_id=1&kind=type2&index=2");
  ASSERT_TRUE(sim);
  ASSERT_EQ(sim->status, 200) << sim->body;
  EXPECT_EQ(sim->get_header_value("Content-Type"), "image/png");
  const cv::Mat m = cv::imdecode(std::vector<std::uint8_t>(sim->body.begin(), sim->body.end()), cv::IMREAD_UNCHANGED);
  EXPECT_EQ(m.type(), CV_16UC1);
  EXPECT_EQ(m.rows, 64);
  EXPECT_EQ(m.cols, 64);
  sim = client().Get("/api/similarity?bundle_id=" + id + "&object_id=9");
  EXPECT_EQ(sim->status, 404);
}

TEST_F(ServiceTest, PersistentStoreSurvivesRestart) {
  const auto dir = fs::temp_directory_path() / "samg_store_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SyntheticBackend be;
  service::ServiceConfig cfg;
  cfg.store_dir = dir;
  start(be, cfg);
  const std::string id = identify();
  const auto first = segment(id);
  const auto bundle_text = client().Get("/api/bundles/" + id)->body;
  stop();

  start(be, cfg);
  const auto again = client().Get("/api/bundles/" + id);
  ASSERT_EQ(again->status, 200);
  EXPECT_EQ(again->body, bundle_text);
  EXPECT_EQ(segment(id), first);
  stop();
  fs::remove_all(dir);
}

TEST(ServiceConfig, Validation) {
  service::ServiceConfig c;
  c.max_concurrency = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.store_dir = "/nonexistent/store";
  EXPECT_THROW(c.validate(), Error);
}
