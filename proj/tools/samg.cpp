// samg command-line front end: identify, adapt, segment, eval, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <pthread.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "samg/adapt.hpp"
#include "samg/bundle_io.hpp"
#include "samg/diagnostics.hpp"
#include "samg/eval.hpp"
#include "samg/image_io.hpp"
#include "samg/onnx_backend.hpp"
#include "samg/points_io.hpp"
#include "samg/segment.hpp"
#include "samg/service.hpp"
#include "samg/synthetic_backend.hpp"

namespace fs = std::filesystem;
using namespace samg;

namespace {

struct Globals {
  std::string backend = "synthetic";
  std::string models;
  std::string log_level = "info";
};

std::unique_ptr<EncoderBackend> make_backend(const Globals& g) {
  if (g.backend == "synthetic") return std::make_unique<SyntheticBackend>();
  const fs::path dir = g.models.empty() ? OnnxBackend::default_model_dir() : fs::path(g.models);
  spdlog::info("loading models from {}", dir.string());
  return std::make_unique<OnnxBackend>(dir);
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

bool is_image(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

int cmd_identify(const Globals& g, const fs::path& image_path, const fs::path& masks_path,
                 const std::optional<fs::path>& points_path, const fs::path& out, const std::string& task) {
  const Image image = io::read_image(image_path);
  const auto masks = io::read_label_masks(masks_path);
  if (masks.empty()) throw Error(Error::Kind::kValidation, masks_path.string() + ": mask image has no labelled objects");
  if (!points_path)
    throw Error(Error::Kind::kValidation, "--points is required: exactly 3 extra points are required for each of the " +
                                              std::to_string(masks.size()) + " objects");
  const auto points = parse_extra_points(read_file(*points_path), masks.size(), points_path->string());
  const auto backend = make_backend(g);
  const auto bundle = build_bundle(image, masks, points, *backend, task);
  save_bundle(bundle, out);
  print_json({{"bundle", out.string()},
              {"bundle_id", service::bundle_id(bundle)},
              {"objects", bundle.objects.size()},
              {"seg_matrix", {bundle.feature_rows(), bundle.seg_dim()}},
              {"ctx_matrix", {bundle.feature_rows(), bundle.ctx_dim()}}});
  return 0;
}

int cmd_adapt(const Globals& g, const fs::path& bundle_path, const fs::path& image_path, const fs::path& masks_path,
              const AdaptationConfig& cfg, std::optional<fs::path> out) {
  auto bundle = load_bundle(bundle_path);
  const auto backend = make_backend(g);
  const auto r = adapt_weights(io::read_image(image_path), io::read_label_masks(masks_path), bundle, *backend, cfg);
  save_bundle(bundle, out.value_or(bundle_path));
  print_json({{"w1", r.weights.w1}, {"w2", r.weights.w2}, {"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}});
  return 0;
}

int cmd_segment(const Globals& g, const fs::path& bundle_path, const std::string& input, const std::string& output,
                bool debug, bool strict) {
  const auto bundle = load_bundle(bundle_path);
  const auto backend = make_backend(g);
  int failures = 0, processed = 0;

  auto report_failure = [&](const std::string& what, const std::exception& e) {
    ++failures;
    spdlog::error("{}: {}", what, e.what());
    if (strict) throw Error(Error::Kind::kValidation, "aborting on failed frame (--strict): " + what);
  };

  if (input == "-") {
    std::ios::sync_with_stdio(false);
    std::ostream* out = output == "-" ? &std::cout : nullptr;
    std::ofstream file;
    if (!out) {
      file.open(output, std::ios::binary);
      if (!file) throw Error(Error::Kind::kInvalidArgument, "cannot open " + output);
      out = &file;
    }
    for (int index = 0;; ++index) {
      auto frame = io::read_stream_frame(std::cin);
      if (!frame) break;
      try {
        const auto r = segment_frame(*frame, bundle, *backend);
        io::write_stream_frame(*out, r.masked_frame);
        if (debug) std::cerr << nlohmann::json{{"frame", index}, {"diagnostics", diagnostics_json(r.diagnostics)}}.dump() << "\n";
        ++processed;
      } catch (const std::exception& e) {
        // Keep the output stream aligned with the input: emit a blank frame.
        io::write_stream_frame(*out, Image(frame->width(), frame->height()));
        report_failure("frame " + std::to_string(index), e);
      }
    }
    out->flush();
  } else {
    std::vector<fs::path> inputs;
    if (fs::is_directory(input)) {
      for (const auto& e : fs::directory_iterator(input))
        if (e.is_regular_file() && is_image(e.path())) inputs.push_back(e.path());
      std::sort(inputs.begin(), inputs.end());
    } else {
      inputs.push_back(input);
    }
    fs::create_directories(output);
    for (const auto& p : inputs) {
      try {
        const auto r = segment_frame(io::read_image(p), bundle, *backend);
        const auto stem = p.stem().string();
        io::write_image(fs::path(output) / (stem + "_masked.png"), r.masked_frame);
        if (debug) {
          std::ofstream d(fs::path(output) / (stem + "_diagnostics.json"));
          d << nlohmann::json{{"frame", p.filename().string()}, {"diagnostics", diagnostics_json(r.diagnostics)}}.dump(2)
            << "\n";
        }
        ++processed;
      } catch (const std::exception& e) {
        report_failure(p.string(), e);
      }
    }
  }
  spdlog::info("segmented {} frame(s), {} failure(s)", processed, failures);
  return 0;
}

int cmd_eval(const Globals& g, const std::string& suite, int frames, std::uint64_t seed, int size, bool adapt,
             bool deterministic, const std::optional<fs::path>& report_path, int throughput_frames) {
  const auto backend = make_backend(g);
  const auto spec = scene::default_scene(size, size);
  auto ref = eval::build_reference(spec, *backend);
  if (adapt) adapt_weights(ref.frame.image, ref.frame.masks, ref.bundle, *backend);
  eval::SuiteOptions opt;
  opt.frames = frames;
  opt.seed = seed;
  if (suite != "all") opt.settings = {scene::parse_setting_name(suite)};
  const auto report = eval::run_suite(ref.bundle, *backend, spec, opt);
  nlohmann::json j = eval::report_to_json(report, !deterministic);

  if (!deterministic && throughput_frames > 0) {
    // Wall time per frame for every backend that can be loaded here.
    nlohmann::json tp = nlohmann::json::array();
    auto measure = [&](const EncoderBackend& be) {
      const auto r = eval::build_reference(spec, be);
      eval::SuiteOptions o;
      o.frames = throughput_frames;
      o.seed = seed;
      o.settings = {scene::SettingName::kColorEasy};
      const auto rep = eval::run_suite(r.bundle, be, spec, o);
      tp.push_back({{"backend", be.name()}, {"frames", throughput_frames}, {"wall_ms_per_frame", rep.settings[0].wall_ms_per_frame}});
    };
    measure(SyntheticBackend{});
    const fs::path dir = g.models.empty() ? OnnxBackend::default_model_dir() : fs::path(g.models);
    if (OnnxBackend::available(dir)) {
      try {
        measure(OnnxBackend(dir));
      } catch (const std::exception& e) {
        spdlog::warn("onnx throughput skipped: {}", e.what());
      }
    } else {
      spdlog::info("no models at {}; onnx throughput skipped", dir.string());
    }
    j["throughput"] = tp;
  }
  if (report_path) {
    std::ofstream(*report_path) << j.dump(2) << "\n";
  }
  print_json(j);
  return 0;
}

int cmd_serve(const Globals& g, service::ServiceConfig cfg) {
  // Block termination signals in every thread; one waiter thread turns them into a stop.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const auto backend = make_backend(g);  // fail fast before binding
  service::Service svc(*backend, cfg);
  const int port = svc.bind();
  spdlog::info("listening on {}:{} (backend {}, max concurrency {})", cfg.host, port, backend->name(), cfg.max_concurrency);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("signal {} received, draining", sig);
    svc.stop();
  });
  svc.listen();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("samg"));
  CLI::App app{"one-shot correspondence-driven segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--backend", g.backend, "encoder/decoder backend")
      ->check(CLI::IsMember({"onnx", "synthetic"}))
      ->capture_default_str();
  app.add_option("--models", g.models, "model directory (default: $SAMG_MODEL_DIR or ./models)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  std::function<int()> run;

  auto* identify = app.add_subcommand("identify", "build a point-feature bundle from a reference image");
  fs::path id_image, id_masks, id_out = "bundle.json";
  std::optional<fs::path> id_points;
  std::string id_task = "task";
  identify->add_option("--image", id_image, "reference RGB image")->required()->check(CLI::ExistingFile);
  identify->add_option("--masks", id_masks, "label image, one nonzero value per object")->required()->check(CLI::ExistingFile);
  identify->add_option("--points", id_points, "extra points JSON (3 per object)")->check(CLI::ExistingFile);
  identify->add_option("-o,--out", id_out, "bundle output path")->capture_default_str();
  identify->add_option("--task-name", id_task)->capture_default_str();
  identify->callback([&] { run = [&] { return cmd_identify(g, id_image, id_masks, id_points, id_out, id_task); }; });

  auto* adapt = app.add_subcommand("adapt", "tune the candidate mixing weights on the reference pair");
  fs::path ad_bundle, ad_image, ad_masks;
  std::optional<fs::path> ad_out;
  AdaptationConfig ad_cfg;
  adapt->add_option("--bundle", ad_bundle)->required()->check(CLI::ExistingFile);
  adapt->add_option("--image", ad_image)->required()->check(CLI::ExistingFile);
  adapt->add_option("--masks", ad_masks)->required()->check(CLI::ExistingFile);
  adapt->add_option("--steps", ad_cfg.steps)->capture_default_str();
  adapt->add_option("--lr", ad_cfg.learning_rate)->capture_default_str();
  adapt->add_option("-o,--out", ad_out, "output bundle (default: overwrite --bundle)");
  adapt->callback([&] { run = [&] { return cmd_adapt(g, ad_bundle, ad_image, ad_masks, ad_cfg, ad_out); }; });

  auto* segment = app.add_subcommand("segment", "segment frames with a bundle");
  fs::path sg_bundle;
  std::string sg_input, sg_output = "-";
  bool sg_debug = false, sg_strict = false;
  segment->add_option("--bundle", sg_bundle)->required()->check(CLI::ExistingFile);
  segment->add_option("-i,--input", sg_input, "image file, directory, or - for a raw frame stream on stdin")->required();
  segment->add_option("-o,--output", sg_output, "output directory, or - to stream frames to stdout")->capture_default_str();
  segment->add_flag("--debug", sg_debug, "write per-frame pass diagnostics");
  segment->add_flag("--strict", sg_strict, "stop with a nonzero exit on the first failed frame");
  segment->callback([&] { run = [&] { return cmd_segment(g, sg_bundle, sg_input, sg_output, sg_debug, sg_strict); }; });

  auto* ev = app.add_subcommand("eval", "run the synthetic generalization suite");
  std::string ev_suite = "all";
  int ev_frames = 100, ev_size = 84, ev_tp = 10;
  std::uint64_t ev_seed = 1;
  bool ev_adapt = false, ev_det = false;
  std::optional<fs::path> ev_report;
  ev->add_option("--suite", ev_suite, "color_easy|color_hard|video_easy|video_hard|all")->capture_default_str();
  ev->add_option("--frames", ev_frames, "frames per setting")->capture_default_str();
  ev->add_option("--seed", ev_seed)->capture_default_str();
  ev->add_option("--size", ev_size, "square frame size")->capture_default_str();
  ev->add_flag("--adapt", ev_adapt, "adapt weights on the reference frame first");
  ev->add_flag("--deterministic", ev_det, "omit wall-time fields");
  ev->add_option("--report", ev_report, "also write the report JSON here");
  ev->add_option("--throughput-frames", ev_tp, "frames per backend for the throughput table (0 disables)")
      ->capture_default_str();
  ev->callback([&] {
    run = [&] { return cmd_eval(g, ev_suite, ev_frames, ev_seed, ev_size, ev_adapt, ev_det, ev_report, ev_tp); };
  });

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  service::ServiceConfig sv_cfg;
  std::string sv_store;
  serve->add_option("--host", sv_cfg.host)->capture_default_str();
  serve->add_option("--port", sv_cfg.port)->capture_default_str();
  serve->add_option("--max-concurrency", sv_cfg.max_concurrency)->capture_default_str();
  serve->add_option("--store", sv_store, "bundle store directory (created if missing)");
  serve->callback([&] {
    run = [&] {
      if (!sv_store.empty()) {
        fs::create_directories(sv_store);
        sv_cfg.store_dir = sv_store;
      }
      return cmd_serve(g, sv_cfg);
    };
  });

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    return run();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.kind() == Error::Kind::kNotFound ? 3 : 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
