// crowdmap: density-map ground truth generation, augmentation, multi-stream
// network training, and count evaluation, driven by replayable manifests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "crowdmap/annotations.hpp"
#include "crowdmap/augment.hpp"
#include "crowdmap/density_core.hpp"
#include "crowdmap/density_map.hpp"
#include "crowdmap/grad_check.hpp"
#include "crowdmap/hybrid_gt.hpp"
#include "crowdmap/image.hpp"
#include "crowdmap/manifest.hpp"
#include "crowdmap/metrics.hpp"
#include "crowdmap/msnn.hpp"
#include "crowdmap/parallel.hpp"
#include "crowdmap/version.hpp"

namespace fs = std::filesystem;
using crowdmap::RunManifest;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

std::string sanitize_id(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out;
}

std::string dmap_bytes(const crowdmap::DensityMap& map) {
  std::ostringstream os(std::ios::binary);
  crowdmap::write_dmap(os, map);
  return os.str();
}

std::string pgm_bytes(const crowdmap::GrayImage& img) {
  std::ostringstream os(std::ios::binary);
  crowdmap::write_pgm(os, img);
  return os.str();
}

std::string checkpoint_bytes(const crowdmap::Network& net) {
  std::ostringstream os(std::ios::binary);
  crowdmap::save_checkpoint(net, os);
  return os.str();
}

double cfg_num(const json& config, const std::string& field) {
  return crowdmap::config_value(config, field).get<double>();
}

int cfg_int(const json& config, const std::string& field) {
  return crowdmap::config_value(config, field).get<int>();
}

std::uint64_t cfg_u64(const json& config, const std::string& field) {
  return crowdmap::config_value(config, field).get<std::uint64_t>();
}

std::string cfg_str(const json& config, const std::string& field) {
  return crowdmap::config_value(config, field).get<std::string>();
}

// Tracks CLI option objects so resolved values can be tagged "user" when
// given on the command line, or with the default's origin otherwise.
class ConfigBuilder {
 public:
  explicit ConfigBuilder(CLI::App* cmd) : cmd_(cmd) {}

  template <typename T>
  void add(const std::string& field, const std::string& flag, const T& value,
           const std::string& default_provenance) {
    const CLI::Option* opt = cmd_->get_option_no_throw(flag);
    const bool user_set = opt != nullptr && opt->count() > 0;
    config_[field] = {{"value", value},
                      {"provenance", user_set ? "user" : default_provenance}};
  }

  const json& config() const { return config_; }

 private:
  CLI::App* cmd_;
  json config_ = json::object();
};

// ---------------------------------------------------------------------------
// gen-gt

struct GenGtCli {
  std::string annotations;
  std::string out;
  std::string method = "fixed";
  std::string detections;
  std::string boxes_out;
  double sigma = 4.0;
  double trunc = 3.0;
  int k = 3;
  double beta = 0.3;
  double fallback_sigma = 4.0;
  double min_sigma = 0.5;
  int t_overlaps = 3;
  double crowded_sigma = 4.0;
  double sigma_scale = 1.0;
  double eps = 1e-6;
  std::string overlap_against = "regions";
};

void run_gen_gt(const json& config) {
  const std::string method = cfg_str(config, "method");
  const std::string ann_path = cfg_str(config, "annotations");
  const std::string out_dir = cfg_str(config, "out");

  RunManifest manifest("gen-gt");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }

  const auto annotations = crowdmap::parse_annotations(ann_path);
  manifest.add_input(ann_path);

  std::vector<crowdmap::DetectionSet> detection_sets;
  if (method == "face") {
    const std::string det_path = cfg_str(config, "detections");
    detection_sets = crowdmap::parse_detections(det_path);
    manifest.add_input(det_path);
  }

  fs::create_directories(out_dir);

  std::vector<crowdmap::DensityMap> maps(annotations.size());
  std::vector<std::vector<crowdmap::PersonBox>> boxes(annotations.size());
  crowdmap::parallel_for(annotations.size(), [&](std::size_t i) {
    const auto& ann = annotations[i];
    if (method == "fixed") {
      maps[i] = crowdmap::gen_fixed(ann, cfg_num(config, "sigma"),
                                    cfg_num(config, "trunc"));
    } else if (method == "knn") {
      crowdmap::KnnConfig knn;
      knn.k = cfg_int(config, "k");
      knn.beta = cfg_num(config, "beta");
      knn.fallback_sigma = cfg_num(config, "fallback-sigma");
      knn.min_sigma = cfg_num(config, "min-sigma");
      knn.truncation_radius_in_sigmas = cfg_num(config, "trunc");
      maps[i] = crowdmap::gen_knn(ann, knn);
    } else {
      crowdmap::FaceGtConfig face;
      face.t_overlaps = cfg_int(config, "t-overlaps");
      face.crowded_sigma = cfg_num(config, "crowded-sigma");
      face.sigma_scale = cfg_num(config, "sigma-scale");
      face.distance_epsilon = cfg_num(config, "eps");
      face.truncation_radius_in_sigmas = cfg_num(config, "trunc");
      face.overlap_against = cfg_str(config, "overlap-against") == "detections"
                                 ? crowdmap::OverlapAgainst::kDetections
                                 : crowdmap::OverlapAgainst::kRegions;
      auto result = crowdmap::gen_face(
          ann, crowdmap::detections_for(detection_sets, ann.image_id), face);
      maps[i] = std::move(result.map);
      boxes[i] = std::move(result.boxes);
    }
  });

  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string path =
        (fs::path(out_dir) / (sanitize_id(annotations[i].image_id) + ".dmap"))
            .string();
    crowdmap::atomic_write_file(path, dmap_bytes(maps[i]));
    manifest.add_output(path);
  }

  if (method == "face") {
    json sidecar = json::array();
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      sidecar.push_back(crowdmap::person_boxes_to_json(
          annotations[i].image_id, boxes[i]));
    }
    const std::string boxes_path = cfg_str(config, "boxes-out");
    crowdmap::atomic_write_file(boxes_path, sidecar.dump(2) + "\n");
    manifest.add_output(boxes_path);
  }

  manifest.write((fs::path(out_dir) / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// augment

struct AugmentCli {
  std::string images;
  std::string annotations;
  std::string maps;
  std::string out;
  int window = 256;
  int stride = 70;
  std::uint64_t seed = 0;
  double noise_stddev = 5.0;
  double brightness = 20.0;
  double contrast_lo = 0.8;
  double contrast_hi = 1.25;
};

void run_augment(const json& config) {
  RunManifest manifest("augment");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }
  const std::uint64_t seed = cfg_u64(config, "seed");
  manifest.set_seed(seed);

  const std::string ann_path = cfg_str(config, "annotations");
  const auto annotations = crowdmap::parse_annotations(ann_path);
  manifest.add_input(ann_path);

  const crowdmap::PatchSpec patch_spec{cfg_int(config, "window"),
                                       cfg_int(config, "stride")};
  crowdmap::NoiseSpec noise;
  noise.gaussian_stddev = cfg_num(config, "noise-stddev");
  noise.brightness_delta = cfg_num(config, "brightness");
  noise.contrast_lo = cfg_num(config, "contrast-lo");
  noise.contrast_hi = cfg_num(config, "contrast-hi");

  const std::string out_dir = cfg_str(config, "out");
  fs::create_directories(out_dir);

  std::vector<crowdmap::ImageAnnotation> patch_annotations;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& ann = annotations[i];
    const std::string stem = sanitize_id(ann.image_id);
    const std::string img_path =
        (fs::path(cfg_str(config, "images")) / (stem + ".pgm")).string();
    const std::string map_path =
        (fs::path(cfg_str(config, "maps")) / (stem + ".dmap")).string();
    const crowdmap::GrayImage image = crowdmap::read_pgm(img_path);
    const crowdmap::DensityMap map = crowdmap::read_dmap(map_path);
    manifest.add_input(img_path);
    manifest.add_input(map_path);
    if (image.shape() != ann.shape) {
      throw crowdmap::ValidationError("image '" + ann.image_id +
                                      "' does not match its annotated shape");
    }

    const auto origins = crowdmap::slide_patches(ann.shape, patch_spec);
    if (origins.empty()) {
      manifest.add_warning("image '" + ann.image_id +
                           "' is smaller than the window; no patches");
      continue;
    }

    std::mt19937_64 rng(crowdmap::per_image_seed(seed, i));
    for (const auto& origin : origins) {
      crowdmap::Patch patch =
          crowdmap::cut_patch(ann, map, origin, patch_spec.window);
      const crowdmap::GrayImage raw =
          crowdmap::cut_image(image, origin, patch_spec.window);
      crowdmap::NoiseDraw draw;
      const crowdmap::GrayImage noisy =
          crowdmap::apply_noise(raw, noise, rng, &draw);

      const std::string patch_stem = sanitize_id(patch.annotation.image_id);
      const std::string out_pgm =
          (fs::path(out_dir) / (patch_stem + ".pgm")).string();
      const std::string out_dmap =
          (fs::path(out_dir) / (patch_stem + ".dmap")).string();
      crowdmap::atomic_write_file(out_pgm, pgm_bytes(noisy));
      crowdmap::atomic_write_file(out_dmap, dmap_bytes(patch.map));
      manifest.add_output(out_pgm);
      manifest.add_output(out_dmap);
      manifest.add_record({{"source", ann.image_id},
                           {"origin", {origin.row, origin.col}},
                           {"contrast", draw.contrast},
                           {"brightness", draw.brightness},
                           {"mass_discrepancy", patch.mass_discrepancy}});
      patch_annotations.push_back(std::move(patch.annotation));
    }
  }

  const std::string ann_out = (fs::path(out_dir) / "annotations.json").string();
  crowdmap::atomic_write_file(
      ann_out, crowdmap::annotations_to_json(patch_annotations).dump(2) + "\n");
  manifest.add_output(ann_out);
  manifest.write((fs::path(out_dir) / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// train

struct TrainCli {
  std::string data;
  std::string out;
  std::string net_config;
  int streams = 2;
  int shrink = 1;
  double lr = 1e-5;
  int batch = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<crowdmap::Tensor> images;
  std::vector<crowdmap::DensityMap> maps;
  std::vector<std::string> stems;
};

Dataset load_dataset(const std::string& dir, RunManifest* manifest) {
  Dataset data;
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".pgm") {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) {
    throw crowdmap::IoError("no .pgm images found in '" + dir + "'");
  }
  for (const std::string& stem : stems) {
    const std::string pgm = (fs::path(dir) / (stem + ".pgm")).string();
    const std::string dmap = (fs::path(dir) / (stem + ".dmap")).string();
    if (!fs::exists(dmap)) {
      throw crowdmap::IoError("missing density map for '" + pgm + "'");
    }
    data.images.push_back(crowdmap::tensor_from_image(crowdmap::read_pgm(pgm)));
    data.maps.push_back(crowdmap::read_dmap(dmap));
    data.stems.push_back(stem);
    if (manifest) {
      manifest->add_input(pgm);
      manifest->add_input(dmap);
    }
  }
  return data;
}

void run_train(const json& config) {
  RunManifest manifest("train");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }
  const std::uint64_t seed = cfg_u64(config, "seed");
  manifest.set_seed(seed);

  const Dataset data = load_dataset(cfg_str(config, "data"), &manifest);

  crowdmap::NetworkSpec spec;
  const std::string net_config = cfg_str(config, "net-config");
  if (!net_config.empty()) {
    spec = crowdmap::load_network_spec(net_config);
    manifest.add_input(net_config);
  } else {
    spec = crowdmap::shrink_channels(
        crowdmap::preset(cfg_int(config, "streams")), cfg_int(config, "shrink"));
  }

  crowdmap::Network net(spec);
  net.init_weights(seed);

  crowdmap::TrainConfig train_cfg;
  train_cfg.learning_rate = cfg_num(config, "lr");
  train_cfg.batch_size = cfg_int(config, "batch");
  train_cfg.epochs = cfg_int(config, "epochs");
  train_cfg.seed = seed;
  const crowdmap::TrainLog log =
      crowdmap::train(net, data.images, data.maps, train_cfg);

  const std::string out_dir = cfg_str(config, "out");
  fs::create_directories(out_dir);

  const std::string ckpt = (fs::path(out_dir) / "checkpoint.msnw").string();
  crowdmap::atomic_write_file(ckpt, checkpoint_bytes(net));
  manifest.add_output(ckpt);

  std::string csv = "epoch,mean_loss,train_mae\n";
  for (std::size_t e = 0; e < log.epochs.size(); ++e) {
    csv += std::to_string(e + 1) + "," +
           crowdmap::format_double(log.epochs[e].mean_loss) + "," +
           crowdmap::format_double(log.epochs[e].train_mae) + "\n";
  }
  const std::string log_path = (fs::path(out_dir) / "loss_log.csv").string();
  crowdmap::atomic_write_file(log_path, csv);
  manifest.add_output(log_path);

  manifest.write((fs::path(out_dir) / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// eval

struct EvalCli {
  std::string checkpoint;
  std::string images;
  std::string annotations;
  std::string out;
};

void run_eval(const json& config) {
  RunManifest manifest("eval");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }

  const std::string ckpt_path = cfg_str(config, "checkpoint");
  const crowdmap::Network net = crowdmap::load_checkpoint(ckpt_path);
  manifest.add_input(ckpt_path);

  const std::string ann_path = cfg_str(config, "annotations");
  const auto annotations = crowdmap::parse_annotations(ann_path);
  manifest.add_input(ann_path);

  const std::string image_dir = cfg_str(config, "images");
  const crowdmap::EvalReport report = crowdmap::evaluate(
      net, annotations,
      [&](const std::string& id) -> std::optional<crowdmap::GrayImage> {
        const std::string path =
            (fs::path(image_dir) / (sanitize_id(id) + ".pgm")).string();
        if (!fs::exists(path)) return std::nullopt;
        return crowdmap::read_pgm(path);
      });

  for (const auto& missing : report.missing) {
    const std::string warning = "image '" + missing.image_id + "' not found";
    manifest.add_warning(warning);
    std::cerr << "warning: " << warning << "\n";
  }

  const std::string out_path = cfg_str(config, "out");
  crowdmap::atomic_write_file(out_path, crowdmap::report_to_csv(report));
  manifest.add_output(out_path);
  manifest.write(out_path + ".manifest.json");
}

// ---------------------------------------------------------------------------
// render

struct RenderCli {
  std::string map;
  std::string out;
  std::string boxes;
  std::string image_id;
};

struct OverlayBox {
  crowdmap::BBox box;
  bool crowded = false;
};

struct OverlaySet {
  std::string image_id;
  std::vector<OverlayBox> boxes;
};

// Accepts both plain detection files and the boxes sidecar (which adds a
// "crowded" flag per box).
std::vector<OverlaySet> parse_overlays(const std::string& path) {
  const auto sets = crowdmap::parse_detections(path);
  const json raw = crowdmap::load_manifest(path);
  std::vector<OverlaySet> out;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    OverlaySet set;
    set.image_id = sets[s].image_id;
    for (std::size_t b = 0; b < sets[s].boxes.size(); ++b) {
      OverlayBox ob;
      ob.box = sets[s].boxes[b];
      ob.crowded = raw[s].at("boxes")[b].value("crowded", false);
      set.boxes.push_back(ob);
    }
    out.push_back(std::move(set));
  }
  return out;
}

void render_one(const std::string& map_path, const std::string& out_path,
                const std::vector<OverlaySet>& overlays,
                const std::string& image_id, RunManifest* manifest) {
  const crowdmap::DensityMap map = crowdmap::read_dmap(map_path);
  crowdmap::GrayImage img = crowdmap::render_to_image(map);
  // Sidecar boxes are in source-image pixels; interpolated boxes draw
  // bright, crowded fallbacks mid-gray.
  for (const auto& set : overlays) {
    if (!image_id.empty() && set.image_id != image_id) continue;
    for (const auto& ob : set.boxes) {
      crowdmap::draw_box_outline(img, ob.box, ob.crowded ? 160 : 255);
    }
  }
  crowdmap::atomic_write_file(out_path, pgm_bytes(img));
  if (manifest) {
    manifest->add_input(map_path);
    manifest->add_output(out_path);
  }
}

void run_render(const json& config) {
  RunManifest manifest("render");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }

  const std::string map_path = cfg_str(config, "map");
  const std::string out_path = cfg_str(config, "out");
  const std::string boxes_path = cfg_str(config, "boxes");

  std::vector<OverlaySet> overlays;
  if (!boxes_path.empty()) {
    overlays = parse_overlays(boxes_path);
    manifest.add_input(boxes_path);
  }

  if (fs::is_directory(map_path)) {
    fs::create_directories(out_path);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(map_path)) {
      if (entry.path().extension() == ".dmap") {
        stems.push_back(entry.path().stem().string());
      }
    }
    std::sort(stems.begin(), stems.end());
    for (const std::string& stem : stems) {
      render_one((fs::path(map_path) / (stem + ".dmap")).string(),
                 (fs::path(out_path) / (stem + ".pgm")).string(), overlays,
                 stem, &manifest);
    }
    manifest.write((fs::path(out_path) / "manifest.json").string());
  } else {
    render_one(map_path, out_path, overlays, cfg_str(config, "image"),
               &manifest);
    manifest.write(out_path + ".manifest.json");
  }
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckCli {
  int streams = 2;
  int shrink = 4;
  int rows = 16;
  int cols = 16;
  std::uint64_t seed = 1;
  int samples = 24;
  double tolerance = 1e-4;
  std::string out;
};

bool run_gradcheck(const json& config) {
  RunManifest manifest("gradcheck");
  for (auto it = config.begin(); it != config.end(); ++it) {
    manifest.set_config(it.key(), it.value().at("value"),
                        it.value().at("provenance").get<std::string>());
  }
  const std::uint64_t seed = cfg_u64(config, "seed");
  manifest.set_seed(seed);

  const int rows = cfg_int(config, "rows");
  const int cols = cfg_int(config, "cols");

  crowdmap::Network net(crowdmap::shrink_channels(
      crowdmap::preset(cfg_int(config, "streams")), cfg_int(config, "shrink")));
  // Larger-than-training init keeps pre-activations clear of rectifier
  // kinks, so few finite-difference samples get discarded.
  net.init_weights(seed, 0.2);

  std::mt19937_64 rng(seed);
  crowdmap::Tensor input({1, rows, cols});
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : input.values) v = dist(rng);

  crowdmap::ImageAnnotation ann;
  ann.image_id = "gradcheck";
  ann.shape = crowdmap::Shape{rows, cols};
  std::uniform_real_distribution<double> row_pos(0.0, rows - 1.0);
  std::uniform_real_distribution<double> col_pos(0.0, cols - 1.0);
  for (int i = 0; i < 4; ++i) {
    ann.heads.push_back(crowdmap::Point2D{row_pos(rng), col_pos(rng)});
  }
  const crowdmap::DensityMap gt = crowdmap::downscale_preserving_count(
      crowdmap::gen_fixed(ann, 2.0), 4);

  crowdmap::GradCheckConfig check_cfg;
  check_cfg.tolerance = cfg_num(config, "tolerance");
  check_cfg.samples_per_group = cfg_int(config, "samples");
  check_cfg.seed = seed;
  const crowdmap::GradCheckReport report =
      crowdmap::grad_check(net, input, gt, check_cfg);

  const std::string text = crowdmap::format_report(report);
  std::cout << text;
  const std::string out_path = cfg_str(config, "out");
  if (!out_path.empty()) {
    crowdmap::atomic_write_file(out_path, text);
    manifest.add_output(out_path);
    manifest.write(out_path + ".manifest.json");
  }
  return report.pass;
}

// ---------------------------------------------------------------------------
// replay

int run_replay(const std::string& manifest_path) {
  const json manifest = crowdmap::load_manifest(manifest_path);
  const std::string command = manifest.at("command").get<std::string>();
  const json& config = manifest.at("config");
  if (command == "gen-gt") {
    run_gen_gt(config);
  } else if (command == "augment") {
    run_augment(config);
  } else if (command == "train") {
    run_train(config);
  } else if (command == "eval") {
    run_eval(config);
  } else if (command == "render") {
    run_render(config);
  } else if (command == "gradcheck") {
    return run_gradcheck(config) ? 0 : 1;
  } else {
    throw crowdmap::ParseError("manifest names unknown command '" + command +
                               "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("crowdmap ") + crowdmap::kArtifactVersion +
               " - crowd density maps, multi-stream networks, and counting"};
  app.require_subcommand(1);

  // gen-gt ------------------------------------------------------------------
  GenGtCli gg;
  CLI::App* gen_gt = app.add_subcommand(
      "gen-gt", "Generate ground-truth density maps from head annotations");
  gen_gt->add_option("--annotations", gg.annotations, "annotation JSON file")
      ->required();
  gen_gt->add_option("--out", gg.out, "output directory")->required();
  gen_gt->add_option("--method", gg.method, "fixed | knn | face")
      ->required()
      ->check(CLI::IsMember({"fixed", "knn", "face"}));
  gen_gt->add_option("--sigma", gg.sigma, "fixed-kernel sigma (pixels)");
  gen_gt->add_option("--trunc", gg.trunc, "kernel truncation radius in sigmas");
  gen_gt->add_option("--k", gg.k, "neighbor count for the knn method");
  gen_gt->add_option("--beta", gg.beta, "sigma = beta * mean knn distance");
  gen_gt->add_option("--fallback-sigma", gg.fallback_sigma,
                     "sigma for heads without neighbors");
  gen_gt->add_option("--min-sigma", gg.min_sigma, "lower bound on knn sigma");
  gen_gt->add_option("--detections", gg.detections,
                     "face detection JSON file (face method)");
  gen_gt->add_option("--t-overlaps", gg.t_overlaps,
                     "crowdedness threshold on overlap counts");
  gen_gt->add_option("--crowded-sigma", gg.crowded_sigma,
                     "fixed sigma for crowded persons");
  gen_gt->add_option("--sigma-scale", gg.sigma_scale,
                     "multiplier from box size to sigma");
  gen_gt->add_option("--eps", gg.eps, "distance epsilon for the weights");
  gen_gt->add_option("--overlap-against", gg.overlap_against,
                     "count overlaps against: regions | detections")
      ->check(CLI::IsMember({"regions", "detections"}));
  gen_gt->add_option("--boxes-out", gg.boxes_out,
                     "sidecar path for interpolated boxes (face method)");

  // augment -----------------------------------------------------------------
  AugmentCli au;
  CLI::App* augment = app.add_subcommand(
      "augment", "Sliding-window patches with photometric noise");
  augment->add_option("--images", au.images, "directory of <id>.pgm images")
      ->required();
  augment->add_option("--annotations", au.annotations, "annotation JSON file")
      ->required();
  augment->add_option("--maps", au.maps, "directory of <id>.dmap maps")
      ->required();
  augment->add_option("--out", au.out, "output directory")->required();
  augment->add_option("--window", au.window, "window side (pixels)");
  augment->add_option("--stride", au.stride, "window displacement (pixels)");
  augment->add_option("--seed", au.seed, "noise seed");
  augment->add_option("--noise-stddev", au.noise_stddev,
                      "gaussian pixel noise stddev");
  augment->add_option("--brightness", au.brightness,
                      "brightness delta range (+/-)");
  augment->add_option("--contrast-lo", au.contrast_lo, "contrast lower bound");
  augment->add_option("--contrast-hi", au.contrast_hi, "contrast upper bound");

  // train -------------------------------------------------------------------
  TrainCli tr;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "Train a multi-stream network on image/map pairs");
  train_cmd->add_option("--data", tr.data,
                        "directory of paired <stem>.pgm and <stem>.dmap")
      ->required();
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--streams", tr.streams, "preset stream count 1..4")
      ->check(CLI::Range(1, 4));
  train_cmd->add_option("--shrink", tr.shrink,
                        "divide preset channel counts (toy scale)");
  train_cmd->add_option("--net-config", tr.net_config,
                        "network spec JSON (overrides --streams/--shrink)");
  train_cmd->add_option("--lr", tr.lr, "learning rate");
  train_cmd->add_option("--batch", tr.batch, "batch size");
  train_cmd->add_option("--epochs", tr.epochs, "epoch count");
  train_cmd->add_option("--seed", tr.seed, "init and shuffle seed");

  // eval --------------------------------------------------------------------
  EvalCli ev;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Report per-image counts and MAE/RMSE for a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--images", ev.images, "directory of <id>.pgm images")
      ->required();
  eval_cmd->add_option("--annotations", ev.annotations, "annotation JSON file")
      ->required();
  eval_cmd->add_option("--out", ev.out, "report CSV path")->required();

  // render ------------------------------------------------------------------
  RenderCli re;
  CLI::App* render_cmd = app.add_subcommand(
      "render", "Export density maps as grayscale PGM images");
  render_cmd->add_option("--map", re.map, ".dmap file or directory")
      ->required();
  render_cmd->add_option("--out", re.out, "output PGM file or directory")
      ->required();
  render_cmd->add_option("--boxes", re.boxes, "boxes sidecar to overlay");
  render_cmd->add_option("--image", re.image_id,
                         "image id to pick from the sidecar");

  // gradcheck ---------------------------------------------------------------
  GradCheckCli gc;
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference check of the backward pass");
  gradcheck_cmd->add_option("--streams", gc.streams, "preset stream count");
  gradcheck_cmd->add_option("--shrink", gc.shrink, "channel divisor");
  gradcheck_cmd->add_option("--rows", gc.rows, "input rows");
  gradcheck_cmd->add_option("--cols", gc.cols, "input cols");
  gradcheck_cmd->add_option("--seed", gc.seed, "instance seed");
  gradcheck_cmd->add_option("--samples", gc.samples,
                            "parameters sampled per layer");
  gradcheck_cmd->add_option("--tolerance", gc.tolerance,
                            "max relative error allowed");
  gradcheck_cmd->add_option("--out", gc.out, "report file path");

  // replay ------------------------------------------------------------------
  std::string replay_manifest;
  CLI::App* replay_cmd = app.add_subcommand(
      "replay", "Re-run a command from its manifest, reproducing outputs");
  replay_cmd->add_option("--manifest", replay_manifest, "manifest JSON path")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_gt->parsed()) {
      if (gg.method == "face" && gg.detections.empty()) {
        std::cerr << "error: --method face requires --detections\n";
        return 2;
      }
      if (gg.boxes_out.empty()) {
        gg.boxes_out = (fs::path(gg.out) / "boxes.json").string();
      }
      ConfigBuilder cb(gen_gt);
      cb.add("annotations", "--annotations", gg.annotations, "user");
      cb.add("out", "--out", gg.out, "user");
      cb.add("method", "--method", gg.method, "user");
      cb.add("sigma", "--sigma", gg.sigma, "paper");
      cb.add("trunc", "--trunc", gg.trunc, "artifact-default");
      cb.add("k", "--k", gg.k, "artifact-default");
      cb.add("beta", "--beta", gg.beta, "artifact-default");
      cb.add("fallback-sigma", "--fallback-sigma", gg.fallback_sigma,
             "artifact-default");
      cb.add("min-sigma", "--min-sigma", gg.min_sigma, "artifact-default");
      cb.add("detections", "--detections", gg.detections, "user");
      cb.add("t-overlaps", "--t-overlaps", gg.t_overlaps, "artifact-default");
      cb.add("crowded-sigma", "--crowded-sigma", gg.crowded_sigma,
             "artifact-default");
      cb.add("sigma-scale", "--sigma-scale", gg.sigma_scale,
             "artifact-default");
      cb.add("eps", "--eps", gg.eps, "artifact-default");
      cb.add("overlap-against", "--overlap-against", gg.overlap_against,
             "artifact-default");
      cb.add("boxes-out", "--boxes-out", gg.boxes_out, "artifact-default");
      run_gen_gt(cb.config());
    } else if (augment->parsed()) {
      ConfigBuilder cb(augment);
      cb.add("images", "--images", au.images, "user");
      cb.add("annotations", "--annotations", au.annotations, "user");
      cb.add("maps", "--maps", au.maps, "user");
      cb.add("out", "--out", au.out, "user");
      cb.add("window", "--window", au.window, "paper");
      cb.add("stride", "--stride", au.stride, "paper");
      cb.add("seed", "--seed", au.seed, "artifact-default");
      cb.add("noise-stddev", "--noise-stddev", au.noise_stddev,
             "artifact-default");
      cb.add("brightness", "--brightness", au.brightness, "artifact-default");
      cb.add("contrast-lo", "--contrast-lo", au.contrast_lo,
             "artifact-default");
      cb.add("contrast-hi", "--contrast-hi", au.contrast_hi,
             "artifact-default");
      run_augment(cb.config());
    } else if (train_cmd->parsed()) {
      ConfigBuilder cb(train_cmd);
      cb.add("data", "--data", tr.data, "user");
      cb.add("out", "--out", tr.out, "user");
      cb.add("streams", "--streams", tr.streams, "artifact-default");
      cb.add("shrink", "--shrink", tr.shrink, "artifact-default");
      cb.add("net-config", "--net-config", tr.net_config, "user");
      cb.add("lr", "--lr", tr.lr, "paper");
      cb.add("batch", "--batch", tr.batch, "paper");
      cb.add("epochs", "--epochs", tr.epochs, "artifact-default");
      cb.add("seed", "--seed", tr.seed, "artifact-default");
      run_train(cb.config());
    } else if (eval_cmd->parsed()) {
      ConfigBuilder cb(eval_cmd);
      cb.add("checkpoint", "--checkpoint", ev.checkpoint, "user");
      cb.add("images", "--images", ev.images, "user");
      cb.add("annotations", "--annotations", ev.annotations, "user");
      cb.add("out", "--out", ev.out, "user");
      run_eval(cb.config());
    } else if (render_cmd->parsed()) {
      ConfigBuilder cb(render_cmd);
      cb.add("map", "--map", re.map, "user");
      cb.add("out", "--out", re.out, "user");
      cb.add("boxes", "--boxes", re.boxes, "user");
      cb.add("image", "--image", re.image_id, "user");
      run_render(cb.config());
    } else if (gradcheck_cmd->parsed()) {
      ConfigBuilder cb(gradcheck_cmd);
      cb.add("streams", "--streams", gc.streams, "artifact-default");
      cb.add("shrink", "--shrink", gc.shrink, "artifact-default");
      cb.add("rows", "--rows", gc.rows, "artifact-default");
      cb.add("cols", "--cols", gc.cols, "artifact-default");
      cb.add("seed", "--seed", gc.seed, "artifact-default");
      cb.add("samples", "--samples", gc.samples, "artifact-default");
      cb.add("tolerance", "--tolerance", gc.tolerance, "artifact-default");
      cb.add("out", "--out", gc.out, "user");
      if (!run_gradcheck(cb.config())) return 1;
    } else if (replay_cmd->parsed()) {
      return run_replay(replay_manifest);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
