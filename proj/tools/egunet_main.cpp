// Command-line front end: simulate / gtchain / bundle / train / unmix /
// endmembers / baseline / eval, sharing one JSON run config.  Values resolve
// as defaults, then config-file entries, then command-line flags, and every
// run writes the resolved tree next to its outputs so it can be replayed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "egunet/baselines.hpp"
#include "egunet/bundles.hpp"
#include "egunet/dataset_io.hpp"
#include "egunet/errors.hpp"
#include "egunet/metrics.hpp"
#include "egunet/model.hpp"
#include "egunet/scene.hpp"
#include "egunet/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// logging

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel parse_log_level(const std::string& s) {
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  throw egu::ConfigError("log_level must be quiet, info or debug (got '" + s + "')");
}

struct Logger {
  LogLevel level = LogLevel::Info;
  void info(const std::string& msg) const {
    if (level >= LogLevel::Info) std::cerr << msg << "\n";
  }
  void debug(const std::string& msg) const {
    if (level >= LogLevel::Debug) std::cerr << msg << "\n";
  }
};

// ---------------------------------------------------------------------------
// config resolution

// Rejects keys the defaults tree does not know and values whose JSON type
// disagrees with the default's type (ints are fine where doubles live).
void check_against_schema(const json& provided, const json& schema, const std::string& scope) {
  for (const auto& [key, value] : provided.items()) {
    if (!schema.contains(key)) {
      throw egu::ConfigError("config: unknown key '" + scope + key + "'");
    }
    const json& ref = schema.at(key);
    bool ok = true;
    if (ref.is_object()) {
      if (!value.is_object()) ok = false;
      else check_against_schema(value, ref, scope + key + ".");
    } else if (ref.is_number() && !ref.is_boolean()) {
      ok = value.is_number();
    } else if (ref.is_boolean()) {
      ok = value.is_boolean();
    } else if (ref.is_string()) {
      ok = value.is_string();
    } else if (ref.is_array()) {
      ok = value.is_array();
    }
    if (!ok) {
      throw egu::ConfigError("config: key '" + scope + key + "' has the wrong type");
    }
  }
}

void merge_section(json& tree, const json& provided) {
  for (const auto& [key, value] : provided.items()) tree[key] = value;
}

// Binds CLI flags to slots in the resolved tree; a flag the user actually
// passed overrides whatever the config file said.
struct TreeBinder {
  std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> bound;

  template <class T>
  void bind(CLI::Option* opt, const std::string& key, const T* storage) {
    bound.emplace_back(opt, [key, storage](json& tree) { tree[key] = *storage; });
  }
  void apply(json& tree) const {
    for (const auto& [opt, setter] : bound) {
      if (opt->count() > 0) setter(tree);
    }
  }
};

struct GlobalConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  std::string log_level = "info";
  Logger log;

  json as_json() const {
    return {{"seed", seed}, {"threads", threads}, {"out_dir", out_dir}, {"log_level", log_level}};
  }
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw egu::IoError(path + ": cannot open config file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw egu::ConfigError(path + ": config is not valid JSON (" + e.what() + ")");
  }
}

fs::path ensure_out_dir(const GlobalConfig& g) {
  fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw egu::IoError(g.out_dir + ": cannot create output directory (" + ec.message() + ")");
  return dir;
}

void write_snapshot(const fs::path& dir, const std::string& sub, const GlobalConfig& g,
                    const json& tree) {
  json snap = g.as_json();
  snap[sub] = tree;
  fs::path path = dir / (sub + "_config.json");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw egu::IoError(path.string() + ": cannot write config snapshot");
  out << snap.dump(2) << "\n";
  if (!out) throw egu::IoError(path.string() + ": write failed");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// subcommand bodies; each receives its fully resolved parameter tree

void run_simulate(const GlobalConfig& g, const json& t) {
  egu::SceneSpec spec;
  spec.height = t.at("height").get<int>();
  spec.width = t.at("width").get<int>();
  spec.bands = t.at("bands").get<int>();
  spec.classes = t.at("classes").get<int>();
  spec.softmax_temp = t.at("softmax_temp").get<double>();
  spec.field_sigma = t.at("field_sigma").get<double>();
  spec.pure_per_class = t.at("pure_per_class").get<int>();
  spec.scale_min = t.at("scale_min").get<double>();
  spec.scale_max = t.at("scale_max").get<double>();
  spec.scale_sigma = t.at("scale_sigma").get<double>();
  spec.snr_db = t.at("snr_db").get<double>();
  spec.impulse_fraction = t.at("impulse_fraction").get<double>();
  spec.min_separation = t.at("min_separation").get<double>();

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "simulate", g, t);

  g.log.info("simulate: generating " + std::to_string(spec.height) + "x" +
             std::to_string(spec.width) + " cube, " + std::to_string(spec.bands) + " bands, " +
             std::to_string(spec.classes) + " classes");
  egu::Scene scene = egu::generate_scene(spec, g.seed);

  egu::DatasetMeta meta;
  meta.seed = g.seed;
  meta.provenance =
      "synthetic linear mixture: parametric spectra, correlated abundance fields, "
      "brightness scaling, Gaussian and impulse noise";
  egu::write_cube((dir / "cube.hsux").string(), scene.cube, meta);
  egu::write_abundance((dir / "abundance_gt.hsux").string(), scene.abundance, meta);
  egu::write_endmembers((dir / "endmembers_gt.hsux").string(), scene.endmembers, meta);
  g.log.info("simulate: wrote cube.hsux, abundance_gt.hsux, endmembers_gt.hsux");
}

void run_gtchain(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  const std::string classmap_path = t.at("classmap").get<std::string>();
  const int factor = t.at("factor").get<int>();
  const double purity = t.at("purity").get<double>();
  const int classes = t.at("classes").get<int>();
  if (cube_path.empty() || classmap_path.empty()) {
    throw egu::ConfigError("gtchain: cube and classmap paths are required");
  }

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "gtchain", g, t);

  egu::HsiCube highres = egu::read_cube(cube_path);
  // The class map travels as a single-channel abundance file holding integer
  // labels (the abundance reader does not force simplex rows).
  egu::AbundanceMap labels_map = egu::read_abundance(classmap_path);
  if (labels_map.classes != 1) {
    throw egu::ConfigError("gtchain: classmap must be a single-channel map of labels");
  }
  if (labels_map.height != highres.height || labels_map.width != highres.width) {
    throw egu::DimError("gtchain: classmap extent does not match the cube");
  }

  std::vector<int> labels(static_cast<std::size_t>(labels_map.pixels()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double v = labels_map.data[static_cast<std::int64_t>(i)];
    int lab = static_cast<int>(std::llround(v));
    if (std::abs(v - lab) > 1e-9 || lab < 0) {
      throw egu::ConfigError("gtchain: classmap entries must be nonnegative integers");
    }
    labels[i] = lab;
  }

  g.log.info("gtchain: downsampling by " + std::to_string(factor) +
             " and aggregating the classification map");
  egu::HsiCube lowres = egu::gaussian_downsample(highres, factor);
  egu::AbundanceMap abundance = egu::classmap_to_abundance(labels, labels_map.height,
                                                           labels_map.width, factor, classes);
  egu::EndmemberMatrix references =
      egu::reference_endmembers_from_pure(lowres, abundance, purity);

  egu::DatasetMeta meta;
  meta.seed = g.seed;
  meta.provenance = "ground-truth chain: Gaussian downsample + classmap aggregation from " +
                    cube_path;
  egu::write_cube((dir / "cube_lowres.hsux").string(), lowres, meta);
  egu::write_abundance((dir / "abundance_gt.hsux").string(), abundance, meta);
  egu::write_endmembers((dir / "endmembers_ref.hsux").string(), references, meta);
  g.log.info("gtchain: wrote cube_lowres.hsux, abundance_gt.hsux, endmembers_ref.hsux");
}

void run_bundle(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  if (cube_path.empty()) throw egu::ConfigError("bundle: cube path is required");

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "bundle", g, t);

  egu::HsiCube cube = egu::read_cube(cube_path);
  egu::BundleConfig cfg;
  cfg.block_size = t.at("block_size").get<int>();
  cfg.overlap = t.at("overlap").get<int>();
  cfg.classes = t.at("classes").get<int>();
  cfg.clusters = t.at("clusters").get<int>();
  cfg.asc_weight = t.at("asc_weight").get<double>();
  cfg.kmeans_max_iter = t.at("kmeans_max_iter").get<int>();
  cfg.seed = g.seed;

  g.log.info("bundle: extracting candidate endmembers from " + cube_path);
  egu::EndmemberBundle bundle = egu::extract_bundles(cube, cfg);
  g.log.info("bundle: " + std::to_string(bundle.count()) + " signatures, " +
             std::to_string(bundle.clusters()) + " clusters, " +
             std::to_string(bundle.classes()) + " classes");

  egu::DatasetMeta meta;
  meta.seed = g.seed;
  meta.provenance = "block-wise vertex extraction + clustering from " + cube_path;
  egu::write_bundle((dir / "bundle.hsux").string(), bundle, meta);
  g.log.info("bundle: wrote bundle.hsux");
}

void run_train(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  const std::string bundle_path = t.at("bundle").get<std::string>();
  if (cube_path.empty() || bundle_path.empty()) {
    throw egu::ConfigError("train: cube and bundle paths are required");
  }

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "train", g, t);

  egu::HsiCube cube = egu::read_cube(cube_path);
  egu::EndmemberBundle bundle = egu::read_bundle(bundle_path);

  egu::ModelConfig mc;
  mc.bands = cube.bands;
  mc.classes = bundle.classes();
  mc.variant = egu::variant_from_string(t.at("variant").get<std::string>());
  mc.ablation = egu::ablation_from_string(t.at("ablation").get<std::string>());
  mc.dropout_keep = t.at("dropout_keep").get<double>();
  mc.encoder_widths = t.at("encoder_widths").get<std::vector<int>>();
  mc.decoder_widths = t.at("decoder_widths").get<std::vector<int>>();

  egu::TrainConfig tc;
  tc.epochs = t.at("epochs").get<int>();
  tc.base_lr = t.at("base_lr").get<double>();
  tc.lr_power = t.at("lr_power").get<double>();
  tc.seed = g.seed;

  g.log.info("train: " + std::string(egu::to_string(mc.variant)) + " / " +
             egu::to_string(mc.ablation) + ", " + std::to_string(tc.epochs) + " epochs, " +
             std::to_string(bundle.count()) + " bundle signatures");

  egu::EguNet model = egu::build_network(mc, g.seed);

  fs::path log_path = dir / "train_log.csv";
  std::ofstream log_out(log_path, std::ios::binary | std::ios::trunc);
  if (!log_out) throw egu::IoError(log_path.string() + ": cannot write training log");
  log_out << "epoch,loss_guidance,loss_reconstruction,loss_total,lr\n";

  egu::train(model, cube, bundle, tc, [&](const egu::EpochStats& st) {
    log_out << st.epoch << "," << fmt(st.loss_guidance) << "," << fmt(st.loss_reconstruction)
            << "," << fmt(st.loss_total) << "," << fmt(st.lr) << "\n";
    g.log.debug("epoch " + std::to_string(st.epoch) + ": total " + fmt(st.loss_total) +
                " (guidance " + fmt(st.loss_guidance) + ", reconstruction " +
                fmt(st.loss_reconstruction) + "), lr " + fmt(st.lr));
  });
  if (!log_out) throw egu::IoError(log_path.string() + ": write failed");
  log_out.close();

  egu::save_checkpoint((dir / "checkpoint.eguc").string(), model);
  g.log.info("train: wrote checkpoint.eguc and train_log.csv");
}

void run_unmix(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  const std::string ckpt_path = t.at("checkpoint").get<std::string>();
  if (cube_path.empty() || ckpt_path.empty()) {
    throw egu::ConfigError("unmix: cube and checkpoint paths are required");
  }

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "unmix", g, t);

  egu::HsiCube cube = egu::read_cube(cube_path);
  egu::EguNet model = egu::load_checkpoint(ckpt_path);
  g.log.info("unmix: inferring abundances for " + std::to_string(cube.pixels()) + " pixels");
  egu::AbundanceMap abundance = egu::infer_abundances(model, cube);

  egu::DatasetMeta meta;
  meta.seed = g.seed;
  meta.provenance = "network inference from " + cube_path + " with " + ckpt_path;
  egu::write_abundance((dir / "abundance_est.hsux").string(), abundance, meta);
  if (t.at("export_images").get<bool>()) {
    egu::export_abundance_images(abundance, dir.string());
    g.log.info("unmix: exported per-class PGM images and abundance.csv");
  }
  g.log.info("unmix: wrote abundance_est.hsux");
}

void run_endmembers(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  const std::string abund_path = t.at("abundance").get<std::string>();
  if (cube_path.empty() || abund_path.empty()) {
    throw egu::ConfigError("endmembers: cube and abundance paths are required");
  }

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "endmembers", g, t);

  egu::HsiCube cube = egu::read_cube(cube_path);
  egu::AbundanceMap abundance = egu::read_abundance(abund_path);
  if (abundance.height != cube.height || abundance.width != cube.width) {
    throw egu::DimError("endmembers: abundance extent does not match the cube");
  }

  Eigen::MatrixXd x = cube.pixel_mat().transpose();       // B x N
  Eigen::MatrixXd y = abundance.pixel_mat().transpose();  // C x N
  bool ridged = false;
  Eigen::MatrixXd e = egu::recover_endmembers(x, y, &ridged);
  if (ridged) g.log.info("endmembers: abundance matrix was rank deficient, used ridge fallback");

  egu::EndmemberMatrix out(e);
  egu::DatasetMeta meta;
  meta.seed = g.seed;
  meta.provenance = "least-squares recovery from " + cube_path + " and " + abund_path;
  egu::write_endmembers((dir / "endmembers_est.hsux").string(), out, meta);
  g.log.info("endmembers: wrote endmembers_est.hsux");
}

void run_baseline(const GlobalConfig& g, const json& t) {
  const std::string cube_path = t.at("cube").get<std::string>();
  if (cube_path.empty()) throw egu::ConfigError("baseline: cube path is required");
  const std::string method_name = t.at("method").get<std::string>();
  egu::AbundanceMethod method;
  if (method_name == "fclsu") method = egu::AbundanceMethod::Fclsu;
  else if (method_name == "pclsu") method = egu::AbundanceMethod::Pclsu;
  else if (method_name == "sunsal") method = egu::AbundanceMethod::Sunsal;
  else throw egu::ConfigError("baseline: method must be fclsu, pclsu or sunsal");

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "baseline", g, t);

  egu::HsiCube cube = egu::read_cube(cube_path);
  Eigen::MatrixXd x = cube.pixel_mat().transpose();  // B x N

  // Endmembers come from a file, or from vertex extraction on the cube when
  // only a class count is given.
  const std::string endm_path = t.at("endmembers").get<std::string>();
  const int classes = t.at("classes").get<int>();
  Eigen::MatrixXd e;
  if (!endm_path.empty()) {
    e = egu::read_endmembers(endm_path).m;
    if (e.rows() != cube.bands) {
      throw egu::DimError("baseline: endmember band count does not match the cube");
    }
  } else if (classes >= 2) {
    egu::Rng rng = egu::make_rng(g.seed, "baseline/vca");
    Eigen::MatrixXd pixels = cube.pixel_mat();  // N x B
    std::vector<int> picks = egu::vca(pixels, classes, rng);
    e.resize(cube.bands, classes);
    for (int j = 0; j < classes; ++j) e.col(j) = pixels.row(picks[j]).transpose();
    g.log.info("baseline: extracted " + std::to_string(classes) + " endmembers with VCA");
  } else {
    throw egu::ConfigError("baseline: give an endmembers file or a class count of at least 2");
  }

  egu::SolverConfig sc;
  sc.asc_weight = t.at("asc_weight").get<double>();
  sc.lambda = t.at("lambda").get<double>();
  sc.rho = t.at("rho").get<double>();
  sc.tol = t.at("tol").get<double>();
  sc.max_iter = t.at("max_iter").get<int>();

  Eigen::MatrixXd abund;  // C x N
  egu::DatasetMeta meta;
  meta.seed = g.seed;
  if (t.at("blind").get<bool>()) {
    g.log.info("baseline: blind " + method_name + " from " + cube_path);
    egu::BlindResult res =
        egu::blind_unmix(x, e, method, sc, t.at("blind_max_outer").get<int>(),
                         t.at("blind_tol").get<double>(), g.threads);
    abund = res.abundances;
    g.log.info("baseline: blind loop took " + std::to_string(res.outer_iterations) +
               " rounds, converged " + (res.converged ? "yes" : "no"));
    egu::EndmemberMatrix refined(res.endmembers);
    meta.provenance = "blind " + method_name + " from " + cube_path;
    egu::write_endmembers((dir / "endmembers_est.hsux").string(), refined, meta);
  } else {
    g.log.info("baseline: " + method_name + " from " + cube_path);
    switch (method) {
      case egu::AbundanceMethod::Fclsu:
        abund = egu::fclsu_all(e, x, sc.asc_weight, g.threads);
        break;
      case egu::AbundanceMethod::Pclsu:
        abund = egu::pclsu_all(e, x, g.threads);
        break;
      case egu::AbundanceMethod::Sunsal: {
        egu::SunsalResult res = egu::sunsal(e, x, egu::SunsalConstraints::AncAsc, sc);
        abund = res.abundances;
        g.log.info("baseline: ADMM took " + std::to_string(res.iterations) +
                   " iterations, converged " + (res.converged ? "yes" : "no"));
        break;
      }
    }
    meta.provenance = method_name + " with fixed endmembers from " + cube_path;
  }

  egu::AbundanceMap map(cube.height, cube.width, static_cast<int>(abund.rows()));
  Eigen::MatrixXd rows = abund.transpose();  // N x C
  for (int p = 0; p < map.pixels(); ++p) {
    for (int c = 0; c < map.classes; ++c) {
      map.data[static_cast<std::int64_t>(p) * map.classes + c] = rows(p, c);
    }
  }
  egu::write_abundance((dir / "abundance_est.hsux").string(), map, meta);
  g.log.info("baseline: wrote abundance_est.hsux");
}

void run_eval(const GlobalConfig& g, const json& t) {
  const std::string gt_abund_path = t.at("truth_abundance").get<std::string>();
  const auto est_paths = t.at("estimates").get<std::vector<std::string>>();
  const std::string gt_endm_path = t.at("truth_endmembers").get<std::string>();
  const auto est_endm_paths = t.at("estimate_endmembers").get<std::vector<std::string>>();
  if (gt_abund_path.empty()) throw egu::ConfigError("eval: truth abundance path is required");
  if (est_paths.empty()) throw egu::ConfigError("eval: at least one estimate path is required");
  if (!est_endm_paths.empty() && est_endm_paths.size() != est_paths.size()) {
    throw egu::ConfigError("eval: estimate endmember list must match the estimate list");
  }
  if (!est_endm_paths.empty() && gt_endm_path.empty()) {
    throw egu::ConfigError("eval: estimate endmembers need truth endmembers to compare against");
  }

  fs::path dir = ensure_out_dir(g);
  write_snapshot(dir, "eval", g, t);

  egu::AbundanceMap truth_map = egu::read_abundance(gt_abund_path);
  Eigen::MatrixXd truth = truth_map.pixel_mat().transpose();  // C x N
  Eigen::MatrixXd truth_endm;
  if (!gt_endm_path.empty()) truth_endm = egu::read_endmembers(gt_endm_path).m;

  std::vector<egu::EvalRun> runs;
  for (std::size_t i = 0; i < est_paths.size(); ++i) {
    egu::AbundanceMap est_map = egu::read_abundance(est_paths[i]);
    if (est_map.height != truth_map.height || est_map.width != truth_map.width) {
      throw egu::DimError("eval: estimate extent does not match the truth (" + est_paths[i] + ")");
    }
    Eigen::MatrixXd est = est_map.pixel_mat().transpose();
    Eigen::MatrixXd est_endm;
    const Eigen::MatrixXd* te = nullptr;
    const Eigen::MatrixXd* ee = nullptr;
    if (!est_endm_paths.empty()) {
      est_endm = egu::read_endmembers(est_endm_paths[i]).m;
      te = &truth_endm;
      ee = &est_endm;
    }
    std::string name = fs::path(est_paths[i]).stem().string();
    if (est_paths.size() > 1) name += "_" + std::to_string(i + 1);
    runs.push_back(egu::evaluate_run(name, truth, est, te, ee));
  }

  egu::EvalReport report = egu::evaluate(runs);
  std::string json_text = egu::eval_report_to_json(report);
  std::string table = egu::eval_report_table(report);

  {
    std::ofstream out(dir / "eval.json", std::ios::binary | std::ios::trunc);
    if (!out) throw egu::IoError((dir / "eval.json").string() + ": cannot write");
    out << json_text;
  }
  {
    std::ofstream out(dir / "eval_table.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw egu::IoError((dir / "eval_table.txt").string() + ": cannot write");
    out << table;
  }
  std::cout << table;
  g.log.info("eval: wrote eval.json and eval_table.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Endmember-guided two-stream hyperspectral unmixing toolkit"};
  app.require_subcommand(1);
  app.fallthrough(true);
  app.set_version_flag("--version", "egunet 0.1.0");
  app.footer(
      "Values resolve in three layers: built-in defaults, then the --config JSON\n"
      "file (global keys plus one section per subcommand), then explicit flags.\n"
      "Each run writes the resolved configuration to <out>/<subcommand>_config.json.");

  GlobalConfig g;
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration file");
  auto* opt_seed = app.add_option("--seed", g.seed, "root random seed (default 0)");
  auto* opt_threads = app.add_option("--threads", g.threads, "worker thread cap (default 1)");
  auto* opt_out = app.add_option("--out", g.out_dir, "output directory (default out)");
  auto* opt_log = app.add_option("--log-level", g.log_level, "quiet, info or debug");

  // Per-subcommand defaults; the config file and flags override these.
  json trees = {
      {"simulate",
       {{"height", 50},
        {"width", 50},
        {"bands", 100},
        {"classes", 4},
        {"softmax_temp", 0.5},
        {"field_sigma", 8.0},
        {"pure_per_class", 10},
        {"scale_min", 1.0},
        {"scale_max", 1.0},
        {"scale_sigma", 10.0},
        {"snr_db", 0.0},
        {"impulse_fraction", 0.005},
        {"min_separation", 0.1}}},
      {"gtchain",
       {{"cube", ""}, {"classmap", ""}, {"factor", 2}, {"purity", 1.0}, {"classes", 0}}},
      {"bundle",
       {{"cube", ""},
        {"block_size", 0},
        {"overlap", -1},
        {"classes", 0},
        {"clusters", 0},
        {"asc_weight", 1e3},
        {"kmeans_max_iter", 100}}},
      {"train",
       {{"cube", ""},
        {"bundle", ""},
        {"variant", "pw"},
        {"ablation", "full"},
        {"epochs", 200},
        {"base_lr", 0.1},
        {"lr_power", 0.99},
        {"dropout_keep", 0.9},
        {"encoder_widths", {128, 64}},
        {"decoder_widths", {64, 128, 192}}}},
      {"unmix", {{"cube", ""}, {"checkpoint", ""}, {"export_images", false}}},
      {"endmembers", {{"cube", ""}, {"abundance", ""}}},
      {"baseline",
       {{"cube", ""},
        {"endmembers", ""},
        {"classes", 0},
        {"method", "fclsu"},
        {"asc_weight", 1e3},
        {"lambda", 1e-3},
        {"rho", 1e-2},
        {"tol", 1e-6},
        {"max_iter", 1000},
        {"blind", false},
        {"blind_max_outer", 50},
        {"blind_tol", 1e-6}}},
      {"eval",
       {{"truth_abundance", ""},
        {"estimates", json::array()},
        {"truth_endmembers", ""},
        {"estimate_endmembers", json::array()}}},
  };

  // simulate ----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scene with ground truth");
  TreeBinder sim_b;
  int sim_h = 0, sim_w = 0, sim_bands = 0, sim_classes = 0, sim_pure = 0;
  double sim_temp = 0, sim_fsig = 0, sim_smin = 0, sim_smax = 0, sim_ssig = 0;
  double sim_snr = 0, sim_imp = 0, sim_sep = 0;
  sim_b.bind(sim->add_option("--height", sim_h), "height", &sim_h);
  sim_b.bind(sim->add_option("--width", sim_w), "width", &sim_w);
  sim_b.bind(sim->add_option("--bands", sim_bands), "bands", &sim_bands);
  sim_b.bind(sim->add_option("--classes", sim_classes), "classes", &sim_classes);
  sim_b.bind(sim->add_option("--softmax-temp", sim_temp), "softmax_temp", &sim_temp);
  sim_b.bind(sim->add_option("--field-sigma", sim_fsig), "field_sigma", &sim_fsig);
  sim_b.bind(sim->add_option("--pure-per-class", sim_pure), "pure_per_class", &sim_pure);
  sim_b.bind(sim->add_option("--scale-min", sim_smin), "scale_min", &sim_smin);
  sim_b.bind(sim->add_option("--scale-max", sim_smax), "scale_max", &sim_smax);
  sim_b.bind(sim->add_option("--scale-sigma", sim_ssig), "scale_sigma", &sim_ssig);
  sim_b.bind(sim->add_option("--snr-db", sim_snr), "snr_db", &sim_snr);
  sim_b.bind(sim->add_option("--impulse-fraction", sim_imp), "impulse_fraction", &sim_imp);
  sim_b.bind(sim->add_option("--min-separation", sim_sep), "min_separation", &sim_sep);

  // gtchain -----------------------------------------------------------------
  auto* gtc = app.add_subcommand("gtchain",
                                 "downsample a cube and derive ground truth from a class map");
  TreeBinder gtc_b;
  std::string gtc_cube, gtc_map;
  int gtc_factor = 0, gtc_classes = 0;
  double gtc_purity = 0;
  gtc_b.bind(gtc->add_option("--cube", gtc_cube), "cube", &gtc_cube);
  gtc_b.bind(gtc->add_option("--classmap", gtc_map), "classmap", &gtc_map);
  gtc_b.bind(gtc->add_option("--factor", gtc_factor), "factor", &gtc_factor);
  gtc_b.bind(gtc->add_option("--purity", gtc_purity), "purity", &gtc_purity);
  gtc_b.bind(gtc->add_option("--classes", gtc_classes), "classes", &gtc_classes);

  // bundle ------------------------------------------------------------------
  auto* bun = app.add_subcommand("bundle", "extract an endmember bundle from a cube");
  TreeBinder bun_b;
  std::string bun_cube;
  int bun_bs = 0, bun_ov = 0, bun_classes = 0, bun_clusters = 0, bun_km = 0;
  double bun_asc = 0;
  bun_b.bind(bun->add_option("--cube", bun_cube), "cube", &bun_cube);
  bun_b.bind(bun->add_option("--block-size", bun_bs), "block_size", &bun_bs);
  bun_b.bind(bun->add_option("--overlap", bun_ov), "overlap", &bun_ov);
  bun_b.bind(bun->add_option("--classes", bun_classes), "classes", &bun_classes);
  bun_b.bind(bun->add_option("--clusters", bun_clusters), "clusters", &bun_clusters);
  bun_b.bind(bun->add_option("--asc-weight", bun_asc), "asc_weight", &bun_asc);
  bun_b.bind(bun->add_option("--kmeans-max-iter", bun_km), "kmeans_max_iter", &bun_km);

  // train -------------------------------------------------------------------
  auto* trn = app.add_subcommand("train", "train the two-stream network on a cube and bundle");
  TreeBinder trn_b;
  std::string trn_cube, trn_bundle, trn_variant, trn_ablation;
  int trn_epochs = 0;
  double trn_lr = 0, trn_pow = 0, trn_keep = 0;
  trn_b.bind(trn->add_option("--cube", trn_cube), "cube", &trn_cube);
  trn_b.bind(trn->add_option("--bundle", trn_bundle), "bundle", &trn_bundle);
  trn_b.bind(trn->add_option("--variant", trn_variant)->check(CLI::IsMember({"pw", "ss"})),
             "variant", &trn_variant);
  trn_b.bind(trn->add_option("--ablation", trn_ablation)
                 ->check(CLI::IsMember({"full", "ur_only", "e_only"})),
             "ablation", &trn_ablation);
  trn_b.bind(trn->add_option("--epochs", trn_epochs), "epochs", &trn_epochs);
  trn_b.bind(trn->add_option("--base-lr", trn_lr), "base_lr", &trn_lr);
  trn_b.bind(trn->add_option("--lr-power", trn_pow), "lr_power", &trn_pow);
  trn_b.bind(trn->add_option("--dropout-keep", trn_keep), "dropout_keep", &trn_keep);

  // unmix -------------------------------------------------------------------
  auto* unm = app.add_subcommand("unmix", "infer abundances with a trained checkpoint");
  TreeBinder unm_b;
  std::string unm_cube, unm_ckpt;
  bool unm_export = false;
  unm_b.bind(unm->add_option("--cube", unm_cube), "cube", &unm_cube);
  unm_b.bind(unm->add_option("--checkpoint", unm_ckpt), "checkpoint", &unm_ckpt);
  unm_b.bind(unm->add_flag("--export-images", unm_export), "export_images", &unm_export);

  // endmembers --------------------------------------------------------------
  auto* edm = app.add_subcommand("endmembers", "recover endmember spectra from abundances");
  TreeBinder edm_b;
  std::string edm_cube, edm_abund;
  edm_b.bind(edm->add_option("--cube", edm_cube), "cube", &edm_cube);
  edm_b.bind(edm->add_option("--abundance", edm_abund), "abundance", &edm_abund);

  // baseline ----------------------------------------------------------------
  auto* bas = app.add_subcommand("baseline", "classic least-squares and sparse solvers");
  TreeBinder bas_b;
  std::string bas_cube, bas_endm, bas_method;
  int bas_classes = 0, bas_maxit = 0, bas_bouter = 0;
  double bas_asc = 0, bas_lambda = 0, bas_rho = 0, bas_tol = 0, bas_btol = 0;
  bool bas_blind = false;
  bas_b.bind(bas->add_option("--cube", bas_cube), "cube", &bas_cube);
  bas_b.bind(bas->add_option("--endmembers", bas_endm), "endmembers", &bas_endm);
  bas_b.bind(bas->add_option("--classes", bas_classes), "classes", &bas_classes);
  bas_b.bind(bas->add_option("--method", bas_method)
                 ->check(CLI::IsMember({"fclsu", "pclsu", "sunsal"})),
             "method", &bas_method);
  bas_b.bind(bas->add_option("--asc-weight", bas_asc), "asc_weight", &bas_asc);
  bas_b.bind(bas->add_option("--lambda", bas_lambda), "lambda", &bas_lambda);
  bas_b.bind(bas->add_option("--rho", bas_rho), "rho", &bas_rho);
  bas_b.bind(bas->add_option("--tol", bas_tol), "tol", &bas_tol);
  bas_b.bind(bas->add_option("--max-iter", bas_maxit), "max_iter", &bas_maxit);
  bas_b.bind(bas->add_flag("--blind", bas_blind), "blind", &bas_blind);
  bas_b.bind(bas->add_option("--blind-max-outer", bas_bouter), "blind_max_outer", &bas_bouter);
  bas_b.bind(bas->add_option("--blind-tol", bas_btol), "blind_tol", &bas_btol);

  // eval --------------------------------------------------------------------
  auto* evl = app.add_subcommand("eval", "score estimates against ground truth");
  TreeBinder evl_b;
  std::string evl_truth, evl_tendm;
  std::vector<std::string> evl_est, evl_eendm;
  evl_b.bind(evl->add_option("--truth-abundance", evl_truth), "truth_abundance", &evl_truth);
  evl_b.bind(evl->add_option("--estimate", evl_est), "estimates", &evl_est);
  evl_b.bind(evl->add_option("--truth-endmembers", evl_tendm), "truth_endmembers", &evl_tendm);
  evl_b.bind(evl->add_option("--estimate-endmembers", evl_eendm), "estimate_endmembers",
             &evl_eendm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help and version land here with code 0
  }

  try {
    // Layer 2: the config file (global keys and any subcommand sections).
    json file_cfg;
    if (!config_path.empty()) {
      file_cfg = load_config_file(config_path);
      json schema = trees;
      schema["seed"] = g.seed;
      schema["threads"] = g.threads;
      schema["out_dir"] = g.out_dir;
      schema["log_level"] = g.log_level;
      check_against_schema(file_cfg, schema, "");
      if (opt_seed->count() == 0 && file_cfg.contains("seed")) {
        g.seed = file_cfg["seed"].get<std::uint64_t>();
      }
      if (opt_threads->count() == 0 && file_cfg.contains("threads")) {
        g.threads = file_cfg["threads"].get<int>();
      }
      if (opt_out->count() == 0 && file_cfg.contains("out_dir")) {
        g.out_dir = file_cfg["out_dir"].get<std::string>();
      }
      if (opt_log->count() == 0 && file_cfg.contains("log_level")) {
        g.log_level = file_cfg["log_level"].get<std::string>();
      }
    }
    g.log.level = parse_log_level(g.log_level);
    if (g.threads < 1) throw egu::ConfigError("threads must be at least 1");

    struct Entry {
      CLI::App* sub;
      const char* name;
      const TreeBinder* binder;
      void (*run)(const GlobalConfig&, const json&);
    };
    const Entry entries[] = {
        {sim, "simulate", &sim_b, run_simulate}, {gtc, "gtchain", &gtc_b, run_gtchain},
        {bun, "bundle", &bun_b, run_bundle},     {trn, "train", &trn_b, run_train},
        {unm, "unmix", &unm_b, run_unmix},       {edm, "endmembers", &edm_b, run_endmembers},
        {bas, "baseline", &bas_b, run_baseline}, {evl, "eval", &evl_b, run_eval},
    };
    for (const Entry& entry : entries) {
      if (!app.got_subcommand(entry.sub)) continue;
      json tree = trees[entry.name];
      if (file_cfg.contains(entry.name)) merge_section(tree, file_cfg[entry.name]);
      entry.binder->apply(tree);
      entry.run(g, tree);
      break;
    }
  } catch (const egu::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const egu::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const egu::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
