#include "vtrack/cli.hpp"

#include "vtrack/hash.hpp"
#include "vtrack/metrics.hpp"
#include "vtrack/phantom.hpp"
#include "vtrack/tracker.hpp"
#include "vtrack/training.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace vtrack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.3.0";

// Raised for bad flags or config values; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Global {
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json doc;
  try {
    doc = read_json(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!doc.is_object()) throw UsageError(path + ": config must be a JSON object");
  return doc;
}

Vec3 parse_vec3(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("cannot parse coordinate '" + item + "' in '" + text + "'");
    }
  }
  if (v.size() != 3) throw UsageError("expected x,y,z but got '" + text + "'");
  return {v[0], v[1], v[2]};
}

std::vector<Vec3> parse_seed_list(const std::string& text) {
  std::vector<Vec3> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(parse_vec3(item));
  }
  return out;
}

std::vector<Vec3> seeds_from_json(const json& doc, const std::string& where) {
  const json& list = doc.is_object() && doc.contains("seeds") ? doc.at("seeds") : doc;
  if (!list.is_array()) throw UsageError(where + ": expected a list of [x, y, z] seeds");
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& s = list[i];
    if (!s.is_array() || s.size() != 3 || !s[0].is_number() || !s[1].is_number() || !s[2].is_number()) {
      throw UsageError(where + ": seeds[" + std::to_string(i) + "]: expected [x, y, z]");
    }
    out.emplace_back(s[0].get<double>(), s[1].get<double>(), s[2].get<double>());
  }
  return out;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::vector<double> parse_scales(const json& spec) {
  if (spec.is_string()) {
    const auto text = spec.get<std::string>();
    if (text == "thin" || text == "wide") return online_scales(text);
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("scales: cannot parse '" + item + "'");
      }
    }
    return out;
  }
  if (spec.is_array()) return spec.get<std::vector<double>>();
  throw UsageError("scales: expected a preset name, a comma list or a JSON array");
}

void check_scales(const std::vector<double>& s) {
  if (s.empty()) throw UsageError("scales: list is empty");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0) || (i > 0 && !(s[i] > s[i - 1]))) {
      throw UsageError("scales: values must be positive and strictly increasing");
    }
  }
}

std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

json file_entry(const fs::path& p) { return {{"path", p.string()}, {"fnv1a", hex64(fnv1a_file(p))}}; }

void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    const std::vector<std::pair<std::string, fs::path>>& inputs, const std::vector<fs::path>& outputs) {
  json in = json::object();
  for (const auto& [name, p] : inputs) in[name] = file_entry(p);
  json out = json::array();
  for (const auto& p : outputs) out.push_back(file_entry(p));
  write_json({{"tool", "vtrack"},
              {"version", kVersion},
              {"command", command},
              {"config", config},
              {"config_hash", config_hash(config)},
              {"inputs", in},
              {"outputs", out}},
             path);
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension();
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

// ---------------------------------------------------------------- gen-phantom

struct GenArgs {
  std::string config, preset = "thin", out;
  int branches = 5;
  bool write_mask = false;
};

int cmd_gen_phantom(const GenArgs& a, const CLI::App& sub, const Global& g, std::ostream& out) {
  json cfg = load_config(a.config);
  if (sub.count("--preset") || !cfg.contains("preset")) cfg["preset"] = a.preset;
  if (sub.count("--branches") || !cfg.contains("n_branches")) cfg["n_branches"] = a.branches;
  if (g.seed) cfg["seed"] = *g.seed;
  PhantomSpec spec;
  try {
    spec = PhantomSpec::from_json(cfg);
    spec.validate();
  } catch (const json::exception& e) {
    throw UsageError(std::string("phantom config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Phantom ph = generate_phantom(spec);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const json spec_json = spec.to_json();
  const fs::path volume = dir / "volume.volr", skeleton = dir / "skeleton.json", spec_file = dir / "spec.json";
  write_volr(ph.volume, volume);
  write_json(graph_to_json(ph.skeleton, {{"default_seed", vec_json(ph.default_seed())},
                                         {"preset", spec.preset},
                                         {"spec_hash", config_hash(spec_json)}}),
             skeleton);
  write_json(spec_json, spec_file);
  std::vector<fs::path> outputs{volume, skeleton, spec_file};
  if (a.write_mask) {
    VolumeGrid mask(ph.volume.dims(), ph.volume.spacing(), ph.volume.origin());
    const float cut = static_cast<float>(0.5 * (spec.lumen_value + spec.background_value));
    const bool bright = spec.lumen_value >= spec.background_value;
    auto src = ph.volume.data();
    auto dst = mask.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (bright ? src[i] > cut : src[i] < cut) ? 1.0f : 0.0f;
    write_volr(mask, dir / "mask.volr");
    outputs.push_back(dir / "mask.volr");
  }
  write_manifest(dir / "manifest.json", "gen-phantom", spec_json, {}, outputs);
  out << "phantom: " << ph.branches.size() << " branches, " << ph.skeleton.size() << " skeleton points -> "
      << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  std::string config, out, resume, gating, weighting, preset;
  std::vector<std::string> phantoms, volumes, skeletons;
  int steps = 0, batch_size = 0, log_every = 100;
  double lr = 0.0;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, const Global& g, std::ostream& out, std::ostream& err) {
  json cfg = load_config(a.config);
  std::vector<std::string> phantoms = a.phantoms;
  if (cfg.contains("phantoms") && phantoms.empty()) phantoms = cfg["phantoms"].get<std::vector<std::string>>();
  cfg.erase("phantoms");
  if (sub.count("--steps")) cfg["steps"] = a.steps;
  if (sub.count("--batch-size")) cfg["batch_size"] = a.batch_size;
  if (sub.count("--lr")) cfg["lr"] = a.lr;
  if (sub.count("--gating")) cfg["gating"] = a.gating;
  if (sub.count("--weighting")) cfg["weighting"] = a.weighting;
  if (sub.count("--preset")) {
    cfg["s_min"] = a.preset == "wide" ? 1.0 : 0.2;
    cfg["s_max"] = a.preset == "wide" ? 30.0 : 15.0;
  }
  if (g.seed) cfg["seed"] = *g.seed;
  TrainConfig tc;
  try {
    tc = TrainConfig::from_json(cfg);
  } catch (const json::exception& e) {
    throw UsageError(std::string("training config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::vector<std::pair<fs::path, fs::path>> case_files;
  for (const auto& p : phantoms) case_files.emplace_back(fs::path(p) / "volume.volr", fs::path(p) / "skeleton.json");
  if (a.volumes.size() != a.skeletons.size()) throw UsageError("--volume and --skeleton must be given in pairs");
  for (std::size_t i = 0; i < a.volumes.size(); ++i) case_files.emplace_back(a.volumes[i], a.skeletons[i]);
  if (case_files.empty()) throw UsageError("train: no training data (use --phantom or --volume/--skeleton)");
  for (const auto& [v, s] : case_files) {
    if (!fs::exists(v)) throw UsageError("missing volume " + v.string());
    if (!fs::exists(s)) throw UsageError("missing skeleton " + s.string());
  }

  std::vector<VolumeGrid> volumes;
  std::vector<SkeletonGraph> skeletons;
  std::vector<std::pair<std::string, fs::path>> inputs;
  for (std::size_t i = 0; i < case_files.size(); ++i) {
    volumes.push_back(read_volume(case_files[i].first));
    skeletons.push_back(read_skeleton(case_files[i].second));
    inputs.emplace_back("volume" + std::to_string(i), case_files[i].first);
    inputs.emplace_back("skeleton" + std::to_string(i), case_files[i].second);
  }
  std::vector<TrainingCase> cases;
  for (std::size_t i = 0; i < volumes.size(); ++i) cases.push_back({&volumes[i], &skeletons[i]});

  EstimatorParams params;
  std::uint64_t start = 0;
  if (!a.resume.empty()) {
    Checkpoint ck = read_checkpoint(a.resume);
    if (ck.params.config.gating != tc.gating) throw UsageError("--resume: checkpoint gating differs from the config");
    params = std::move(ck.params);
    start = ck.step;
    tc.net = params.config;
    inputs.emplace_back("resume", a.resume);
  } else {
    params = EstimatorParams::random(tc.net, tc.seed + 1);
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const fs::path model = dir / "model.vtnet", csv = dir / "loss.csv";
  tc.checkpoint_path = model;
  const json effective = tc.to_json();

  std::vector<LossRecord> trace;
  auto progress = [&](const LossRecord& r) {
    trace.push_back(r);
    if (a.log_every > 0 && r.step % static_cast<std::uint64_t>(a.log_every) == 0) {
      err << "step " << r.step << "  L_dir " << r.direction << "  L_R " << r.radius << "  L " << r.total << "\n";
    }
  };
  try {
    const TrainResult result = train(params, cases, tc, start, progress);
    write_checkpoint({params, result.final_step}, model);
  } catch (const TrainingDivergedError&) {
    write_loss_csv(trace, csv);
    throw;
  }
  write_loss_csv(trace, csv);
  write_manifest(dir / "manifest.json", "train", effective, inputs, {model, csv});
  out << "trained " << trace.size() << " steps; checkpoint " << model.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------- track

struct TrackArgs {
  std::string config, phantom, volume, checkpoint, reference, seeds, seeds_file, scales, budget, mask, out, obj, log;
  bool oracle = false;
  double threshold = 0.5, mask_threshold = 1.0;
  int max_fronts = 20, sphere_level = 2;
  std::vector<double> window;
};

int cmd_track(const TrackArgs& a, const CLI::App& sub, const Global& g, std::ostream& out, std::ostream& err) {
  json cfg = load_config(a.config);
  if (sub.count("--threshold")) cfg["threshold"] = a.threshold;
  if (sub.count("--max-fronts")) cfg["max_fronts"] = a.max_fronts;
  if (sub.count("--budget")) cfg["budget"] = a.budget;
  if (sub.count("--mask-threshold")) cfg["mask_threshold"] = a.mask_threshold;
  if (sub.count("--sphere-level")) cfg["sphere_level"] = a.sphere_level;
  if (sub.count("--scales")) cfg["scales"] = a.scales;
  if (sub.count("--window")) cfg["window"] = {{"lo", a.window.at(0)}, {"hi", a.window.at(1)}};
  cfg["threads"] = g.threads;

  TrackerConfig tcfg;
  int level = 2;
  std::vector<double> scales;
  IntensityWindow window;
  try {
    tcfg = TrackerConfig::from_json(cfg);
    level = cfg.value("sphere_level", 2);
    scales = parse_scales(cfg.value("scales", json("thin")));
    if (cfg.contains("window")) {
      window.lo = cfg["window"].value("lo", 0.0);
      window.hi = cfg["window"].value("hi", 1.0);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("tracking config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  check_scales(scales);
  if (!(window.hi > window.lo)) throw UsageError("window: hi must exceed lo");
  if (level < 0 || level > SphereGraph::kMaxLevel) throw UsageError("sphere_level must be in [0, 4]");

  const fs::path phantom_dir(a.phantom);
  const fs::path volume_path = !a.volume.empty() ? fs::path(a.volume) : phantom_dir / "volume.volr";
  if (a.volume.empty() && a.phantom.empty()) throw UsageError("track: need --volume or --phantom");
  if (!fs::exists(volume_path)) throw UsageError("missing volume " + volume_path.string());
  const fs::path reference_path =
      !a.reference.empty() ? fs::path(a.reference) : a.phantom.empty() ? fs::path() : phantom_dir / "skeleton.json";
  if (a.oracle == !a.checkpoint.empty()) throw UsageError("track: give exactly one of --oracle and --checkpoint");
  if (a.oracle && (reference_path.empty() || !fs::exists(reference_path))) {
    throw UsageError("track --oracle: reference skeleton not found (use --reference or --phantom)");
  }
  if (!a.checkpoint.empty() && !fs::exists(a.checkpoint)) throw UsageError("missing checkpoint " + a.checkpoint);
  if (a.out.empty()) throw UsageError("track: --out is required");

  std::vector<Vec3> seeds;
  if (!a.seeds.empty()) {
    seeds = parse_seed_list(a.seeds);
  } else if (!a.seeds_file.empty()) {
    json doc;
    try {
      doc = read_json(a.seeds_file);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    seeds = seeds_from_json(doc, a.seeds_file);
  } else if (cfg.contains("seeds")) {
    seeds = seeds_from_json(cfg["seeds"], "config");
  } else if (!reference_path.empty() && fs::exists(reference_path)) {
    const json ref = read_json(reference_path);
    if (ref.contains("meta") && ref["meta"].contains("default_seed")) {
      seeds = seeds_from_json(json::array({ref["meta"]["default_seed"]}), reference_path.string());
    }
  }
  if (seeds.empty()) throw UsageError("track: no seeds (use --seeds, --seeds-file or a phantom with a default seed)");

  const VolumeGrid volume = read_volume(volume_path);
  const SphereGraph graph = SphereGraph::build(level);
  std::vector<std::pair<std::string, fs::path>> inputs{{"volume", volume_path}};

  json effective = tcfg.to_json();
  effective["sphere_level"] = level;
  effective["scales"] = scales;
  effective["window"] = {{"lo", window.lo}, {"hi", window.hi}};
  json seed_json = json::array();
  for (const auto& s : seeds) seed_json.push_back(vec_json(s));
  effective["seeds"] = seed_json;
  effective["estimator"] = a.oracle ? "oracle" : "network";
  json input_hashes = {{"volume", hex64(fnv1a_file(volume_path))}};

  std::unique_ptr<DirectionEstimator> estimator;
  std::optional<SkeletonGraph> reference;
  std::optional<MeshNet> net;
  if (a.oracle) {
    reference = read_skeleton(reference_path);
    estimator = std::make_unique<OracleEstimator>(*reference, graph);
    inputs.emplace_back("reference", reference_path);
    input_hashes["reference"] = hex64(fnv1a_file(reference_path));
  } else {
    net.emplace(read_checkpoint(a.checkpoint).params);
    estimator = std::make_unique<NetworkEstimator>(*net, volume, scales, graph, window);
    inputs.emplace_back("checkpoint", a.checkpoint);
    input_hashes["checkpoint"] = hex64(fnv1a_file(a.checkpoint));
  }
  std::optional<MaskDistance> mask;
  if (!a.mask.empty()) {
    if (!fs::exists(a.mask)) throw UsageError("missing mask " + a.mask);
    mask.emplace(read_volume(a.mask));
    inputs.emplace_back("mask", a.mask);
    input_hashes["mask"] = hex64(fnv1a_file(a.mask));
  }
  effective["mask"] = !a.mask.empty();
  effective["inputs"] = input_hashes;

  TrackResult result;
  try {
    result = propagate(seeds, *estimator, volume, graph, tcfg, mask ? &*mask : nullptr);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path out_path(a.out);
  ensure_parent(out_path);
  const std::string hash = config_hash(effective);
  write_json(tree_to_json(result.tree, {{"seeds", seed_json}, {"config_hash", hash}, {"status", to_string(result.status)}}),
             out_path);
  std::vector<fs::path> outputs{out_path};
  if (!a.obj.empty()) {
    ensure_parent(a.obj);
    std::ofstream obj(a.obj);
    write_skeleton_obj(result.tree.to_graph(), obj);
    if (!obj) throw std::runtime_error("cannot write " + a.obj);
    outputs.emplace_back(a.obj);
  }
  json iterations = json::array();
  for (const auto& r : result.log) {
    iterations.push_back({{"seed", r.seed},
                          {"iteration", r.iteration},
                          {"fronts", r.fronts},
                          {"committed", r.committed},
                          {"candidates", r.candidates},
                          {"accepted", r.accepted}});
  }
  const fs::path log_path = a.log.empty() ? sibling(out_path, ".log.json") : fs::path(a.log);
  ensure_parent(log_path);
  write_json({{"status", to_string(result.status)},
              {"message", result.message},
              {"nodes", result.tree.size()},
              {"skipped_seeds", result.skipped_seeds},
              {"iterations", iterations}},
             log_path);
  outputs.push_back(log_path);
  write_manifest(sibling(out_path, ".manifest.json"), "track", effective, inputs, outputs);

  out << "tracked " << result.tree.size() << " nodes in " << result.log.size() << " iterations (" << to_string(result.status)
      << ")\n";
  if (!result.ok()) {
    err << "tracking aborted: " << result.message << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred, ref, out, aggregate;
  double step = kDefaultResampleStep, radius_floor = 0.5;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  json result;
  if (!a.aggregate.empty()) {
    if (!fs::is_directory(a.aggregate)) throw UsageError("--aggregate: not a directory: " + a.aggregate);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.aggregate)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, EvalReport>> cases;
    for (const auto& f : files) {
      const json doc = read_json(f);
      if (!doc.is_object() || !doc.contains("ov")) continue;
      cases.emplace_back(f.stem().string(), EvalReport::from_json(doc));
    }
    if (cases.empty()) throw UsageError("--aggregate: no EvalReport files in " + a.aggregate);
    result = aggregate_reports(cases);
  } else {
    if (a.pred.empty() || a.ref.empty()) throw UsageError("eval: need --pred and --ref (or --aggregate DIR)");
    const SkeletonGraph pred = read_skeleton(a.pred);
    const SkeletonGraph ref = read_skeleton(a.ref);
    if (ref.empty()) throw UsageError("eval: reference skeleton is empty");
    if (!(a.step > 0.0)) throw UsageError("eval: --step must be positive");
    result = evaluate(pred, ref, {a.step, a.radius_floor}).to_json();
  }
  const std::string text = result.dump(2);
  out << text << "\n";
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_json(result, a.out);
  }
  return kExitOk;
}

// --------------------------------------------------------------------- export

struct ExportArgs {
  std::string skeleton, obj;
  int sphere = -1;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  if (a.skeleton.empty() == (a.sphere < 0)) throw UsageError("export: give exactly one of --skeleton and --sphere");
  ensure_parent(a.obj);
  std::ofstream obj(a.obj);
  if (!obj) throw std::runtime_error("cannot open " + a.obj + " for writing");
  if (!a.skeleton.empty()) {
    write_skeleton_obj(read_skeleton(a.skeleton), obj);
  } else {
    if (a.sphere > SphereGraph::kMaxLevel) throw UsageError("--sphere: level must be in [0, 4]");
    SphereGraph::build(a.sphere).write_obj(obj);
  }
  if (!obj) throw std::runtime_error("write failed: " + a.obj);
  out << "wrote " << a.obj << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vessel skeleton tracking: phantoms, training, tracking and evaluation", "vtrack"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  Global global;
  app.add_option("--seed", global.seed, "Global seed override")->configurable(false);
  app.add_option("--threads", global.threads, "Worker thread cap")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-phantom", "Generate a synthetic vessel phantom");
  gen_cmd->add_option("--config", gen.config, "Phantom spec JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--preset", gen.preset, "thin or wide")->check(CLI::IsMember({"thin", "wide"}));
  gen_cmd->add_option("--branches", gen.branches, "Number of branches")->check(CLI::Range(1, 16));
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--write-mask", gen.write_mask, "Also write a thresholded binary mask");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the direction/radius estimator");
  train_cmd->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--phantom", tr.phantoms, "Phantom directory (repeatable)");
  train_cmd->add_option("--volume", tr.volumes, "Training volume (pairs with --skeleton)");
  train_cmd->add_option("--skeleton", tr.skeletons, "Reference skeleton (pairs with --volume)");
  train_cmd->add_option("--steps", tr.steps)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--gating", tr.gating)->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--weighting", tr.weighting)->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--preset", tr.preset, "Training scale range preset")->check(CLI::IsMember({"thin", "wide"}));
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--log-every", tr.log_every, "Progress line interval (0 = quiet)");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();

  TrackArgs tk;
  auto* track_cmd = app.add_subcommand("track", "Grow a skeleton tree from seeds");
  track_cmd->add_option("--config", tk.config, "Tracking config JSON")->check(CLI::ExistingFile);
  track_cmd->add_option("--phantom", tk.phantom, "Phantom directory (volume, reference, default seed)");
  track_cmd->add_option("--volume", tk.volume, "Input volume (.volr or .nii)");
  track_cmd->add_option("--checkpoint", tk.checkpoint, "Trained network");
  track_cmd->add_flag("--oracle", tk.oracle, "Use the ground-truth estimator");
  track_cmd->add_option("--reference", tk.reference, "Reference skeleton for --oracle");
  track_cmd->add_option("--seeds", tk.seeds, "Seeds as \"x,y,z;x,y,z\" (mm)");
  track_cmd->add_option("--seeds-file", tk.seeds_file, "JSON list of [x, y, z] seeds")->check(CLI::ExistingFile);
  track_cmd->add_option("--scales", tk.scales, "Online scales: thin, wide or a comma list (mm)");
  track_cmd->add_option("--threshold", tk.threshold, "Direction probability threshold");
  track_cmd->add_option("--max-fronts", tk.max_fronts, "Front budget L_max")->check(CLI::PositiveNumber);
  track_cmd->add_option("--budget", tk.budget, "prune or halt")->check(CLI::IsMember({"prune", "halt"}));
  track_cmd->add_option("--mask", tk.mask, "Binary mask volume for distance termination");
  track_cmd->add_option("--mask-threshold", tk.mask_threshold, "Required depth inside the mask (mm)");
  track_cmd->add_option("--sphere-level", tk.sphere_level, "Icosphere subdivision level")->check(CLI::Range(0, 4));
  track_cmd->add_option("--window", tk.window, "Intensity window lo hi")->expected(2);
  track_cmd->add_option("--out", tk.out, "Output skeleton JSON")->required();
  track_cmd->add_option("--obj", tk.obj, "Optional OBJ polyline export");
  track_cmd->add_option("--log", tk.log, "Run log JSON (default: beside --out)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compare a predicted skeleton with a reference");
  eval_cmd->add_option("--pred", ev.pred, "Predicted skeleton JSON");
  eval_cmd->add_option("--ref", ev.ref, "Reference skeleton JSON");
  eval_cmd->add_option("--step", ev.step, "Resampling step (mm)");
  eval_cmd->add_option("--radius-floor", ev.radius_floor, "Matching-radius floor as a fraction of the step");
  eval_cmd->add_option("--aggregate", ev.aggregate, "Summarise every EvalReport JSON in a directory");
  eval_cmd->add_option("--out", ev.out, "Also write the JSON here");

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export", "Write OBJ files for external viewers");
  export_cmd->add_option("--skeleton", ex.skeleton, "Skeleton JSON to convert");
  export_cmd->add_option("--sphere", ex.sphere, "Icosphere level to export");
  export_cmd->add_option("--obj", ex.obj, "Output OBJ")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_phantom(gen, *gen_cmd, global, out);
    if (*train_cmd) return cmd_train(tr, *train_cmd, global, out, err);
    if (*track_cmd) return cmd_track(tk, *track_cmd, global, out, err);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*export_cmd) return cmd_export(ex, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vtrack
