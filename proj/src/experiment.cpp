#include "socnav/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "socnav/checkpoint.hpp"
#include "socnav/errors.hpp"
#include "socnav/plot.hpp"
#include "socnav/voxelizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace socnav {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ExpertConfig expert_from_json(const json& j) {
  check_keys(j,
             {"v_nominal", "slow_radius", "zone_obedience", "heading_gain", "omega_max", "goal_tolerance",
              "robot_radius", "avoid_margin"},
             "data.expert");
  ExpertConfig e;
  read(j, "v_nominal", e.v_nominal);
  read(j, "slow_radius", e.slow_radius);
  read(j, "zone_obedience", e.zone_obedience);
  read(j, "heading_gain", e.heading_gain);
  read(j, "omega_max", e.omega_max);
  read(j, "goal_tolerance", e.goal_tolerance);
  read(j, "robot_radius", e.robot_radius);
  read(j, "avoid_margin", e.avoid_margin);
  return e;
}

TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"lambda", "lr", "batch", "epochs", "grad_clip", "beta1", "beta2", "adam_eps", "cosine_lr",
              "lr_final_ratio"},
             "train");
  TrainConfig t;
  read(j, "lambda", t.lambda);
  read(j, "lr", t.lr);
  read(j, "batch", t.batch);
  read(j, "epochs", t.epochs);
  read(j, "grad_clip", t.grad_clip);
  read(j, "beta1", t.beta1);
  read(j, "beta2", t.beta2);
  read(j, "adam_eps", t.adam_eps);
  read(j, "cosine_lr", t.cosine_lr);
  read(j, "lr_final_ratio", t.lr_final_ratio);
  return t;
}

BaselineConfig baseline_from_json(const json& j) {
  if (j.is_string()) {
    BaselineConfig b;
    b.kind = parse_baseline_kind(j.get<std::string>());
    return b;
  }
  check_keys(j, {"kind", "v_nominal", "dwa"}, "baselines[]");
  BaselineConfig b;
  b.kind = parse_baseline_kind(j.at("kind").get<std::string>());
  read(j, "v_nominal", b.v_nominal);
  if (j.contains("dwa")) {
    const json& d = j.at("dwa");
    check_keys(d,
               {"v_samples", "omega_samples", "horizon_s", "robot_radius_m", "clearance_weight", "goal_weight",
                "clearance_cap", "v_max", "omega_max", "path_step"},
               "baselines[].dwa");
    read(d, "v_samples", b.dwa.v_samples);
    read(d, "omega_samples", b.dwa.omega_samples);
    read(d, "horizon_s", b.dwa.horizon_s);
    read(d, "robot_radius_m", b.dwa.robot_radius_m);
    read(d, "clearance_weight", b.dwa.clearance_weight);
    read(d, "goal_weight", b.dwa.goal_weight);
    read(d, "clearance_cap", b.dwa.clearance_cap);
    read(d, "v_max", b.dwa.v_max);
    read(d, "omega_max", b.dwa.omega_max);
    read(d, "path_step", b.dwa.path_step);
  }
  return b;
}

void apply_world_overrides(WorldSpec& w, const json& j, const std::string& scenario) {
  check_keys(j,
             {"extent", "width", "n_static", "n_peds", "ped_model", "ped_speed", "n_random_zones",
              "zone_speed_factor", "hall_half_width", "obstacle_lane", "image_shows_geometry",
              "image_shows_pedestrians"},
             "data.world_overrides." + scenario);
  read(j, "extent", w.extent);
  read(j, "width", w.width);
  read(j, "n_static", w.n_static);
  read(j, "n_peds", w.n_peds);
  if (j.contains("ped_model")) w.ped_model = parse_ped_model(j.at("ped_model").get<std::string>());
  read(j, "ped_speed", w.ped_speed);
  read(j, "n_random_zones", w.n_random_zones);
  read(j, "zone_speed_factor", w.zone_speed_factor);
  read(j, "hall_half_width", w.hall_half_width);
  read(j, "obstacle_lane", w.obstacle_lane);
  read(j, "image_shows_geometry", w.image_shows_geometry);
  read(j, "image_shows_pedestrians", w.image_shows_pedestrians);
}

std::string episode_id(const std::string& scenario, const std::string& split, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return scenario + "_" + split + "_" + buf;
}

// Train and test worlds draw from disjoint seed ranges.
std::uint64_t world_seed(const DataSpec& d, const std::string& split, int i) {
  return d.seed + (split == "test" ? 1'000'000ull : 0ull) + static_cast<std::uint64_t>(i);
}

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && !fs::is_empty(p); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& file) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(file.filename().string() + ": bad number '" + s + "'");
  }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header,
                                               std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("missing " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw FormatError(path.filename().string() + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != columns)
      throw FormatError(path.filename().string() + ": expected " + std::to_string(columns) + " columns in '" +
                        line + "'");
    rows.push_back(std::move(cells));
  }
  return rows;
}

const char* kHistoryHeader = "epoch,split,scenario,global_l2,global_l1,local_l1,total";
const char* kSampleHeader = "episode_id,t_index,scenario,global_l2,global_l1,local_l1,total";

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct Means {
  double l2 = 0, l1 = 0, local = 0, total = 0;
};

// Plain per-scenario means of per-sample records, plus "all".
std::map<std::string, Means> scenario_means(const std::vector<SampleLoss>& samples) {
  std::map<std::string, std::pair<Means, int>> acc;
  for (const auto& s : samples) {
    for (const std::string& key : {s.scenario, std::string("all")}) {
      auto& [m, n] = acc[key];
      m.l2 += s.global_l2;
      m.l1 += s.global_l1;
      m.local += s.local_l1;
      m.total += s.total;
      ++n;
    }
  }
  std::map<std::string, Means> out;
  for (auto& [k, v] : acc) {
    const double n = v.second;
    out[k] = {v.first.l2 / n, v.first.l1 / n, v.first.local / n, v.first.total / n};
  }
  return out;
}

ComparisonRow summarize(const std::string& method, const std::string& scenario, const std::vector<Means>& per_seed) {
  ComparisonRow r;
  r.method = method;
  r.scenario = scenario;
  r.n_seeds = static_cast<int>(per_seed.size());
  std::vector<double> totals, l2, l1, loc;
  for (const auto& m : per_seed) {
    totals.push_back(m.total);
    l2.push_back(m.l2);
    l1.push_back(m.l1);
    loc.push_back(m.local);
  }
  r.mean_total = mean(totals);
  r.std_total = sample_std(totals);
  r.median_total = median(totals);
  r.min_total = totals.empty() ? 0.0 : *std::min_element(totals.begin(), totals.end());
  r.max_total = totals.empty() ? 0.0 : *std::max_element(totals.begin(), totals.end());
  r.mean_global_l2 = mean(l2);
  r.mean_global_l1 = mean(l1);
  r.mean_local_l1 = mean(loc);
  return r;
}

std::array<std::uint8_t, 3> variant_color(Modality m) {
  switch (m) {
    case Modality::rgb: return {200, 60, 40};
    case Modality::lidar: return {40, 110, 200};
    case Modality::multimodal: return {30, 150, 60};
  }
  return {0, 0, 0};
}

}  // namespace

void ExperimentSpec::validate() const {
  if (name.empty()) throw ValidationError("spec: name must not be empty");
  if (variants.empty()) throw ValidationError("spec: at least one variant is required");
  if (seeds.empty()) throw ValidationError("spec: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ValidationError("spec: seeds must be distinct");
  if (std::set<Modality>(variants.begin(), variants.end()).size() != variants.size())
    throw ValidationError("spec: variants must be distinct");
  if (data.scenarios.empty()) throw ValidationError("spec: data.scenarios must list at least one preset");
  const auto& names = preset_names();
  for (const auto& s : data.scenarios)
    if (std::find(names.begin(), names.end(), s) == names.end())
      throw ValidationError("spec: unknown scenario '" + s + "'");
  if (std::set<std::string>(data.scenarios.begin(), data.scenarios.end()).size() != data.scenarios.size())
    throw ValidationError("spec: data.scenarios must be distinct");
  for (const auto& [s, _] : data.world_overrides)
    if (std::find(data.scenarios.begin(), data.scenarios.end(), s) == data.scenarios.end())
      throw ValidationError("spec: world_overrides for unlisted scenario '" + s + "'");
  if (data.train_episodes < 1) throw ValidationError("spec: data.train_episodes must be >= 1");
  if (data.test_episodes < 1) throw ValidationError("spec: data.test_episodes must be >= 1");
  if (!(data.duration > 0.0) || !(data.dt > 0.0)) throw ValidationError("spec: data.duration and data.dt must be > 0");
  if (data.stride < 1) throw ValidationError("spec: data.stride must be >= 1");
  if (data.max_train_samples < 0 || data.max_test_samples < 0)
    throw ValidationError("spec: sample caps must be >= 0");
  // Seed ranges of the two splits must not overlap.
  if (data.train_episodes > 1'000'000) throw ValidationError("spec: too many train episodes");
  data.expert.validate();
  for (Modality v : variants) {
    const ModelConfig& m = model(v);
    m.validate();
    if (m.modality != v) throw ValidationError("spec: model for " + to_string(v) + " has another modality");
    if (!(m.grid == data.grid))
      throw ValidationError("spec: model grid for " + to_string(v) + " differs from data.grid");
  }
  train.validate();
  for (const auto& b : baselines) b.validate();
  if (checkpoint_every < 0) throw ValidationError("spec: checkpoint_every must be >= 0");
}

const ModelConfig& ExperimentSpec::model(Modality m) const {
  auto it = models.find(m);
  if (it == models.end()) throw ValidationError("spec: no model configured for variant " + to_string(m));
  return it->second;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
  try {
    check_keys(j, {"name", "seeds", "variants", "data", "model", "models", "train", "baselines", "checkpoint_every"},
               "spec");
    ExperimentSpec s;
    read(j, "name", s.name);
    read(j, "seeds", s.seeds);
    read(j, "checkpoint_every", s.checkpoint_every);
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j.at("variants")) s.variants.push_back(parse_modality(v.get<std::string>()));
    }
    if (!j.contains("data")) throw ValidationError("spec: missing 'data'");
    const json& d = j.at("data");
    check_keys(d,
               {"scenarios", "world_overrides", "train_episodes", "test_episodes", "duration", "dt", "stride",
                "max_train_samples", "max_test_samples", "seed", "expert", "grid"},
               "data");
    read(d, "scenarios", s.data.scenarios);
    if (d.contains("world_overrides"))
      for (const auto& [k, v] : d.at("world_overrides").items()) s.data.world_overrides[k] = v;
    read(d, "train_episodes", s.data.train_episodes);
    read(d, "test_episodes", s.data.test_episodes);
    read(d, "duration", s.data.duration);
    read(d, "dt", s.data.dt);
    read(d, "stride", s.data.stride);
    read(d, "max_train_samples", s.data.max_train_samples);
    read(d, "max_test_samples", s.data.max_test_samples);
    read(d, "seed", s.data.seed);
    if (d.contains("expert")) s.data.expert = expert_from_json(d.at("expert"));
    if (d.contains("grid")) s.data.grid = grid_spec_from_json(d.at("grid"));

    json shared = j.value("model", json::object());
    shared["grid"] = to_json(s.data.grid);
    const json per_variant = j.value("models", json::object());
    for (const auto& [k, _] : per_variant.items()) parse_modality(k);
    for (Modality v : s.variants) {
      json mj = shared;
      if (per_variant.contains(to_string(v))) mj.merge_patch(per_variant.at(to_string(v)));
      mj["modality"] = to_string(v);
      s.models[v] = model_config_from_json(mj);
    }
    if (j.contains("train")) s.train = train_from_json(j.at("train"));
    if (j.contains("baselines")) {
      s.baselines.clear();
      for (const auto& b : j.at("baselines")) s.baselines.push_back(baseline_from_json(b));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("cannot read spec file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return experiment_spec_from_json(j);
}

fs::path data_dir(const fs::path& out) { return out / "data"; }

fs::path run_dir(const fs::path& out, Modality variant, std::uint64_t seed) {
  return out / "runs" / to_string(variant) / ("seed_" + std::to_string(seed));
}

fs::path compare_dir(const fs::path& out) { return out / "compare"; }

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("no data manifest at " + path.string() + "; run `socnav gen-data` first");
  try {
    const json j = json::parse(in);
    Manifest m;
    m.name = j.at("name").get<std::string>();
    for (const auto& e : j.at("episodes")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.split = e.at("split").get<std::string>();
      me.scenario = e.at("scenario").get<std::string>();
      me.world_seed = e.at("world_seed").get<std::uint64_t>();
      me.frames = e.at("frames").get<std::size_t>();
      m.episodes.push_back(std::move(me));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
}

Manifest cmd_gen_data(const ExperimentSpec& spec, const fs::path& out, bool force, std::ostream* log) {
  spec.validate();
  const fs::path dir = data_dir(out);
  if (non_empty_dir(dir)) {
    if (!force) throw ValidationError("refusing to overwrite non-empty " + dir.string() + " (pass --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "episodes");

  Manifest m;
  m.name = spec.name;
  json entries = json::array();
  for (const std::string split : {"train", "test"}) {
    const int count = split == "train" ? spec.data.train_episodes : spec.data.test_episodes;
    for (const auto& scenario : spec.data.scenarios) {
      for (int i = 0; i < count; ++i) {
        ManifestEntry e;
        e.id = episode_id(scenario, split, i);
        e.split = split;
        e.scenario = scenario;
        e.world_seed = world_seed(spec.data, split, i);
        WorldSpec ws = preset(scenario, e.world_seed);
        if (auto it = spec.data.world_overrides.find(scenario); it != spec.data.world_overrides.end())
          apply_world_overrides(ws, it->second, scenario);
        const World world = gen_world(ws);
        const Episode ep = simulate_episode(world, spec.data.expert, spec.data.duration, spec.data.dt, e.id);
        save_episode(ep, dir / "episodes");
        e.frames = ep.frames.size();
        if (log) *log << "episode " << e.id << ": " << e.frames << " frames\n";
        entries.push_back({{"id", e.id},
                           {"split", e.split},
                           {"scenario", e.scenario},
                           {"world_seed", e.world_seed},
                           {"frames", e.frames},
                           {"path", "episodes/" + e.id}});
        m.episodes.push_back(std::move(e));
      }
    }
  }
  const json manifest = {{"name", spec.name}, {"grid", to_json(spec.data.grid)}, {"episodes", entries}};
  std::ofstream f(dir / "manifest.json");
  f << manifest.dump(2) << "\n";
  if (!f) throw StorageError("cannot write " + (dir / "manifest.json").string());
  return m;
}

std::vector<TrainingSample> stratified_subsample(std::vector<TrainingSample> samples, int cap) {
  if (cap <= 0 || static_cast<std::size_t>(cap) == samples.size()) return samples;
  if (samples.size() < static_cast<std::size_t>(cap))
    throw ValidationError("only " + std::to_string(samples.size()) + " samples available, " + std::to_string(cap) +
                          " requested; generate more episodes or lower the cap");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& g = groups[samples[i].scenario];
    if (g.empty()) order.push_back(samples[i].scenario);
    g.push_back(i);
  }
  const std::size_t n = order.size();
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t quota = static_cast<std::size_t>(cap) / n + (k < static_cast<std::size_t>(cap) % n ? 1 : 0);
    const auto& g = groups[order[k]];
    if (g.size() < quota)
      throw ValidationError("scenario " + order[k] + " has " + std::to_string(g.size()) + " samples, " +
                            std::to_string(quota) + " needed; generate more episodes or lower the cap");
    for (std::size_t q = 0; q < quota; ++q) keep.push_back(g[q * g.size() / quota]);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<TrainingSample> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(samples[i]));
  return out;
}

std::vector<TrainingSample> load_split(const ExperimentSpec& spec, const fs::path& out, const std::string& split) {
  const fs::path dir = data_dir(out);
  const Manifest m = read_manifest(dir);
  Dataset ds;
  for (const auto& e : m.episodes) {
    if (e.split != split) continue;
    append_samples(load_episode(dir / "episodes" / e.id), spec.data.stride, spec.data.grid, ds);
  }
  const int cap = split == "train" ? spec.data.max_train_samples : spec.data.max_test_samples;
  return stratified_subsample(std::move(ds.samples), cap);
}

std::vector<SeedRun> cmd_train(const ExperimentSpec& spec, Modality variant, const fs::path& out, bool force,
                               std::ostream* log) {
  spec.validate();
  if (std::find(spec.variants.begin(), spec.variants.end(), variant) == spec.variants.end())
    throw ValidationError("variant " + to_string(variant) + " is not listed in the spec");
  const ModelConfig& model = spec.model(variant);
  for (std::uint64_t seed : spec.seeds) {
    const fs::path dir = run_dir(out, variant, seed);
    if (non_empty_dir(dir) && !force)
      throw ValidationError("refusing to overwrite non-empty " + dir.string() + " (pass --force)");
  }
  const auto train_set = load_split(spec, out, "train");
  const auto test_set = load_split(spec, out, "test");
  if (log) *log << to_string(variant) << ": " << train_set.size() << " train / " << test_set.size() << " test samples\n";

  std::vector<SeedRun> runs;
  for (std::uint64_t seed : spec.seeds) {
    const fs::path dir = run_dir(out, variant, seed);
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig tc = spec.train;
    tc.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto on_epoch = [&](const EpochReport& r, const ModelParams& params) {
      if (log) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        *log << to_string(variant) << " seed " << seed << " epoch " << r.epoch << " train " << r.train.total;
        if (r.test) *log << " test " << r.test->overall.total;
        *log << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat
             << std::setprecision(6) << "\n";
      }
      if (spec.checkpoint_every > 0 && r.epoch % spec.checkpoint_every == 0 && r.epoch < tc.epochs)
        save_checkpoint(dir / "model.ckpt", {model, params, {seed, r.epoch, r.train.total}});
    };
    TrainResult res = train(train_set, model, tc, &test_set, on_epoch);
    save_checkpoint(dir / "model.ckpt", {model, res.params, {seed, tc.epochs, res.final_test.overall.total}});
    write_history_csv(dir / "history.csv", res.history);
    write_sample_csv(dir / "test_samples.csv", res.final_test.per_sample);
    runs.push_back({seed, std::move(res.history), std::move(res.final_test)});
  }
  return runs;
}

std::vector<ComparisonRow> cmd_compare(const ExperimentSpec& spec, const fs::path& out, std::ostream* log) {
  spec.validate();
  for (Modality v : spec.variants)
    for (std::uint64_t seed : spec.seeds)
      if (!fs::exists(run_dir(out, v, seed) / "model.ckpt"))
        throw MissingPrerequisite("no checkpoint for variant " + to_string(v) + " (seed " + std::to_string(seed) +
                                  ") under " + (out / "runs").string() + "; run `socnav train --variant " +
                                  to_string(v) + "` first");

  const fs::path cdir = compare_dir(out);
  fs::create_directories(cdir / "baselines");

  std::vector<std::string> scenarios{"all"};
  for (const auto& s : spec.data.scenarios) scenarios.push_back(s);

  std::vector<ComparisonRow> rows;
  // Test curves per variant: scenario -> epoch -> per-seed totals.
  std::map<Modality, std::map<std::string, std::map<int, std::vector<double>>>> curves;
  for (Modality v : spec.variants) {
    std::map<std::string, std::vector<Means>> per_scenario;
    for (std::uint64_t seed : spec.seeds) {
      const fs::path dir = run_dir(out, v, seed);
      const auto means = scenario_means(read_sample_csv(dir / "test_samples.csv"));
      for (const auto& s : scenarios)
        if (auto it = means.find(s); it != means.end()) per_scenario[s].push_back(it->second);
      for (const auto& r : read_history_csv(dir / "history.csv"))
        if (r.split == "test") curves[v][r.scenario][r.epoch].push_back(r.total);
    }
    for (const auto& s : scenarios)
      if (per_scenario.count(s)) rows.push_back(summarize(to_string(v), s, per_scenario[s]));
  }

  std::map<std::string, std::map<std::string, double>> baseline_totals;  // method -> scenario -> total
  if (!spec.baselines.empty()) {
    const auto test_set = load_split(spec, out, "test");
    std::vector<LossRecord> history;
    for (const auto& b : spec.baselines) {
      const EvalReport rep = score_baseline(b, test_set, spec.train.lambda, 0);
      history.push_back(rep.overall);
      for (const auto& [_, r] : rep.per_scenario) history.push_back(r);
      write_sample_csv(cdir / "baselines" / (to_string(b.kind) + "_samples.csv"), rep.per_sample);
      const auto means = scenario_means(rep.per_sample);
      const std::string method = "baseline:" + to_string(b.kind);
      for (const auto& s : scenarios)
        if (auto it = means.find(s); it != means.end()) {
          rows.push_back(summarize(method, s, {it->second}));
          baseline_totals[method][s] = it->second.total;
        }
    }
    write_history_csv(cdir / "baselines" / "history.csv", history);
  }
  write_comparison_csv(cdir / "comparison.csv", rows);

  const std::array<std::array<std::uint8_t, 3>, 3> baseline_colors{{{120, 120, 120}, {160, 90, 170}, {200, 150, 40}}};
  for (const auto& s : scenarios) {
    std::vector<PlotSeries> series;
    double x_max = 1.0;
    for (Modality v : spec.variants) {
      PlotSeries ps;
      ps.label = to_string(v);
      ps.color = variant_color(v);
      for (const auto& [epoch, totals] : curves[v][s]) {
        ps.x.push_back(epoch);
        ps.y.push_back(mean(totals));
        x_max = std::max(x_max, static_cast<double>(epoch));
      }
      series.push_back(std::move(ps));
    }
    std::size_t k = 0;
    for (const auto& [method, totals] : baseline_totals) {
      auto it = totals.find(s);
      if (it == totals.end()) continue;
      PlotSeries ps;
      ps.label = method.substr(method.find(':') + 1);
      ps.color = baseline_colors[k++ % baseline_colors.size()];
      ps.dashed = true;
      ps.x = {1.0, x_max};
      ps.y = {it->second, it->second};
      series.push_back(std::move(ps));
    }
    PlotOptions opt;
    opt.title = spec.name + " test loss: " + s;
    plot_lines(cdir / ("loss_" + s + ".png"), series, opt);
  }
  if (log)
    for (const auto& r : rows)
      *log << r.method << " " << r.scenario << " mean " << r.mean_total << " median " << r.median_total << " std "
           << r.std_total << "\n";
  return rows;
}

std::size_t cmd_voxelize(const fs::path& pts_file, const GridSpec& grid, const fs::path& out_dir) {
  const auto points = read_points_file(pts_file);
  const VoxelGrid g = voxelize(points, grid);
  fs::create_directories(out_dir);
  write_grid_dump(g, out_dir / "grid.vox");
  return g.occupied_count();
}

void write_history_csv(const fs::path& path, const std::vector<LossRecord>& records) {
  std::ofstream f(path);
  if (!f) throw StorageError("cannot write " + path.string());
  f << kHistoryHeader << "\n";
  for (const auto& r : records)
    f << r.epoch << "," << r.split << "," << r.scenario << "," << fmt(r.global_l2) << "," << fmt(r.global_l1) << ","
      << fmt(r.local_l1) << "," << fmt(r.total) << "\n";
  if (!f) throw StorageError("write failed: " + path.string());
}

std::vector<LossRecord> read_history_csv(const fs::path& path) {
  std::vector<LossRecord> out;
  for (const auto& c : read_csv(path, kHistoryHeader, 7)) {
    LossRecord r;
    r.epoch = static_cast<int>(parse_double(c[0], path));
    r.split = c[1];
    r.scenario = c[2];
    r.global_l2 = parse_double(c[3], path);
    r.global_l1 = parse_double(c[4], path);
    r.local_l1 = parse_double(c[5], path);
    r.total = parse_double(c[6], path);
    out.push_back(std::move(r));
  }
  return out;
}

void write_sample_csv(const fs::path& path, const std::vector<SampleLoss>& records) {
  std::ofstream f(path);
  if (!f) throw StorageError("cannot write " + path.string());
  f << kSampleHeader << "\n";
  for (const auto& r : records)
    f << r.episode_id << "," << r.t_index << "," << r.scenario << "," << fmt(r.global_l2) << "," << fmt(r.global_l1)
      << "," << fmt(r.local_l1) << "," << fmt(r.total) << "\n";
  if (!f) throw StorageError("write failed: " + path.string());
}

std::vector<SampleLoss> read_sample_csv(const fs::path& path) {
  std::vector<SampleLoss> out;
  for (const auto& c : read_csv(path, kSampleHeader, 7)) {
    SampleLoss r;
    r.episode_id = c[0];
    r.t_index = static_cast<int>(parse_double(c[1], path));
    r.scenario = c[2];
    r.global_l2 = parse_double(c[3], path);
    r.global_l1 = parse_double(c[4], path);
    r.local_l1 = parse_double(c[5], path);
    r.total = parse_double(c[6], path);
    out.push_back(std::move(r));
  }
  return out;
}

void write_comparison_csv(const fs::path& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream f(path);
  if (!f) throw StorageError("cannot write " + path.string());
  f << "method,scenario,n_seeds,mean_total,std_total,median_total,min_total,max_total,mean_global_l2,"
       "mean_global_l1,mean_local_l1\n";
  for (const auto& r : rows)
    f << r.method << "," << r.scenario << "," << r.n_seeds << "," << fmt(r.mean_total) << "," << fmt(r.std_total)
      << "," << fmt(r.median_total) << "," << fmt(r.min_total) << "," << fmt(r.max_total) << ","
      << fmt(r.mean_global_l2) << "," << fmt(r.mean_global_l1) << "," << fmt(r.mean_local_l1) << "\n";
  if (!f) throw StorageError("write failed: " + path.string());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingPrerequisite*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const InputError*>(&e))
    return 2;
  return 1;
}

}  // namespace socnav
