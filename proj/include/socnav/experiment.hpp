#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "socnav/baselines.hpp"
#include "socnav/network.hpp"
#include "socnav/synthgen.hpp"
#include "socnav/trainer.hpp"

namespace socnav {

struct DataSpec {
  std::vector<std::string> scenarios;
  // Per-scenario field overrides applied on top of preset(scenario, seed).
  std::map<std::string, nlohmann::json> world_overrides;
  int train_episodes = 4;  // per scenario
  int test_episodes = 2;   // per scenario
  double duration = 30.0;  // seconds simulated per episode
  double dt = 0.1;
  int stride = 5;
  // Caps on the number of samples per split; 0 keeps all. Caps are filled
  // evenly across scenarios and spread evenly over each scenario's samples.
  int max_train_samples = 0;
  int max_test_samples = 0;
  std::uint64_t seed = 0;  // base of the world seeds
  ExpertConfig expert;
  GridSpec grid;
};

struct ExperimentSpec {
  std::string name = "experiment";
  DataSpec data;
  std::vector<Modality> variants{Modality::rgb, Modality::lidar, Modality::multimodal};
  std::map<Modality, ModelConfig> models;  // one entry per variant
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<BaselineConfig> baselines;
  int checkpoint_every = 0;  // epochs between intermediate checkpoints; 0 writes only the final one

  /// Throws ValidationError.
  void validate() const;
  const ModelConfig& model(Modality m) const;
};

/// JSON layout (all keys optional except data.scenarios):
///   name, seeds, variants,
///   data {scenarios, world_overrides, train_episodes, test_episodes, duration, dt,
///         stride, max_train_samples, max_test_samples, seed, expert {...}, grid {...}},
///   model {...shared ModelConfig...}, models {<variant>: {...overrides...}},
///   train {lambda, lr, batch, epochs, grad_clip, beta1, beta2, adam_eps},
///   baselines [{kind, v_nominal, dwa {...}}], checkpoint_every
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" or "test"
  std::string scenario;
  std::uint64_t world_seed = 0;
  std::size_t frames = 0;
};

struct Manifest {
  std::string name;
  std::vector<ManifestEntry> episodes;
};

Manifest read_manifest(const std::filesystem::path& data_dir);

/// Output layout under `out`:
///   data/manifest.json, data/episodes/<id>/
///   runs/<variant>/seed_<s>/{model.ckpt, history.csv, test_samples.csv}
///   compare/{comparison.csv, baselines/history.csv, baselines/<kind>_samples.csv, loss_<scenario>.png}
std::filesystem::path data_dir(const std::filesystem::path& out);
std::filesystem::path run_dir(const std::filesystem::path& out, Modality variant, std::uint64_t seed);
std::filesystem::path compare_dir(const std::filesystem::path& out);

/// Generates every train and test episode. Refuses a non-empty data directory
/// unless `force` is set, in which case it is replaced.
Manifest cmd_gen_data(const ExperimentSpec& spec, const std::filesystem::path& out, bool force,
                      std::ostream* log = nullptr);

/// Samples of one split in manifest order, capped per the spec.
/// Throws MissingPrerequisite without a manifest.
std::vector<TrainingSample> load_split(const ExperimentSpec& spec, const std::filesystem::path& out,
                                       const std::string& split);

/// Keeps `cap` samples spread evenly over scenarios and over each scenario's
/// samples (order preserved). cap <= 0 keeps all; too few samples throws ValidationError.
std::vector<TrainingSample> stratified_subsample(std::vector<TrainingSample> samples, int cap);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<LossRecord> history;
  EvalReport final_test;
};

/// Trains one run per seed. Refuses existing run directories unless `force`.
std::vector<SeedRun> cmd_train(const ExperimentSpec& spec, Modality variant, const std::filesystem::path& out,
                               bool force, std::ostream* log = nullptr);

struct ComparisonRow {
  std::string method;    // variant name or "baseline:<kind>"
  std::string scenario;  // scenario label or "all"
  int n_seeds = 0;
  double mean_total = 0.0;
  double std_total = 0.0;  // sample standard deviation across seeds
  double median_total = 0.0;
  double min_total = 0.0;
  double max_total = 0.0;
  double mean_global_l2 = 0.0;
  double mean_global_l1 = 0.0;
  double mean_local_l1 = 0.0;
};

/// Builds the comparison table from the per-sample records of every trained
/// variant and from fresh baseline scoring on the test split, then writes the
/// table, the baseline records and one loss-curve image per scenario plus
/// loss_all.png. Throws MissingPrerequisite naming the first untrained variant.
std::vector<ComparisonRow> cmd_compare(const ExperimentSpec& spec, const std::filesystem::path& out,
                                       std::ostream* log = nullptr);

/// Voxelizes a points file into `out_dir/grid.vox` and returns the occupied-cell count.
std::size_t cmd_voxelize(const std::filesystem::path& pts_file, const GridSpec& grid,
                         const std::filesystem::path& out_dir);

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& records);
std::vector<LossRecord> read_history_csv(const std::filesystem::path& path);
void write_sample_csv(const std::filesystem::path& path, const std::vector<SampleLoss>& records);
std::vector<SampleLoss> read_sample_csv(const std::filesystem::path& path);
void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows);

/// Process exit code for an exception: 2 validation, 3 missing prerequisite,
/// 4 numerical failure, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace socnav
