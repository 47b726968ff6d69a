#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "socnav/network.hpp"

namespace socnav {

struct TrainConfig {
  double lambda = 1.0;
  double lr = 1e-3;
  int batch = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  double grad_clip = 10.0;  // max global gradient norm; <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Cosine annealing from lr down to lr * lr_final_ratio over the epochs; off when false.
  bool cosine_lr = false;
  double lr_final_ratio = 0.0;

  void validate() const;
  /// Step size used throughout `epoch` (1-based).
  double lr_at(int epoch) const;
};

struct LossTerms {
  double total = 0.0;
  double global_l2 = 0.0;  // mean over waypoints of squared Euclidean error
  double local_l1 = 0.0;   // mean absolute error over (v, omega)
};

/// total = global_l2 + lambda * local_l1.
LossTerms bc_loss(const NetworkOutput& pred, const GlobalPlan& plan, const LocalPlan& action, double lambda);

/// Mean absolute waypoint error per coordinate; reported next to bc_loss.
double global_l1(const NetworkOutput& pred, const GlobalPlan& plan);

struct LossRecord {
  int epoch = 0;
  std::string split;              // "train", "test" or "baseline:<kind>"
  std::string scenario = "all";   // "all" or one scenario label
  double global_l2 = 0.0;
  double global_l1 = 0.0;
  double local_l1 = 0.0;
  double total = 0.0;
};

struct SampleLoss {
  std::string episode_id;
  int t_index = 0;
  std::string scenario;
  double global_l2 = 0.0;
  double global_l1 = 0.0;
  double local_l1 = 0.0;
  double total = 0.0;
};

struct EvalReport {
  LossRecord overall;
  std::map<std::string, LossRecord> per_scenario;
  std::vector<SampleLoss> per_sample;
};

/// Scores arbitrary predictions against their samples and aggregates them the
/// way every report in this library does (plain means per scenario and overall).
EvalReport score_predictions(const std::vector<TrainingSample>& samples, const std::vector<NetworkOutput>& preds,
                             double lambda, int epoch, const std::string& split);

/// Evaluates `params` on `samples` without modifying anything.
EvalReport evaluate(const ModelParams& params, const std::vector<TrainingSample>& samples,
                    const ModelConfig& config, double lambda = 1.0, int epoch = 0,
                    const std::string& split = "test");

/// Records the Eq.-1 style objective on `g` for one sample; returns handles of
/// (total, global_l2, local_l1).
struct LossVars {
  ad::Var total;
  ad::Var global_l2;
  ad::Var local_l1;
};
LossVars build_bc_loss(ad::Graph& g, const ForwardVars& pred, const GlobalPlan& plan, const LocalPlan& action,
                       double lambda);

/// Adaptive-moment optimizer over a ModelParams collection.
class Adam {
 public:
  Adam(const ModelParams& params, const TrainConfig& config);
  void step(ModelParams& params, const Gradients& grads);
  long steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ad::Tensor> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

struct EpochReport {
  int epoch = 0;
  LossRecord train;
  const EvalReport* test = nullptr;  // null without a test split
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> history;
  EvalReport final_test;  // empty when no test split was supplied
};

/// Mini-batch training of every parameter jointly on the mean bc_loss.
/// History holds one train record per epoch and, with a test split, the overall
/// and per-scenario test records. Throws InputError on an empty dataset and
/// NumericalError naming the batch when the loss becomes non-finite.
TrainResult train(const std::vector<TrainingSample>& samples, const ModelConfig& model_config,
                  const TrainConfig& train_config, const std::vector<TrainingSample>* test_samples = nullptr,
                  const std::function<void(const EpochReport&, const ModelParams&)>& on_epoch = {});

}  // namespace socnav
