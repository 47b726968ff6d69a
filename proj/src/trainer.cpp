#include "socnav/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "socnav/errors.hpp"

namespace socnav {

using ad::Graph;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  if (!(lr > 0.0)) throw ValidationError("lr must be > 0");
  if (batch < 1) throw ValidationError("batch must be >= 1");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(lr_final_ratio >= 0.0 && lr_final_ratio <= 1.0)) throw ValidationError("lr_final_ratio must be in [0, 1]");
}

double TrainConfig::lr_at(int epoch) const {
  if (!cosine_lr || epochs <= 1) return lr;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
  const double floor = lr * lr_final_ratio;
  return floor + 0.5 * (lr - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

LossTerms bc_loss(const NetworkOutput& pred, const GlobalPlan& plan, const LocalPlan& action, double lambda) {
  LossTerms t;
  for (int i = 0; i < kPlanLength; ++i) {
    const double dx = pred.waypoints[i].x - plan.waypoints[i].x;
    const double dy = pred.waypoints[i].y - plan.waypoints[i].y;
    t.global_l2 += dx * dx + dy * dy;
  }
  t.global_l2 /= kPlanLength;
  t.local_l1 = 0.5 * (std::abs(pred.action.v - action.action.v) + std::abs(pred.action.omega - action.action.omega));
  t.total = t.global_l2 + lambda * t.local_l1;
  return t;
}

double global_l1(const NetworkOutput& pred, const GlobalPlan& plan) {
  double s = 0.0;
  for (int i = 0; i < kPlanLength; ++i)
    s += std::abs(pred.waypoints[i].x - plan.waypoints[i].x) + std::abs(pred.waypoints[i].y - plan.waypoints[i].y);
  return s / (2 * kPlanLength);
}

LossVars build_bc_loss(Graph& g, const ForwardVars& pred, const GlobalPlan& plan, const LocalPlan& action,
                       double lambda) {
  std::vector<double> wp;
  for (const auto& w : plan.waypoints) {
    wp.push_back(w.x);
    wp.push_back(w.y);
  }
  Var demo_wp = g.constant(Tensor({2 * kPlanLength}, std::move(wp)));
  Var demo_act = g.constant(Tensor({2}, {action.action.v, action.action.omega}));
  LossVars out;
  out.global_l2 = ad::scale(g, ad::sum(g, ad::square(g, ad::sub(g, pred.waypoints, demo_wp))), 1.0 / kPlanLength);
  out.local_l1 = ad::mean(g, ad::abs(g, ad::sub(g, pred.action, demo_act)));
  out.total = ad::add(g, out.global_l2, ad::scale(g, out.local_l1, lambda));
  return out;
}

namespace {

struct Accumulator {
  double g2 = 0, g1 = 0, l1 = 0, total = 0;
  std::size_t n = 0;
  void add(const SampleLoss& s) {
    g2 += s.global_l2;
    g1 += s.global_l1;
    l1 += s.local_l1;
    total += s.total;
    ++n;
  }
  LossRecord record(int epoch, const std::string& split, const std::string& scenario) const {
    LossRecord r;
    r.epoch = epoch;
    r.split = split;
    r.scenario = scenario;
    if (n) {
      r.global_l2 = g2 / n;
      r.global_l1 = g1 / n;
      r.local_l1 = l1 / n;
      r.total = total / n;
    }
    return r;
  }
};

}  // namespace

EvalReport score_predictions(const std::vector<TrainingSample>& samples, const std::vector<NetworkOutput>& preds,
                             double lambda, int epoch, const std::string& split) {
  if (samples.size() != preds.size()) throw InputError("prediction count differs from sample count");
  EvalReport report;
  Accumulator all;
  std::map<std::string, Accumulator> per;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const LossTerms t = bc_loss(preds[i], s.plan, s.action, lambda);
    SampleLoss sl{s.episode_id, s.t_index, s.scenario, t.global_l2, global_l1(preds[i], s.plan), t.local_l1, t.total};
    all.add(sl);
    per[s.scenario].add(sl);
    report.per_sample.push_back(std::move(sl));
  }
  report.overall = all.record(epoch, split, "all");
  for (const auto& [name, acc] : per) report.per_scenario.emplace(name, acc.record(epoch, split, name));
  return report;
}

EvalReport evaluate(const ModelParams& params, const std::vector<TrainingSample>& samples, const ModelConfig& config,
                    double lambda, int epoch, const std::string& split) {
  if (samples.empty()) throw InputError("evaluate: no samples");
  std::vector<NetworkOutput> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(forward(s.input, config, params));
  return score_predictions(samples, preds, lambda, epoch, split);
}

Adam::Adam(const ModelParams& params, const TrainConfig& config)
    : lr_(config.lr), b1_(config.beta1), b2_(config.beta2), eps_(config.adam_eps) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.value.shape);
    v_.emplace_back(e.value.shape);
  }
}

void Adam::step(ModelParams& params, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto& entries = params.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& w = entries[p].value.data;
    const auto& g = grads.tensors[p].data;
    auto& m = m_[p].data;
    auto& v = v_[p].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

TrainResult train(const std::vector<TrainingSample>& samples, const ModelConfig& model_config,
                  const TrainConfig& cfg, const std::vector<TrainingSample>* test_samples,
                  const std::function<void(const EpochReport&, const ModelParams&)>& on_epoch) {
  if (samples.empty()) throw InputError("train: empty dataset");
  model_config.validate();
  cfg.validate();

  TrainResult result{init_params(model_config, cfg.seed), {}, {}};
  ModelParams& params = result.params;
  Gradients grads(params);
  Adam adam(params, cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(samples.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    adam.set_lr(cfg.lr_at(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    Accumulator train_acc;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t k = start; k < end; ++k) {
        const TrainingSample& s = samples[order[k]];
        Graph g;
        const ForwardVars fv = build_forward(g, s.input, model_config, params, &grads);
        const LossVars lv = build_bc_loss(g, fv, s.plan, s.action, cfg.lambda);
        const double total = g.scalar(lv.total);
        if (!std::isfinite(total))
          throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_index) + " (sample " + s.episode_id + "@" +
                               std::to_string(s.t_index) + ")");
        SampleLoss sl;
        sl.global_l2 = g.scalar(lv.global_l2);
        sl.local_l1 = g.scalar(lv.local_l1);
        sl.total = total;
        {
          const auto& wp = g.value(fv.waypoints).data;
          double a = 0.0;
          for (int i = 0; i < kPlanLength; ++i)
            a += std::abs(wp[2 * i] - s.plan.waypoints[i].x) + std::abs(wp[2 * i + 1] - s.plan.waypoints[i].y);
          sl.global_l1 = a / (2 * kPlanLength);
        }
        train_acc.add(sl);
        g.backward(ad::scale(g, lv.total, inv_batch));
      }
      const double norm = grads.global_norm();
      if (!std::isfinite(norm))
        throw NumericalError("non-finite gradient in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
        const double s = cfg.grad_clip / norm;
        for (auto& t : grads.tensors)
          for (double& v : t.data) v *= s;
      }
      adam.step(params, grads);
    }

    EpochReport report;
    report.epoch = epoch;
    report.train = train_acc.record(epoch, "train", "all");
    result.history.push_back(report.train);
    if (test_samples && !test_samples->empty()) {
      result.final_test = evaluate(params, *test_samples, model_config, cfg.lambda, epoch, "test");
      result.history.push_back(result.final_test.overall);
      for (const auto& [name, rec] : result.final_test.per_scenario) result.history.push_back(rec);
      report.test = &result.final_test;
    }
    if (on_epoch) on_epoch(report, params);
  }
  return result;
}

}  // namespace socnav
