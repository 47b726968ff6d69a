#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "socnav/checkpoint.hpp"
#include "socnav/errors.hpp"
#include "socnav/experiment.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace socnav;
using socnav::testing::TempDir;

namespace {

json tiny_spec_json() {
  json model = to_json(tiny_config(Modality::multimodal));
  model.erase("modality");
  model.erase("grid");
  return {{"name", "tiny"},
          {"seeds", {1, 2}},
          {"variants", {"rgb", "lidar", "multimodal"}},
          {"data",
           {{"scenarios", {"zone_semantic", "geometry_maze"}},
            {"train_episodes", 1},
            {"test_episodes", 1},
            {"duration", 6.0},
            {"dt", 0.2},
            {"stride", 4},
            {"seed", 77}}},
          {"model", model},
          {"train", {{"lr", 0.003}, {"batch", 4}, {"epochs", 2}}},
          {"baselines", {"straight_pursuit", "dwa_lite"}}};
}

ExperimentSpec tiny_spec() { return experiment_spec_from_json(tiny_spec_json()); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Spec, ParsesAndFillsModelsPerVariant) {
  const ExperimentSpec s = tiny_spec();
  EXPECT_EQ(s.name, "tiny");
  ASSERT_EQ(s.variants.size(), 3u);
  for (Modality v : s.variants) {
    EXPECT_EQ(s.model(v).modality, v);
    EXPECT_EQ(s.model(v).embed_dim, 8);
  }
  EXPECT_EQ(s.train.epochs, 2);
  EXPECT_EQ(s.baselines.size(), 2u);
}

TEST(Spec, PerVariantOverridesApplyOnlyToThatVariant) {
  json j = tiny_spec_json();
  j["models"] = {{"lidar", {{"embed_dim", 12}}}};
  const ExperimentSpec s = experiment_spec_from_json(j);
  EXPECT_EQ(s.model(Modality::lidar).embed_dim, 12);
  EXPECT_EQ(s.model(Modality::rgb).embed_dim, 8);
}

TEST(Spec, RejectsBrokenSpecs) {
  auto broken = [](auto edit) {
    json j = tiny_spec_json();
    edit(j);
    return j;
  };
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["variants"] = json::array(); })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["seeds"] = json::array(); })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["seeds"] = {1, 1}; })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["variants"] = {"thermal"}; })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["data"]["scenarios"] = {"moon"}; })),
               ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["data"]["test_episodes"] = 0; })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["train"]["epochz"] = 3; })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j.erase("data"); })), ValidationError);
  EXPECT_THROW(experiment_spec_from_json(broken([](json& j) { j["data"]["stride"] = "two"; })), ValidationError);
}

TEST(Spec, MissingFileIsAMissingPrerequisite) {
  EXPECT_THROW(load_experiment_spec("/nonexistent/spec.json"), MissingPrerequisite);
}

TEST(Spec, ShippedConfigsParse) {
  for (const char* name : {"modality_benchmark.json", "demo.json", "overfit.json"})
    EXPECT_NO_THROW(load_experiment_spec(fs::path(SOCNAV_SOURCE_DIR) / "configs" / name)) << name;
}

TEST(GenData, CountsSplitsAndDisjointness) {
  TempDir dir("gen");
  const ExperimentSpec s = tiny_spec();
  const Manifest m = cmd_gen_data(s, dir.path(), false);
  ASSERT_EQ(m.episodes.size(), 4u);
  std::set<std::string> train_ids, test_ids;
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& e : m.episodes) {
    EXPECT_TRUE(fs::exists(data_dir(dir.path()) / "episodes" / e.id / "meta.json"));
    (e.split == "train" ? train_ids : test_ids).insert(e.id);
    (e.split == "train" ? train_seeds : test_seeds).insert(e.world_seed);
  }
  EXPECT_EQ(train_ids.size(), 2u);
  EXPECT_EQ(test_ids.size(), 2u);
  for (const auto& id : train_ids) EXPECT_FALSE(test_ids.count(id));
  for (auto seed : train_seeds) EXPECT_FALSE(test_seeds.count(seed));

  const Manifest back = read_manifest(data_dir(dir.path()));
  ASSERT_EQ(back.episodes.size(), m.episodes.size());
  EXPECT_EQ(back.episodes[0].id, m.episodes[0].id);
  EXPECT_EQ(back.episodes[0].frames, m.episodes[0].frames);
}

TEST(GenData, RerunWithForceIsIdentical) {
  TempDir a("gen_a"), b("gen_b");
  const ExperimentSpec s = tiny_spec();
  const Manifest ma = cmd_gen_data(s, a.path(), false);
  cmd_gen_data(s, b.path(), false);
  EXPECT_EQ(slurp(data_dir(a.path()) / "manifest.json"), slurp(data_dir(b.path()) / "manifest.json"));
  for (const auto& e : ma.episodes)
    EXPECT_EQ(load_episode(data_dir(a.path()) / "episodes" / e.id), load_episode(data_dir(b.path()) / "episodes" / e.id));

  EXPECT_THROW(cmd_gen_data(s, a.path(), false), ValidationError);
  cmd_gen_data(s, a.path(), true);
  EXPECT_EQ(slurp(data_dir(a.path()) / "manifest.json"), slurp(data_dir(b.path()) / "manifest.json"));
}

TEST(Subsample, FillsQuotasEvenlyAndKeepsOrder) {
  std::vector<TrainingSample> all;
  for (int i = 0; i < 30; ++i) {
    TrainingSample s;
    s.scenario = i % 3 == 0 ? "a" : "b";  // 10 of a, 20 of b
    s.t_index = i;
    all.push_back(s);
  }
  const auto kept = stratified_subsample(all, 9);
  ASSERT_EQ(kept.size(), 9u);
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    ++count[kept[i].scenario];
    if (i) EXPECT_LT(kept[i - 1].t_index, kept[i].t_index);
  }
  EXPECT_EQ(count["a"], 5);
  EXPECT_EQ(count["b"], 4);
  EXPECT_EQ(stratified_subsample(all, 0).size(), 30u);
  EXPECT_THROW(stratified_subsample(all, 31), ValidationError);
  EXPECT_THROW(stratified_subsample(all, 24), ValidationError);  // a cannot supply 12
}

TEST(Pipeline, TrainCompareAndArtifacts) {
  TempDir dir("pipe");
  const ExperimentSpec s = tiny_spec();
  EXPECT_THROW(cmd_train(s, Modality::rgb, dir.path(), false), MissingPrerequisite);
  cmd_gen_data(s, dir.path(), false);

  try {
    cmd_compare(s, dir.path());
    FAIL() << "compare without checkpoints must fail";
  } catch (const MissingPrerequisite& e) {
    EXPECT_NE(std::string(e.what()).find("rgb"), std::string::npos) << e.what();
  }

  std::map<Modality, std::vector<SeedRun>> runs;
  for (Modality v : s.variants) runs[v] = cmd_train(s, v, dir.path(), false);
  EXPECT_THROW(cmd_train(s, Modality::rgb, dir.path(), false), ValidationError);

  std::size_t train_rows = 0;
  for (std::uint64_t seed : s.seeds) {
    const fs::path rd = run_dir(dir.path(), Modality::lidar, seed);
    const Checkpoint ck = load_checkpoint(rd / "model.ckpt");
    EXPECT_EQ(ck.meta.seed, seed);
    EXPECT_EQ(ck.config.modality, Modality::lidar);
    for (const auto& r : read_history_csv(rd / "history.csv")) train_rows += r.split == "train";
  }
  EXPECT_EQ(train_rows, static_cast<std::size_t>(s.train.epochs) * s.seeds.size());

  const auto rows = cmd_compare(s, dir.path());
  const fs::path cdir = compare_dir(dir.path());
  for (const char* f : {"comparison.csv", "baselines/history.csv", "loss_all.png", "loss_zone_semantic.png",
                        "loss_geometry_maze.png"}) {
    ASSERT_TRUE(fs::exists(cdir / f)) << f;
    EXPECT_GT(fs::file_size(cdir / f), 0u) << f;
  }
  EXPECT_EQ(slurp(cdir / "loss_all.png").substr(1, 3), "PNG");

  // Aggregation oracle: per-seed scenario means recomputed from the raw sample files.
  for (Modality v : s.variants) {
    for (const std::string scen : {"all", "zone_semantic", "geometry_maze"}) {
      std::vector<double> seed_means;
      for (std::uint64_t seed : s.seeds) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : read_sample_csv(run_dir(dir.path(), v, seed) / "test_samples.csv"))
          if (scen == "all" || r.scenario == scen) sum += r.total, ++n;
        ASSERT_GT(n, 0);
        seed_means.push_back(sum / n);
      }
      const double mean = (seed_means[0] + seed_means[1]) / 2.0;
      const double sd = std::abs(seed_means[0] - seed_means[1]) / std::sqrt(2.0);
      auto it = std::find_if(rows.begin(), rows.end(),
                             [&](const ComparisonRow& r) { return r.method == to_string(v) && r.scenario == scen; });
      ASSERT_NE(it, rows.end());
      EXPECT_NEAR(it->mean_total, mean, 1e-12);
      EXPECT_NEAR(it->median_total, mean, 1e-12);
      EXPECT_NEAR(it->std_total, sd, 1e-12);
      EXPECT_EQ(it->n_seeds, 2);
    }
    // The in-memory final test record agrees with the per-sample file.
    for (std::size_t k = 0; k < s.seeds.size(); ++k) {
      double sum = 0.0;
      const auto recs = read_sample_csv(run_dir(dir.path(), v, s.seeds[k]) / "test_samples.csv");
      for (const auto& r : recs) sum += r.total;
      EXPECT_NEAR(runs[v][k].final_test.overall.total, sum / recs.size(), 1e-12);
    }
  }
  for (const char* m : {"baseline:straight_pursuit", "baseline:dwa_lite"})
    EXPECT_TRUE(std::any_of(rows.begin(), rows.end(), [&](const ComparisonRow& r) { return r.method == m; })) << m;
  std::set<std::string> baseline_splits;
  for (const auto& r : read_history_csv(cdir / "baselines" / "history.csv")) baseline_splits.insert(r.split);
  EXPECT_EQ(baseline_splits, (std::set<std::string>{"baseline:straight_pursuit", "baseline:dwa_lite"}));

  // Compare is a pure function of the files on disk.
  const std::string first = slurp(cdir / "comparison.csv");
  cmd_compare(s, dir.path());
  EXPECT_EQ(slurp(cdir / "comparison.csv"), first);
}

TEST(Pipeline, TrainIsDeterministicAcrossRuns) {
  TempDir a("det_a"), b("det_b");
  json j = tiny_spec_json();
  j["seeds"] = {3};
  const ExperimentSpec s = experiment_spec_from_json(j);
  cmd_gen_data(s, a.path(), false);
  cmd_gen_data(s, b.path(), false);
  const auto ra = cmd_train(s, Modality::multimodal, a.path(), false);
  const auto rb = cmd_train(s, Modality::multimodal, b.path(), false);
  EXPECT_EQ(ra[0].final_test.overall.total, rb[0].final_test.overall.total);
  EXPECT_EQ(slurp(run_dir(a.path(), Modality::multimodal, 3) / "history.csv"),
            slurp(run_dir(b.path(), Modality::multimodal, 3) / "history.csv"));
}

TEST(Voxelize, CountsMatchOracle) {
  TempDir dir("vox");
  const GridSpec grid;
  write_points_file(dir.path() / "empty.pts", {});
  EXPECT_EQ(cmd_voxelize(dir.path() / "empty.pts", grid, dir.path() / "e"), 0u);
  EXPECT_TRUE(fs::exists(dir.path() / "e" / "grid.vox"));

  write_points_file(dir.path() / "one.pts", {{1.0f, 0.5f, 0.2f}});
  EXPECT_EQ(cmd_voxelize(dir.path() / "one.pts", grid, dir.path() / "o"), 1u);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> ux(-1.f, 9.f), uy(-4.f, 4.f), uz(-1.f, 2.5f);
  std::vector<Point3f> pts(5000);
  std::set<std::array<int, 3>> cells;
  for (auto& p : pts) {
    p = {ux(rng), uy(rng), uz(rng)};
    const double x = p.x, y = p.y, z = p.z;
    if (x >= grid.x_min && x < grid.x_max && y >= grid.y_min && y < grid.y_max && z >= grid.z_min &&
        z < grid.z_min + grid.z_extent)
      cells.insert({static_cast<int>(std::floor((x - grid.x_min) / grid.voxel)),
                    static_cast<int>(std::floor((y - grid.y_min) / grid.voxel)),
                    static_cast<int>(std::floor((z - grid.z_min) / grid.voxel))});
  }
  write_points_file(dir.path() / "rand.pts", pts);
  EXPECT_EQ(cmd_voxelize(dir.path() / "rand.pts", grid, dir.path() / "r"), cells.size());

  std::ofstream(dir.path() / "bad.pts") << "12345";
  EXPECT_THROW(cmd_voxelize(dir.path() / "bad.pts", grid, dir.path() / "b"), FormatError);
  EXPECT_THROW(cmd_voxelize(dir.path() / "missing.pts", grid, dir.path() / "m"), FormatError);
}

TEST(Csv, HistoryRoundTripsExactly) {
  TempDir dir("csv");
  std::vector<LossRecord> recs{{1, "train", "all", 0.1, 1.0 / 3.0, 2e-17, 0.30000000000000004},
                               {2, "baseline:dwa_lite", "zone_semantic", 1e300, 0.0, 5.5, 7.0}};
  write_history_csv(dir.path() / "h.csv", recs);
  const auto back = read_history_csv(dir.path() / "h.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].epoch, recs[i].epoch);
    EXPECT_EQ(back[i].split, recs[i].split);
    EXPECT_EQ(back[i].scenario, recs[i].scenario);
    EXPECT_EQ(back[i].global_l2, recs[i].global_l2);
    EXPECT_EQ(back[i].global_l1, recs[i].global_l1);
    EXPECT_EQ(back[i].local_l1, recs[i].local_l1);
    EXPECT_EQ(back[i].total, recs[i].total);
  }
  std::ofstream(dir.path() / "bad.csv") << "epoch,split\n1,train\n";
  EXPECT_THROW(read_history_csv(dir.path() / "bad.csv"), FormatError);
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(exit_code_for(ValidationError("x")), 2);
  EXPECT_EQ(exit_code_for(FormatError("x")), 2);
  EXPECT_EQ(exit_code_for(MissingPrerequisite("x")), 3);
  EXPECT_EQ(exit_code_for(NumericalError("x")), 4);
  EXPECT_EQ(exit_code_for(StorageError("x")), 1);
}
