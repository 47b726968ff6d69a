#include <CLI11.hpp>

#include <iostream>

#include "socnav/errors.hpp"
#include "socnav/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multimodal social navigation: data generation, training and comparison"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, variant, pts_path;
  bool force = false;

  auto* gen = app.add_subcommand("gen-data", "Generate train and test episodes");
  auto* train = app.add_subcommand("train", "Train one variant for every seed in the spec");
  auto* compare = app.add_subcommand("compare", "Tabulate and plot test losses of variants and baselines");
  auto* vox = app.add_subcommand("voxelize", "Voxelize a points file into grid.vox");
  for (auto* sub : {gen, train, compare}) {
    sub->add_option("--spec", spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output root (default: runs/<spec name>)");
  }
  gen->add_flag("--force", force, "Replace existing episodes");
  train->add_flag("--force", force, "Replace existing runs");
  train->add_option("--variant", variant, "Modality variant")
      ->required()
      ->check(CLI::IsMember({"rgb", "lidar", "multimodal"}));
  vox->add_option("--spec", spec_path, "Experiment spec supplying data.grid (default grid otherwise)")
      ->check(CLI::ExistingFile);
  vox->add_option("--pts", pts_path, "Points file: float32 x, y, z triples")->required();
  vox->add_option("--out", out_dir, "Directory for grid.vox")->default_val(".");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (vox->parsed()) {
      socnav::GridSpec grid;
      if (!spec_path.empty()) grid = socnav::load_experiment_spec(spec_path).data.grid;
      std::cout << socnav::cmd_voxelize(pts_path, grid, out_dir) << "\n";
      return 0;
    }
    const socnav::ExperimentSpec spec = socnav::load_experiment_spec(spec_path);
    const std::filesystem::path out = out_dir.empty() ? std::filesystem::path("runs") / spec.name : std::filesystem::path(out_dir);
    if (gen->parsed()) {
      const auto m = socnav::cmd_gen_data(spec, out, force, &std::cerr);
      std::cout << m.episodes.size() << " episodes written to " << socnav::data_dir(out).string() << "\n";
    } else if (train->parsed()) {
      const auto runs = socnav::cmd_train(spec, socnav::parse_modality(variant), out, force, &std::cerr);
      for (const auto& r : runs)
        std::cout << variant << " seed " << r.seed << " final test total " << r.final_test.overall.total << "\n";
    } else if (compare->parsed()) {
      socnav::cmd_compare(spec, out, &std::cout);
      std::cout << "wrote " << (socnav::compare_dir(out) / "comparison.csv").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return socnav::exit_code_for(e);
  }
  return 0;
}
