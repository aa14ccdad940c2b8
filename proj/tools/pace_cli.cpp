#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pace/harness.hpp"
#include "pace/logging.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                const std::string& policy, const std::string& granularity, std::optional<std::size_t> trainees,
                std::optional<unsigned> threads) {
  pace::ExperimentConfig config = config_path.empty() ? pace::ExperimentConfig{} : pace::load_config(config_path);
  if (seed) config.seed = *seed;
  if (!policy.empty()) config.policy = pace::parse_policy(policy);
  if (!granularity.empty()) config.granularity = pace::parse_granularity(granularity);
  if (trainees) config.trainees_per_archetype = *trainees;
  if (threads) config.threads = *threads;
  config.validate();

  const auto start = std::chrono::steady_clock::now();
  const pace::RunResult result = pace::run_training(config);
  pace::export_results(result, out_dir);
  {
    std::ofstream cfg(std::filesystem::path(out_dir) / "config.json");
    cfg << pace::config_to_json(config).dump(2) << '\n';
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::map<std::string, std::vector<std::optional<double>>> c50, re;
  for (const auto& t : result.trainees) {
    const std::string a(pace::to_string(t.archetype));
    c50[a].push_back(t.c50 ? std::optional<double>(100.0 * *t.c50) : std::nullopt);
    re[a].push_back(t.random_exam);
  }
  fmt::print("{} / {}: {} trainees x {} sessions in {:.1f}s\n", pace::to_string(config.policy),
             pace::to_string(config.granularity), result.trainees.size(), config.n_sessions, seconds);
  for (const auto& [a, values] : c50) {
    const auto c = pace::mean_std(values);
    const auto r = pace::mean_std(re[a]);
    fmt::print("  {:<16} C@{} {:6.2f} +- {:5.2f}   RE {:6.2f} +- {:5.2f}\n", a, config.n_sessions, c.mean, c.std,
               r.mean, r.std);
  }
  fmt::print("results written to {}\n", out_dir);
  return 0;
}

int generate_command(const std::string& params_path, const std::string& out) {
  pace::GraphGenParams params;
  if (!params_path.empty()) {
    std::ifstream in(params_path);
    if (!in) throw std::runtime_error("cannot open " + params_path);
    params = pace::graph_params_from_json(nlohmann::json::parse(in));
  }
  const pace::SkillGraph graph = pace::generate_synthetic_graph(params);
  pace::save_graph(graph, out);
  fmt::print("{} nodes, {} edges, {} incident types, {} assessable skills -> {}\n", graph.node_count(),
             graph.edge_count(), graph.incidents().size(), graph.skill_count(), out);
  return 0;
}

int replay_command(const std::string& log_path, const std::string& graph_path, bool propagation,
                   const std::string& csv_out) {
  pace::SkillGraph graph = pace::load_graph(graph_path);
  const auto log = pace::read_observation_log(std::filesystem::path(log_path), graph);
  std::optional<pace::SimilarityIndex> index;
  if (propagation) {
    index = pace::build_index(graph, pace::embed_skills(graph, pace::HashingEmbeddingProvider{}), {});
  }
  const pace::BeliefState state =
      pace::replay_observations(graph.skill_count(), 1.0, 1.0, log, index ? &*index : nullptr);
  const pace::BeliefSummary summary = pace::belief_summary(state);
  std::size_t practiced = 0;
  for (const auto& b : state.beliefs()) practiced += b.last_practiced ? 1 : 0;
  const nlohmann::json out = {{"observations", log.size()},
                              {"skill_count", state.size()},
                              {"practiced_skills", practiced},
                              {"coverage", summary.coverage},
                              {"weak_mean", summary.weak_mean},
                              {"mean_variance", summary.mean_variance}};
  std::cout << out.dump(2) << '\n';
  if (!csv_out.empty()) {
    std::ofstream csv(csv_out);
    if (!csv) throw std::runtime_error("cannot write " + csv_out);
    pace::write_belief_csv(csv, state, graph);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PACE curriculum engine"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a simulated training experiment");
  std::string config_path, out_dir, policy, granularity;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trainees;
  std::optional<unsigned> threads;
  run->add_option("--config", config_path, "Experiment config JSON")->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--policy", policy, "pace_full | pace_no_prop | pace_no_dyn | round_robin | deficit_driven");
  run->add_option("--granularity", granularity, "fine | medium | coarse");
  run->add_option("--trainees", trainees, "Trainees per archetype");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* gen = app.add_subcommand("generate-graph", "Write a synthetic skill graph");
  std::string params_path, graph_out;
  gen->add_option("--params", params_path, "Generator parameters JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", graph_out, "Graph JSON output")->required();

  auto* replay = app.add_subcommand("replay", "Rebuild beliefs from an observation log");
  std::string log_path, graph_path, csv_out;
  bool no_propagation = false;
  replay->add_option("--log", log_path, "Observation JSON-lines log")->required()->check(CLI::ExistingFile);
  replay->add_option("--graph", graph_path, "Skill graph JSON")->required()->check(CLI::ExistingFile);
  replay->add_flag("--no-propagation", no_propagation, "Apply evidence without propagation");
  replay->add_option("--beliefs-csv", csv_out, "Write per-node beliefs");

  CLI11_PARSE(app, argc, argv);
  pace::init_logging_from_env();
  try {
    if (*run) return run_command(config_path, out_dir, seed, policy, granularity, trainees, threads);
    if (*gen) return generate_command(params_path, graph_out);
    if (*replay) return replay_command(log_path, graph_path, !no_propagation, csv_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
