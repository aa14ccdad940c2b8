#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "copilot_http.hpp"
#include "pace/harness.hpp"
#include "pace/logging.hpp"

namespace {

httplib::Server* g_server = nullptr;

void stop(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PACE co-pilot HTTP service"};
  std::string config_path;
  std::string graph_path;
  std::string catalog_path;
  std::string data_dir;
  std::string bind = "127.0.0.1:8080";
  app.add_option("--config", config_path, "JSON service config");
  app.add_option("--graph", graph_path, "Skill graph JSON (default: synthetic fixture)");
  app.add_option("--catalog", catalog_path, "Scenario catalog JSON");
  app.add_option("--data-dir", data_dir, "Event log directory (PACE_DATA_DIR)");
  app.add_option("--bind", bind, "host:port (PACE_BIND_ADDR)");
  CLI11_PARSE(app, argc, argv);

  pace::init_logging_from_env();
  try {
    pace::CopilotOptions options;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open " + config_path);
      const auto doc = nlohmann::json::parse(in);
      const auto base = std::filesystem::path(config_path).parent_path();
      auto rel = [&](const std::string& p) { return std::filesystem::path(p).is_relative() ? (base / p).string() : p; };
      if (doc.contains("graph_path") && graph_path.empty()) graph_path = rel(doc["graph_path"].get<std::string>());
      if (doc.contains("catalog_path") && catalog_path.empty()) {
        catalog_path = rel(doc["catalog_path"].get<std::string>());
      }
      if (doc.contains("data_dir") && data_dir.empty()) data_dir = rel(doc["data_dir"].get<std::string>());
      bind = doc.value("bind", bind);
      options.seed = doc.value("seed", options.seed);
      options.cold_start = doc.value("cold_start", options.cold_start);
      options.default_k = doc.value("default_k", options.default_k);
      options.alignment_threshold = doc.value("alignment_threshold", options.alignment_threshold);
      options.engine.kappa = doc.value("kappa", options.engine.kappa);
    }
    if (!data_dir.empty()) options.data_dir = data_dir;
    options = pace::copilot_options_from_env(options);
    if (const char* env = std::getenv("PACE_BIND_ADDR"); env != nullptr && *env != '\0') bind = env;

    pace::ExperimentConfig fixture_config;
    if (!graph_path.empty()) fixture_config.graph_path = graph_path;
    if (!catalog_path.empty()) fixture_config.catalog_path = catalog_path;
    auto fixture = pace::build_fixture(fixture_config);
    pace::CopilotService service(fixture, options);

    httplib::Server server;
    pace::mount_copilot(server, service);
    const auto [host, port] = pace::parse_bind_address(bind);
    g_server = &server;
    std::signal(SIGINT, stop);
    std::signal(SIGTERM, stop);
    spdlog::info("listening on {}:{}", host, port);
    std::cout << "listening on " << host << ':' << port << std::endl;
    if (!server.listen(host, port)) {
      std::cerr << "cannot bind " << bind << '\n';
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
