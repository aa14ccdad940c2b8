#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "pace/harness.hpp"

namespace pace {
namespace {

std::string cell(std::optional<double> v) { return v && std::isfinite(*v) ? fmt::format("{:.4f}", *v) : ""; }
std::string cell(double v) { return std::isfinite(v) ? fmt::format("{:.4f}", v) : ""; }

std::optional<double> percent(std::optional<double> fraction) {
  if (!fraction) return std::nullopt;
  return 100.0 * *fraction;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string current;
  std::istringstream in(line);
  while (std::getline(in, current, ',')) cells.push_back(current);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void export_results(const RunResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  const std::string policy(to_string(result.config.policy));
  const std::string granularity(to_string(result.config.granularity));

  {
    auto out = open_out(dir / "metrics.csv");
    out << "trainee,archetype,policy,granularity,C@10,C@30,C@50,Z2H,RE\n";
    for (const auto& t : result.trainees) {
      out << t.id << ',' << to_string(t.archetype) << ',' << policy << ',' << granularity << ','
          << cell(percent(t.c10)) << ',' << cell(percent(t.c30)) << ',' << cell(percent(t.c50)) << ','
          << cell(t.z2h ? std::optional<double>(*t.z2h) : std::nullopt) << ',' << cell(t.random_exam) << '\n';
    }
  }
  {
    auto out = open_out(dir / "series.csv");
    out << "trainee,archetype,policy,session,truth_coverage,belief_coverage,delta,mean_variance,explore_ratio,"
           "reward,best_score,lambda_hat,psi_hat\n";
    for (const auto& t : result.trainees) {
      for (const auto& s : t.series) {
        out << t.id << ',' << to_string(t.archetype) << ',' << policy << ',' << s.session << ','
            << cell(s.truth_coverage) << ',' << cell(s.belief_coverage) << ',' << cell(s.delta) << ','
            << cell(s.mean_variance) << ',' << cell(s.explore_ratio) << ',' << cell(s.reward) << ','
            << cell(s.best_score) << ',' << cell(s.lambda_hat) << ',' << cell(s.psi_hat) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "archetype,policy,granularity,n,C@10_mean,C@10_std,C@30_mean,C@30_std,C@50_mean,C@50_std,"
           "Z2H_mean,Z2H_std,Z2H_reached,RE_mean,RE_std\n";
    std::vector<ArchetypeName> order;
    std::map<ArchetypeName, std::vector<const TraineeResult*>> groups;
    for (const auto& t : result.trainees) {
      if (groups[t.archetype].empty()) order.push_back(t.archetype);
      groups[t.archetype].push_back(&t);
    }
    for (const ArchetypeName a : order) {
      const auto& members = groups[a];
      std::vector<std::optional<double>> c10, c30, c50, z2h, re;
      std::size_t reached = 0;
      for (const TraineeResult* t : members) {
        c10.push_back(percent(t->c10));
        c30.push_back(percent(t->c30));
        c50.push_back(percent(t->c50));
        z2h.push_back(t->z2h ? std::optional<double>(*t->z2h) : std::nullopt);
        re.push_back(t->random_exam);
        if (t->z2h) ++reached;
      }
      auto pair = [](std::span<const std::optional<double>> v) {
        const MeanStd m = mean_std(v);
        return m.n == 0 ? std::string(",") : fmt::format("{:.4f},{:.4f}", m.mean, m.std);
      };
      out << to_string(a) << ',' << policy << ',' << granularity << ',' << members.size() << ',' << pair(c10) << ','
          << pair(c30) << ',' << pair(c50) << ',' << pair(z2h) << ','
          << fmt::format("{:.4f}", static_cast<double>(reached) / static_cast<double>(members.size())) << ','
          << pair(re) << '\n';
    }
  }
  if (result.fixture) {
    auto out = open_out(dir / "trace.jsonl");
    for (const auto& t : result.trainees) {
      for (const auto& s : t.series) {
        for (std::size_t r = 0; r < s.batch.picks.size(); ++r) {
          nlohmann::json j = pick_to_json(s.batch, r, result.fixture->table);
          j["trainee"] = t.id;
          out << j.dump() << '\n';
        }
      }
    }
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 9) throw std::runtime_error("malformed metrics row: " + line);
    rows.push_back({c[0], c[1], c[2], c[3], parse_cell(c[4]), parse_cell(c[5]), parse_cell(c[6]), parse_cell(c[7]),
                    parse_cell(c[8])});
  }
  return rows;
}

}  // namespace pace
