#include "pace/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "pace/rng.hpp"

namespace pace {
namespace {

void normalize(Embedding& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw std::invalid_argument("embedding has zero norm");
  for (double& x : v) x /= norm;
}

}  // namespace

Embedding embed_node(std::string_view text) {
  Embedding v{};
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a(token);
    const std::size_t slot = h % kEmbeddingDim;
    v[slot] += ((h >> 40) & 1U) != 0 ? 1.0 : -1.0;
    any = true;
    token.clear();
  };
  for (const char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) != 0) {
      token.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      flush();
    }
  }
  flush();
  if (!any) throw std::invalid_argument("cannot embed empty text");
  // Colliding tokens with opposite signs can cancel exactly; fall back to the raw text hash.
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    v[fnv1a(text) % kEmbeddingDim] = 1.0;
  }
  normalize(v);
  return v;
}

double cosine(const Embedding& a, const Embedding& b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return dot / (na * nb);
}

double pair_similarity(double cos, double d_i, double d_j, double epsilon) {
  return cos * std::exp(-epsilon * std::abs(d_i - d_j));
}

double pair_similarity(const Embedding& e_i, const Embedding& e_j, double d_i, double d_j, double epsilon) {
  return pair_similarity(cosine(e_i, e_j), d_i, d_j, epsilon);
}

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("embedding file must be a JSON object of id -> vector");
  for (const auto& [id, arr] : doc.items()) {
    if (!arr.is_array() || arr.size() != kEmbeddingDim) {
      throw std::invalid_argument(fmt::format("embedding for '{}' must have exactly {} numbers", id, kEmbeddingDim));
    }
    Embedding v{};
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) v[i] = arr[i].get<double>();
    normalize(v);
    vectors_.emplace(id, v);
  }
}

PrecomputedEmbeddingProvider PrecomputedEmbeddingProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  return PrecomputedEmbeddingProvider(nlohmann::json::parse(in));
}

Embedding PrecomputedEmbeddingProvider::embed(const SkillNode& node) const {
  const auto it = vectors_.find(node.id);
  if (it == vectors_.end()) throw std::out_of_range("missing embedding for node '" + node.id + "'");
  return it->second;
}

std::vector<Embedding> embed_skills(const SkillGraph& graph, const EmbeddingProvider& provider) {
  std::vector<Embedding> out;
  out.reserve(graph.skill_count());
  for (SkillIndex s = 0; s < graph.skill_count(); ++s) out.push_back(provider.embed(graph.node(graph.node_of(s))));
  return out;
}

// ---------------------------------------------------------------------------

SimilarityIndex::SimilarityIndex(std::size_t skill_count, SimilarityParams params, std::vector<std::uint32_t> tie_rank)
    : params_(params), tie_rank_(std::move(tie_rank)), adjacency_(skill_count) {
  if (params_.threshold < 0.0) throw std::invalid_argument("similarity threshold must be non-negative");
  if (params_.epsilon < 0.0) throw std::invalid_argument("epsilon must be non-negative");
  if (tie_rank_.empty()) {
    tie_rank_.resize(skill_count);
    std::iota(tie_rank_.begin(), tie_rank_.end(), 0U);
  }
  if (tie_rank_.size() != skill_count) throw std::invalid_argument("tie rank size mismatch");
}

void SimilarityIndex::insert_sorted(std::vector<Neighbor>& list, Neighbor n) {
  auto before = [this](const Neighbor& a, const Neighbor& b) {
    if (a.phi != b.phi) return a.phi > b.phi;
    return tie_rank_[a.skill] < tie_rank_[b.skill];
  };
  const auto existing = std::find_if(list.begin(), list.end(), [&](const Neighbor& x) { return x.skill == n.skill; });
  if (existing != list.end()) list.erase(existing);
  list.insert(std::upper_bound(list.begin(), list.end(), n, before), n);
}

void SimilarityIndex::insert(SkillIndex a, SkillIndex b, double phi) {
  if (a == b || phi < params_.threshold) return;
  if (a >= adjacency_.size() || b >= adjacency_.size()) throw std::out_of_range("skill index out of range");
  const bool fresh = !this->phi(a, b).has_value();
  insert_sorted(adjacency_[a], {b, phi});
  insert_sorted(adjacency_[b], {a, phi});
  if (fresh) ++pairs_;
}

std::span<const Neighbor> SimilarityIndex::neighbors(SkillIndex s) const {
  if (s >= adjacency_.size()) return {};
  return adjacency_[s];
}

std::optional<double> SimilarityIndex::phi(SkillIndex a, SkillIndex b) const {
  if (a >= adjacency_.size()) return std::nullopt;
  for (const auto& n : adjacency_[a]) {
    if (n.skill == b) return n.phi;
  }
  return std::nullopt;
}

SimilarityIndex build_index(const SkillGraph& graph, std::span<const Embedding> embeddings,
                            const SimilarityParams& params) {
  const std::size_t n = graph.skill_count();
  if (embeddings.size() != n) {
    throw std::invalid_argument(fmt::format("expected {} embeddings (one per assessable node), got {}", n,
                                            embeddings.size()));
  }
  std::vector<SkillIndex> by_id(n);
  std::iota(by_id.begin(), by_id.end(), 0U);
  std::sort(by_id.begin(), by_id.end(),
            [&](SkillIndex a, SkillIndex b) { return graph.skill_id(a) < graph.skill_id(b); });
  std::vector<std::uint32_t> rank(n);
  for (std::uint32_t r = 0; r < n; ++r) rank[by_id[r]] = r;

  std::vector<double> depth(n);
  for (SkillIndex s = 0; s < n; ++s) depth[s] = normalized_depth(graph, graph.node_of(s));

  std::vector<std::vector<Neighbor>> lists(n);
  for (SkillIndex i = 0; i < n; ++i) {
    for (SkillIndex j = i + 1; j < n; ++j) {
      const double dot = std::inner_product(embeddings[i].begin(), embeddings[i].end(), embeddings[j].begin(), 0.0);
      const double phi = pair_similarity(dot, depth[i], depth[j], params.epsilon);
      if (phi >= params.threshold) {
        lists[i].push_back({j, phi});
        lists[j].push_back({i, phi});
      }
    }
  }
  SimilarityIndex index(n, params, std::move(rank));
  for (SkillIndex i = 0; i < n; ++i) {
    for (const auto& nb : lists[i]) {
      if (nb.skill > i) index.insert(i, nb.skill, nb.phi);
    }
  }
  return index;
}

std::vector<std::pair<std::string, double>> neighbors(const SimilarityIndex& index, const SkillGraph& graph,
                                                      std::string_view node_id) {
  std::vector<std::pair<std::string, double>> out;
  const auto s = graph.find_skill(node_id);
  if (!s) return out;
  for (const auto& nb : index.neighbors(*s)) out.emplace_back(graph.skill_id(nb.skill), nb.phi);
  return out;
}

void write_index_csv(const SimilarityIndex& index, const SkillGraph& graph, std::ostream& out) {
  out << "src,dst,phi\n";
  for (SkillIndex s = 0; s < index.skill_count(); ++s) {
    for (const auto& nb : index.neighbors(s)) {
      if (graph.skill_id(s) < graph.skill_id(nb.skill)) {
        out << graph.skill_id(s) << ',' << graph.skill_id(nb.skill) << ',' << fmt::format("{:.9f}", nb.phi) << '\n';
      }
    }
  }
}

}  // namespace pace
