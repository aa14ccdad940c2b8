#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pace/skill_graph.hpp"

namespace pace {

inline constexpr std::size_t kEmbeddingDim = 384;
using Embedding = std::array<double, kEmbeddingDim>;

/// Signed feature hashing of lowercased word tokens, L2-normalized.
/// Throws std::invalid_argument on empty text.
Embedding embed_node(std::string_view text);

double cosine(const Embedding& a, const Embedding& b);

/// phi = cos * exp(-epsilon * |d_i - d_j|)
double pair_similarity(double cos, double d_i, double d_j, double epsilon);
double pair_similarity(const Embedding& e_i, const Embedding& e_j, double d_i, double d_j, double epsilon);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Embedding embed(const SkillNode& node) const = 0;
};

class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  Embedding embed(const SkillNode& node) const override { return embed_node(node.text); }
};

/// Vectors computed elsewhere (e.g. by a sentence encoder), keyed by node id.
/// Vectors are re-normalized on load; wrong dimensions are rejected.
class PrecomputedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedEmbeddingProvider(const nlohmann::json& doc);
  static PrecomputedEmbeddingProvider from_file(const std::filesystem::path& path);
  Embedding embed(const SkillNode& node) const override;

 private:
  std::unordered_map<std::string, Embedding> vectors_;
};

/// One embedding per assessable node, laid out by SkillIndex.
std::vector<Embedding> embed_skills(const SkillGraph& graph, const EmbeddingProvider& provider);

struct SimilarityParams {
  double epsilon = 2.0;
  double threshold = 0.60;
};

struct Neighbor {
  SkillIndex skill;
  double phi;
};

/// Sparse symmetric cache of pairs with phi >= threshold.
class SimilarityIndex {
 public:
  SimilarityIndex() = default;
  /// `tie_rank[s]` orders equal-phi neighbors (rank of the node id); identity when empty.
  SimilarityIndex(std::size_t skill_count, SimilarityParams params, std::vector<std::uint32_t> tie_rank = {});

  double epsilon() const { return params_.epsilon; }
  double threshold() const { return params_.threshold; }
  std::size_t skill_count() const { return adjacency_.size(); }
  std::size_t pair_count() const { return pairs_; }

  /// Stores (a,b) and (b,a). Pairs below threshold or with a == b are ignored.
  void insert(SkillIndex a, SkillIndex b, double phi);

  /// Cached partners sorted by phi descending, ties by node id ascending.
  std::span<const Neighbor> neighbors(SkillIndex s) const;
  std::optional<double> phi(SkillIndex a, SkillIndex b) const;

 private:
  void insert_sorted(std::vector<Neighbor>& list, Neighbor n);

  SimilarityParams params_;
  std::vector<std::uint32_t> tie_rank_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::size_t pairs_ = 0;
};

/// Exhaustive all-pairs precompute over assessable nodes.
SimilarityIndex build_index(const SkillGraph& graph, std::span<const Embedding> embeddings,
                            const SimilarityParams& params = {});

/// Node-id view of SimilarityIndex::neighbors; unknown ids give an empty list.
std::vector<std::pair<std::string, double>> neighbors(const SimilarityIndex& index, const SkillGraph& graph,
                                                      std::string_view node_id);

/// CSV with header src,dst,phi; each unordered pair once (src < dst by id).
void write_index_csv(const SimilarityIndex& index, const SkillGraph& graph, std::ostream& out);

}  // namespace pace
