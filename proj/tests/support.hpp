#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "pace/engine.hpp"
#include "pace/skill_graph.hpp"

namespace pace::test {

/// Default 1,053-node fixture, built once per process.
std::shared_ptr<const Fixture> default_fixture();

SkillNode make_node(std::string id, NodeKind kind, std::string incident, int depth, std::string text = {});

/// q1 -implication-> c1 -entailment-> q2, one incident "inc".
SkillGraph toy_graph();

/// Linear chain of n questions in one incident.
SkillGraph chain_graph(std::size_t n);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::filesystem::path fixtures_dir();

}  // namespace pace::test
