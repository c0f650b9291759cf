#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hrl/analysis.hpp"
#include "hrl/data.hpp"
#include "hrl/tasks.hpp"

namespace hrl {

using Json = nlohmann::json;

Json to_json(const Vec& v);
Json to_json(const Mat& m);  // array of rows
Vec vec_from_json(const Json& j);
Mat mat_from_json(const Json& j);

Json to_json(const PolicyTable& p);
PolicyTable policy_from_json(const Json& j);

Json to_json(const LinearTabularMDP& mdp);
LinearTabularMDP mdp_from_json(const Json& j);

Json to_json(const BehaviorPolicy& b);
BehaviorPolicy behavior_from_json(const Json& j);

Json to_json(const TabularTask& t);
TabularTask task_from_json(const Json& j);

Json to_json(const HighLevelDataset& d);
HighLevelDataset high_dataset_from_json(const Json& j);

Json to_json(const SkillDataset& d);
SkillDataset skill_dataset_from_json(const Json& j);

Json to_json(const std::vector<ContinuousTrajectory>& trajectories);
std::vector<ContinuousTrajectory> continuous_trajectories_from_json(const Json& j);

Json to_json(const DecompositionReport& r);
Json to_json(const BoundTerms& b);
Json to_json(const PipelineResult& r);

std::string read_file(const std::string& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);
void write_json(const std::string& path, const Json& j);
/// Parse errors carry "line L, column C" context.
Json read_json(const std::string& path);
Json parse_json_text(const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t x);

/// Shortest round-trip decimal; "inf", "-inf", "nan" for non-finite values.
std::string format_number(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string str() const;
};

}  // namespace hrl
