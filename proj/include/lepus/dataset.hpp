#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lepus::expert {

// Time-indexed joint (state, action) records grouped by round. Records are
// stored back to back: a state record is M*D values (agent-major), an action
// record M*3 values.
class JointTrajectoryDataset {
 public:
  JointTrajectoryDataset() = default;
  JointTrajectoryDataset(int n_agents, int obs_dim, std::string track_id = "", std::string config_digest = "");

  // Appends one round; validates sizes and action bounds.
  void AddRound(std::span<const double> states, std::span<const double> actions);

  int n_agents() const { return n_agents_; }
  int obs_dim() const { return obs_dim_; }
  int state_width() const { return n_agents_ * obs_dim_; }
  int action_width() const { return n_agents_ * 3; }
  const std::string& track_id() const { return track_id_; }
  const std::string& config_digest() const { return config_digest_; }
  void set_config_digest(std::string digest) { config_digest_ = std::move(digest); }

  std::size_t num_rounds() const { return round_offsets_.size() > 0 ? round_offsets_.size() - 1 : 0; }
  std::size_t num_records() const { return round_offsets_.empty() ? 0 : round_offsets_.back(); }
  bool empty() const { return num_records() == 0; }
  std::size_t round_length(std::size_t r) const { return round_offsets_.at(r + 1) - round_offsets_.at(r); }
  std::size_t round_begin(std::size_t r) const { return round_offsets_.at(r); }

  Eigen::Map<const Eigen::VectorXd> state(std::size_t record) const;
  Eigen::Map<const Eigen::VectorXd> action(std::size_t record) const;
  // Columns are the requested records: (M*D) x B and (M*3) x B.
  Eigen::MatrixXd GatherStates(std::span<const std::size_t> records) const;
  Eigen::MatrixXd GatherActions(std::span<const std::size_t> records) const;

  // Rounds [begin, end) as a new dataset with the same metadata.
  JointTrajectoryDataset SliceRounds(std::size_t begin, std::size_t end) const;
  // First ceil(fraction * rounds) rounds (at least one when non-empty).
  JointTrajectoryDataset LeadingFraction(double fraction) const;

  std::uint64_t PayloadDigest() const;
  bool operator==(const JointTrajectoryDataset& other) const;

  const std::vector<double>& raw_states() const { return states_; }
  const std::vector<double>& raw_actions() const { return actions_; }

 private:
  int n_agents_ = 0;
  int obs_dim_ = 0;
  std::string track_id_;
  std::string config_digest_;
  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<std::size_t> round_offsets_{0};
};

// Versioned binary file: magic, version, JSON header (dims, round lengths,
// digests) then raw little-endian doubles (all states, then all actions).
void SaveDataset(const JointTrajectoryDataset& dataset, const std::filesystem::path& path);
JointTrajectoryDataset LoadDataset(const std::filesystem::path& path);

}  // namespace lepus::expert
