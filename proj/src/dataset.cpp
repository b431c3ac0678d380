#include "lepus/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lepus/digest.hpp"
#include "lepus/error.hpp"

namespace lepus::expert {
namespace {

constexpr char kMagic[8] = {'L', 'E', 'P', 'U', 'S', 'D', 'S', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

template <typename T>
void WritePod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("dataset file truncated in preamble");
  return value;
}

}  // namespace

JointTrajectoryDataset::JointTrajectoryDataset(int n_agents, int obs_dim, std::string track_id,
                                               std::string config_digest)
    : n_agents_(n_agents), obs_dim_(obs_dim), track_id_(std::move(track_id)), config_digest_(std::move(config_digest)) {
  if (n_agents < 1 || obs_dim < 1) throw ValueError("dataset needs n_agents >= 1 and obs_dim >= 1");
}

void JointTrajectoryDataset::AddRound(std::span<const double> states, std::span<const double> actions) {
  const auto sw = static_cast<std::size_t>(state_width());
  const auto aw = static_cast<std::size_t>(action_width());
  if (sw == 0) throw ValueError("dataset has no dimensions");
  if (states.size() % sw != 0 || actions.size() % aw != 0 || states.size() / sw != actions.size() / aw)
    throw ShapeError("round states/actions do not match the dataset dimensions");
  for (std::size_t k = 0; k < actions.size(); ++k) {
    const double a = actions[k];
    const bool steering = (k % 3) == 0;
    if (!std::isfinite(a) || (steering ? (a < -1.0 || a > 1.0) : (a < 0.0 || a > 1.0)))
      throw ValueError("round contains an out-of-bounds action");
  }
  for (double s : states)
    if (!std::isfinite(s)) throw ValueError("round contains a non-finite state");
  states_.insert(states_.end(), states.begin(), states.end());
  actions_.insert(actions_.end(), actions.begin(), actions.end());
  round_offsets_.push_back(round_offsets_.back() + states.size() / sw);
}

Eigen::Map<const Eigen::VectorXd> JointTrajectoryDataset::state(std::size_t record) const {
  if (record >= num_records()) throw ValueError("record index out of range");
  return {states_.data() + record * static_cast<std::size_t>(state_width()), state_width()};
}

Eigen::Map<const Eigen::VectorXd> JointTrajectoryDataset::action(std::size_t record) const {
  if (record >= num_records()) throw ValueError("record index out of range");
  return {actions_.data() + record * static_cast<std::size_t>(action_width()), action_width()};
}

Eigen::MatrixXd JointTrajectoryDataset::GatherStates(std::span<const std::size_t> records) const {
  Eigen::MatrixXd out(state_width(), static_cast<Eigen::Index>(records.size()));
  for (std::size_t c = 0; c < records.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = state(records[c]);
  return out;
}

Eigen::MatrixXd JointTrajectoryDataset::GatherActions(std::span<const std::size_t> records) const {
  Eigen::MatrixXd out(action_width(), static_cast<Eigen::Index>(records.size()));
  for (std::size_t c = 0; c < records.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = action(records[c]);
  return out;
}

JointTrajectoryDataset JointTrajectoryDataset::SliceRounds(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_rounds()) throw ValueError("round slice out of range");
  JointTrajectoryDataset out(n_agents_, obs_dim_, track_id_, config_digest_);
  const auto sw = static_cast<std::size_t>(state_width());
  const auto aw = static_cast<std::size_t>(action_width());
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t b = round_offsets_[r];
    const std::size_t n = round_length(r);
    out.states_.insert(out.states_.end(), states_.begin() + static_cast<std::ptrdiff_t>(b * sw),
                       states_.begin() + static_cast<std::ptrdiff_t>((b + n) * sw));
    out.actions_.insert(out.actions_.end(), actions_.begin() + static_cast<std::ptrdiff_t>(b * aw),
                        actions_.begin() + static_cast<std::ptrdiff_t>((b + n) * aw));
    out.round_offsets_.push_back(out.round_offsets_.back() + n);
  }
  return out;
}

JointTrajectoryDataset JointTrajectoryDataset::LeadingFraction(double fraction) const {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValueError("expert fraction must lie in (0, 1]");
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_rounds()) - 1e-9));
  if (num_rounds() > 0) n = std::clamp<std::size_t>(n, 1, num_rounds());
  return SliceRounds(0, n);
}

namespace {

std::uint64_t Digest(int m, int d, std::span<const std::size_t> offsets, std::span<const double> states,
                     std::span<const double> actions) {
  Fnv1a h;
  h.UpdateValue(static_cast<std::int64_t>(m));
  h.UpdateValue(static_cast<std::int64_t>(d));
  for (std::size_t off : offsets) h.UpdateValue(static_cast<std::uint64_t>(off));
  h.Update(states);
  h.Update(actions);
  return h.value();
}

}  // namespace

std::uint64_t JointTrajectoryDataset::PayloadDigest() const {
  return Digest(n_agents_, obs_dim_, round_offsets_, states_, actions_);
}

bool JointTrajectoryDataset::operator==(const JointTrajectoryDataset& other) const {
  return n_agents_ == other.n_agents_ && obs_dim_ == other.obs_dim_ && track_id_ == other.track_id_ &&
         config_digest_ == other.config_digest_ && round_offsets_ == other.round_offsets_ &&
         states_ == other.states_ && actions_ == other.actions_;
}

void SaveDataset(const JointTrajectoryDataset& dataset, const std::filesystem::path& path) {
  std::vector<std::uint64_t> lengths;
  for (std::size_t r = 0; r < dataset.num_rounds(); ++r) lengths.push_back(dataset.round_length(r));
  const nlohmann::json header = {{"format", "lepus.dataset"},
                                 {"n_agents", dataset.n_agents()},
                                 {"obs_dim", dataset.obs_dim()},
                                 {"action_dim", 3},
                                 {"state_width", dataset.state_width()},
                                 {"action_width", dataset.action_width()},
                                 {"round_lengths", lengths},
                                 {"track_id", dataset.track_id()},
                                 {"config_digest", dataset.config_digest()},
                                 {"payload_digest", DigestHex(dataset.PayloadDigest())}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  WritePod(out, kVersion);
  WritePod(out, std::uint32_t{0});
  WritePod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(dataset.raw_states().data()),
            static_cast<std::streamsize>(dataset.raw_states().size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(dataset.raw_actions().data()),
            static_cast<std::streamsize>(dataset.raw_actions().size() * sizeof(double)));
  if (!out) throw Error("io_error", "failed writing " + path.string());
}

JointTrajectoryDataset LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open dataset " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("not a dataset file");
  if (ReadPod<std::uint32_t>(in) != kVersion) throw FormatError("unsupported dataset version");
  ReadPod<std::uint32_t>(in);
  const auto header_len = ReadPod<std::uint64_t>(in);
  if (header_len > (1ULL << 30)) throw FormatError("dataset header too large");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("dataset file truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset header is not valid JSON: ") + e.what());
  }
  try {
    if (header.at("format") != "lepus.dataset") throw FormatError("dataset header format tag mismatch");
    const int m = header.at("n_agents").get<int>();
    const int d = header.at("obs_dim").get<int>();
    if (m < 1 || d < 1) throw FormatError("dataset header has invalid dimensions");
    if (header.at("state_width").get<int>() != m * d || header.at("action_width").get<int>() != 3 * m)
      throw FormatError("dataset metadata (n_agents, obs_dim) disagrees with record widths");
    const auto lengths = header.at("round_lengths").get<std::vector<std::uint64_t>>();
    std::uint64_t records = 0;
    for (auto l : lengths) records += l;
    const std::size_t n_states = records * static_cast<std::uint64_t>(m * d);
    const std::size_t n_actions = records * static_cast<std::uint64_t>(3 * m);

    std::vector<double> states(n_states);
    std::vector<double> actions(n_actions);
    in.read(reinterpret_cast<char*>(states.data()), static_cast<std::streamsize>(n_states * sizeof(double)));
    in.read(reinterpret_cast<char*>(actions.data()), static_cast<std::streamsize>(n_actions * sizeof(double)));
    if (!in) throw FormatError("dataset file truncated in payload");
    in.peek();
    if (!in.eof()) throw FormatError("dataset file has trailing bytes (record widths disagree with metadata)");

    std::vector<std::size_t> offsets{0};
    for (auto l : lengths) offsets.push_back(offsets.back() + l);
    if (DigestHex(Digest(m, d, offsets, states, actions)) != header.at("payload_digest").get<std::string>())
      throw FormatError("dataset payload digest mismatch");

    JointTrajectoryDataset ds(m, d, header.at("track_id").get<std::string>(),
                              header.at("config_digest").get<std::string>());
    std::size_t s_off = 0;
    std::size_t a_off = 0;
    for (auto l : lengths) {
      const std::size_t ns = l * static_cast<std::uint64_t>(m * d);
      const std::size_t na = l * static_cast<std::uint64_t>(3 * m);
      ds.AddRound(std::span<const double>(states).subspan(s_off, ns),
                  std::span<const double>(actions).subspan(a_off, na));
      s_off += ns;
      a_off += na;
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset header missing fields: ") + e.what());
  }
}

}  // namespace lepus::expert
