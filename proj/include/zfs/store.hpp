#pragma once

#include <map>
#include <string>
#include <vector>

namespace zfs::harness {

struct RunRecord {
  std::string run_id;
  std::string fingerprint;
  std::string dataset;
  std::string objective;
  std::string encoder;
  std::string local_loss;
  uint64_t seed = 0;
  std::string metric;
  double value = 0;
  double wall_seconds = 0;
  std::string version;
  std::string timestamp;
};

/// Canonical fingerprint of a resolved configuration: keys sorted, one
/// key=value per line, FNV-1a 64 over the text.
std::string config_fingerprint(const std::map<std::string, std::string>& kv);

std::string make_run_id(const std::string& fingerprint, uint64_t seed);

/// Append-only tab-separated record store. Re-running a command appends; no
/// record is ever rewritten.
class ResultsStore {
 public:
  explicit ResultsStore(std::string path) : path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  void append(const RunRecord& r) const;
  std::vector<RunRecord> load_all() const;

 private:
  std::string path_;
};

struct GridSpec {
  std::vector<std::string> datasets;
  std::vector<std::string> objectives;
  std::vector<std::string> local_losses;
  std::vector<std::string> encoders;
  std::vector<uint64_t> seeds;

  int64_t cell_count() const {
    return static_cast<int64_t>(datasets.size()) * objectives.size() * local_losses.size() *
           encoders.size() * seeds.size();
  }
};

struct GridCell {
  std::string dataset, objective, local_loss, encoder;
  uint64_t seed;
};

GridSpec parse_grid_spec(const std::string& path);
std::vector<GridCell> expand_grid(const GridSpec& spec);

/// Text table in the layout of the ZSL results table: one row per
/// (objective), columns Normal/AC/LC per encoder family.
std::string render_zsl_table(const std::vector<RunRecord>& records, const std::string& dataset,
                             const std::string& metric = "zsl_top1");

}  // namespace zfs::harness
