#include "zfs/store.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "zfs/nn/tensor.hpp"

namespace zfs::harness {

std::string config_fingerprint(const std::map<std::string, std::string>& kv) {
  std::string canonical;
  for (const auto& [k, v] : kv) canonical += k + "=" + v + "\n";
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string make_run_id(const std::string& fingerprint, uint64_t seed) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now).count();
  std::ostringstream os;
  os << fingerprint.substr(0, 8) << "-s" << seed << "-" << us;
  return os.str();
}

namespace {
std::string now_string() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}
}  // namespace

void ResultsStore::append(const RunRecord& r) const {
  if (const auto dir = std::filesystem::path(path_).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  std::ofstream out(path_, std::ios::app);
  ZFS_CHECK(out.good(), "cannot append to results store: " + path_);
  out << r.run_id << "\t" << r.fingerprint << "\t" << r.dataset << "\t" << r.objective << "\t"
      << r.encoder << "\t" << r.local_loss << "\t" << r.seed << "\t" << r.metric << "\t"
      << std::setprecision(10) << r.value << "\t" << r.wall_seconds << "\t" << r.version << "\t"
      << (r.timestamp.empty() ? now_string() : r.timestamp) << "\n";
}

std::vector<RunRecord> ResultsStore::load_all() const {
  std::vector<RunRecord> out;
  std::ifstream in(path_);
  if (!in.good()) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    RunRecord r;
    std::string seed;
    std::getline(is, r.run_id, '\t');
    std::getline(is, r.fingerprint, '\t');
    std::getline(is, r.dataset, '\t');
    std::getline(is, r.objective, '\t');
    std::getline(is, r.encoder, '\t');
    std::getline(is, r.local_loss, '\t');
    std::getline(is, seed, '\t');
    r.seed = std::stoull(seed);
    std::getline(is, r.metric, '\t');
    std::string value, wall;
    std::getline(is, value, '\t');
    r.value = std::stod(value);
    std::getline(is, wall, '\t');
    r.wall_seconds = std::stod(wall);
    std::getline(is, r.version, '\t');
    std::getline(is, r.timestamp, '\t');
    out.push_back(std::move(r));
  }
  return out;
}

namespace {
std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t\r");
    const auto e = tok.find_last_not_of(" \t\r");
    if (b == std::string::npos) continue;
    out.push_back(tok.substr(b, e - b + 1));
  }
  return out;
}
}  // namespace

GridSpec parse_grid_spec(const std::string& path) {
  std::ifstream in(path);
  ZFS_CHECK(in.good(), "cannot open grid spec: " + path);
  GridSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string value = line.substr(eq + 1);
    if (key == "datasets") spec.datasets = split_list(value);
    else if (key == "objectives") spec.objectives = split_list(value);
    else if (key == "local_losses") spec.local_losses = split_list(value);
    else if (key == "encoders") spec.encoders = split_list(value);
    else if (key == "seeds")
      for (const auto& s : split_list(value)) spec.seeds.push_back(std::stoull(s));
  }
  ZFS_CHECK(!spec.datasets.empty() && !spec.objectives.empty() && !spec.encoders.empty(),
            "grid spec must list datasets, objectives and encoders");
  if (spec.local_losses.empty()) spec.local_losses = {"none"};
  if (spec.seeds.empty()) spec.seeds = {0};
  return spec;
}

std::vector<GridCell> expand_grid(const GridSpec& spec) {
  std::vector<GridCell> cells;
  for (const auto& d : spec.datasets)
    for (const auto& o : spec.objectives)
      for (const auto& l : spec.local_losses)
        for (const auto& e : spec.encoders)
          for (uint64_t s : spec.seeds) cells.push_back(GridCell{d, o, l, e, s});
  return cells;
}

std::string render_zsl_table(const std::vector<RunRecord>& records, const std::string& dataset,
                             const std::string& metric) {
  // cell key: objective -> encoder -> local_loss -> latest value
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> table;
  std::set<std::string> encoders;
  for (const auto& r : records) {
    if (r.dataset != dataset || r.metric != metric) continue;
    table[r.objective][r.encoder][r.local_loss] = r.value;
    encoders.insert(r.encoder);
  }
  std::ostringstream os;
  os << "# " << metric << " on " << dataset << "\n";
  os << std::left << std::setw(14) << "model";
  const std::vector<std::string> losses = {"none", "ac", "lc"};
  for (const auto& e : encoders)
    for (const auto& l : losses)
      os << std::setw(14) << (e + "/" + (l == "none" ? "normal" : l));
  os << "\n";
  for (const auto& [obj, per_enc] : table) {
    os << std::setw(14) << obj;
    for (const auto& e : encoders)
      for (const auto& l : losses) {
        auto it_e = per_enc.find(e);
        if (it_e != per_enc.end() && it_e->second.count(l)) {
          std::ostringstream v;
          v << std::fixed << std::setprecision(4) << it_e->second.at(l);
          os << std::setw(14) << v.str();
        } else {
          os << std::setw(14) << "-";
        }
      }
    os << "\n";
  }
  return os.str();
}

}  // namespace zfs::harness
