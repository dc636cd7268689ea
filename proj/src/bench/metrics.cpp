#include "ctrlab/bench/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "ctrlab/util/math.hpp"

namespace ctrlab::bench {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

MetricsWriter::MetricsWriter(const std::filesystem::path& path)
    : hash_(0xCBF29CE484222325ull) {
  std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open " + path.string());
  emit("# schema=" + std::to_string(kMetricsSchemaVersion));
  emit("run_id,seed,iteration,env_steps,wall_time_s,objective,success,cell_id");
}

MetricsWriter::~MetricsWriter() {
  if (!closed_) close();
}

void MetricsWriter::emit(const std::string& line) {
  hash_ = fnv1a64(line, hash_);
  hash_ = fnv1a64("\n", hash_);
  out_ << line << "\n";
}

void MetricsWriter::write(const MetricsRecord& r) {
  if (closed_) throw std::logic_error("metrics file already closed");
  std::ostringstream os;
  os << r.run_id << ',' << r.seed << ',' << r.iteration << ',' << r.env_steps
     << ',' << format_double(r.wall_time_s) << ',' << format_double(r.objective)
     << ',' << (r.success ? 1 : 0) << ',' << r.cell_id;
  emit(os.str());
}

void MetricsWriter::close() {
  if (closed_) return;
  std::ostringstream os;
  os << "# fnv1a=" << std::hex << std::setw(16) << std::setfill('0') << hash_;
  out_ << os.str() << "\n";
  out_.flush();
  closed_ = true;
}

MetricsFile read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  MetricsFile f;
  std::uint64_t hash = 0xCBF29CE484222325ull;
  std::string line;
  bool saw_trailer = false;
  while (std::getline(in, line)) {
    if (line.rfind("# fnv1a=", 0) == 0) {
      const std::string hex = line.substr(8);
      std::uint64_t want = 0;
      std::istringstream(hex) >> std::hex >> want;
      f.checksum_ok = (want == hash);
      saw_trailer = true;
      break;
    }
    hash = fnv1a64(line, hash);
    hash = fnv1a64("\n", hash);
    if (line.rfind("# schema=", 0) == 0) {
      f.schema_version = std::stoi(line.substr(9));
      continue;
    }
    if (line.rfind("run_id,", 0) == 0 || line.empty()) continue;

    MetricsRecord r;
    std::istringstream is(line);
    std::string field;
    std::getline(is, r.run_id, ',');
    std::getline(is, field, ',');
    r.seed = std::stoull(field);
    std::getline(is, field, ',');
    r.iteration = std::stoi(field);
    std::getline(is, field, ',');
    r.env_steps = std::stoll(field);
    std::getline(is, field, ',');
    r.wall_time_s = std::stod(field);
    std::getline(is, field, ',');
    r.objective = std::stod(field);
    std::getline(is, field, ',');
    r.success = field == "1";
    std::getline(is, r.cell_id, ',');
    f.records.push_back(std::move(r));
  }
  if (!saw_trailer) f.checksum_ok = false;
  return f;
}

bool records_equal_modulo_walltime(const std::vector<MetricsRecord>& a,
                                   const std::vector<MetricsRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const MetricsRecord& x = a[i];
    const MetricsRecord& y = b[i];
    if (x.run_id != y.run_id || x.seed != y.seed ||
        x.iteration != y.iteration || x.env_steps != y.env_steps ||
        x.objective != y.objective || x.success != y.success ||
        x.cell_id != y.cell_id)
      return false;
  }
  return true;
}

}  // namespace ctrlab::bench
