#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ctrlab::bench {

inline constexpr int kMetricsSchemaVersion = 1;

// one experiment output row; column order is fixed and versioned
struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  int iteration = 0;
  std::int64_t env_steps = 0;
  double wall_time_s = 0.0;
  double objective = 0.0;
  bool success = false;
  std::string cell_id = "nominal";
};

// Append-only CSV writer with a trailing checksum line; a truncated file is
// detectable by the missing/incorrect trailer.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  ~MetricsWriter();

  void write(const MetricsRecord& r);
  void close();

 private:
  void emit(const std::string& line);
  std::ofstream out_;
  std::uint64_t hash_;
  bool closed_ = false;
};

struct MetricsFile {
  int schema_version = 0;
  std::vector<MetricsRecord> records;
  bool checksum_ok = false;
};

MetricsFile read_metrics(const std::filesystem::path& path);

// field-for-field equality except wall_time_s
bool records_equal_modulo_walltime(const std::vector<MetricsRecord>& a,
                                   const std::vector<MetricsRecord>& b);

}  // namespace ctrlab::bench
