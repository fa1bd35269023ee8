#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tcim {

// Error taxonomy. The CLI maps ParseError/ValidationError/IoError to exit
// code 2 and FitError/SimulationError to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct SimulationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Collects non-fatal diagnostics (unknown CSV columns, substituted floor
// values, ...). Callers that pass nullptr opt out.
struct WarningLog {
  std::vector<std::string> messages;
  void add(std::string msg) { messages.push_back(std::move(msg)); }
  bool empty() const { return messages.empty(); }
};

inline void warn(WarningLog* log, std::string msg) {
  if (log != nullptr) log->add(std::move(msg));
}

// --- deterministic hashing ------------------------------------------------

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Per-realization seed stream: fully determined by (master seed, storm id,
// realization index) so ensembles reproduce independent of thread count.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    std::uint64_t index) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ fnv1a64(tag));
  h = splitmix64(h ^ index);
  return h;
}

std::string to_hex(std::uint64_t value);

// --- percentiles ------------------------------------------------------------

// Linear interpolation between closest ranks on a sorted sample.
// p is in percent, clamped to [0, 100].
double percentile_linear_sorted(const std::vector<double>& sorted, double p);
// Convenience: copies and sorts.
double percentile_linear(std::vector<double> values, double p);

// --- ISO-8601 timestamps ----------------------------------------------------

// Accepts YYYY-MM-DD[T ]HH:MM[:SS][Z]. Returns seconds since the Unix epoch.
std::int64_t parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

// --- small text helpers -----------------------------------------------------

std::vector<std::string> split_csv_line(std::string_view line);
std::string format_double(double value);  // deterministic %.10g rendering

// Atomic file write: writes to <path>.tmp then renames.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace tcim
