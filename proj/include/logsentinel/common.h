#ifndef LOGSENTINEL_COMMON_H_
#define LOGSENTINEL_COMMON_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace logsentinel {

// Error hierarchy. The CLI maps each family onto a process exit code:
// UsageError -> 2, DataError (and subclasses) -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised by tensor kernels on malformed shapes. A programming error rather
// than bad input, so it does not derive from DataError.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Seeded random source with platform-independent draws. The standard
// distributions are implementation-defined, so we derive uniforms, integers
// and normals from raw mt19937_64 output ourselves.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent child seed; used to give each stage its own stream.
  uint64_t fork_seed() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Hex-encoded SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Shortest round-trippable decimal representation of a double.
std::string format_double(double v);

}  // namespace logsentinel

#endif  // LOGSENTINEL_COMMON_H_
