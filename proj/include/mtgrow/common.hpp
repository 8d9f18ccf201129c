#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtgrow {

enum class ErrorKind {
  Shape,          // tensor dimension disagreement
  Domain,         // argument outside its valid range
  Vocab,          // bad token id / vocabulary inconsistency
  BadMagic,       // checkpoint file does not start with the container magic
  BadVersion,     // container format version not supported
  Truncated,      // file shorter than its header claims
  IndexMismatch,  // tensor byte length disagrees with its index entry
  Manifest,       // experiment manifest schema violation
  StageDependency,// required upstream artifact missing or from another manifest
  Io,             // filesystem failure
  NonFinite,      // non-finite value where a finite one is required
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// splitmix64; used to derive per-purpose seeds from a master seed.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, 64 bit. Content stamps and seed derivation, not cryptographic.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Gaussian stream with a fully specified sequence (mt19937_64 + Box-Muller),
// so noise streams can be regenerated exactly for surgery provenance checks.
// std::normal_distribution is implementation-defined and deliberately avoided.
class GaussianStream {
 public:
  explicit GaussianStream(uint64_t seed) : gen_(seed) {}

  // uniform in (0,1]
  double uniform_pos() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }
  // uniform in [0,1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  uint64_t next_u64() { return gen_(); }

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// Split on runs of whitespace (space, tab, newline). No empty tokens.
std::vector<std::string> split_ws(const std::string& text);

}  // namespace mtgrow
