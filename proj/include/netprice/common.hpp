#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace netprice {

/// Malformed input file (bad metadata, unparsable record, ...).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input violates a structural model assumption (self-loop, disconnected
/// graph, unservable commodity, ...).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Vector/matrix sizes do not line up.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A value is outside its admissible domain (negative cost, bad fraction).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operation refused because it would exceed a configured size cap.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_dim(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

/// FNV-1a 64-bit hash; used to fingerprint manifests in result files.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace netprice
