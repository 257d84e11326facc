#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vnt/common.hpp"

namespace vnt {

// FNV-1a 64-bit running digest. Content-addressed hashing for parameter
// freeze checks, dictionary identity and report determinism; not crypto.
class Fnv1a {
 public:
  void update(const void* data, size_t n);
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update_u64(uint64_t v);
  void update(const Matrix& m);  // dims + raw column-major doubles
  uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  uint64_t h_ = 1469598103934665603ULL;
};

// Digest of a set of named tensors; order-independent (names are sorted).
std::string digest_named_matrices(
    std::vector<std::pair<std::string, const Matrix*>> named);

std::string digest_file(const std::string& path);  // io_error if unreadable
std::string digest_string(const std::string& s);

}  // namespace vnt
