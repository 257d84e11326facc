#include "vnt/digest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace vnt {

void Fnv1a::update(const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = h_;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  h_ = h;
}

void Fnv1a::update_u64(uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  update(b, 8);
}

void Fnv1a::update(const Matrix& m) {
  update_u64(static_cast<uint64_t>(m.rows()));
  update_u64(static_cast<uint64_t>(m.cols()));
  update(m.data(), sizeof(Scalar) * static_cast<size_t>(m.size()));
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h_));
  return std::string(buf);
}

std::string digest_named_matrices(
    std::vector<std::pair<std::string, const Matrix*>> named) {
  std::sort(named.begin(), named.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Fnv1a f;
  for (const auto& [name, m] : named) {
    f.update(name);
    f.update(*m);
  }
  return f.hex();
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file for digest: " + path);
  Fnv1a f;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    f.update(buf, static_cast<size_t>(in.gcount()));
  }
  return f.hex();
}

std::string digest_string(const std::string& s) {
  Fnv1a f;
  f.update(s);
  return f.hex();
}

}  // namespace vnt
