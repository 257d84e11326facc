#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vnt/common.hpp"

namespace vnt {

// Single-file archive for checkpoints / prompt dictionaries / module state.
// Layout (little-endian):
//   magic "VNTA", u32 version, u32 meta_len, meta JSON bytes,
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, i64 rows, i64 cols, rows*cols f64 column-major.
struct TensorArchive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> tensors;  // insertion order

  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const;
  void add(const std::string& name, const Matrix& m);
};

void save_archive(const TensorArchive& a, const std::string& path);
TensorArchive load_archive(const std::string& path);

}  // namespace vnt
