#include "vnt/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace vnt {

namespace {

constexpr char kMagic[4] = {'V', 'N', 'T', 'A'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_i64(std::ostream& out, int64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>(static_cast<uint64_t>(v) >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw io_error("truncated archive: " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

int64_t read_i64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw io_error("truncated archive: " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return static_cast<int64_t>(v);
}

}  // namespace

const Matrix& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw io_error("archive has no tensor named '" + name + "'");
}

bool TensorArchive::has(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

void TensorArchive::add(const std::string& name, const Matrix& m) {
  tensors.emplace_back(name, m);
}

void save_archive(const TensorArchive& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for write: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  const std::string meta = a.meta.dump();
  write_u32(out, static_cast<uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u32(out, static_cast<uint32_t>(a.tensors.size()));
  for (const auto& [name, m] : a.tensors) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_i64(out, m.rows());
    write_i64(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
  }
  if (!out) throw io_error("write failed: " + path);
}

TensorArchive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open archive: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw io_error("not a tensor archive: " + path);
  const uint32_t version = read_u32(in, path);
  if (version != kVersion)
    throw io_error("unsupported archive version in " + path);
  const uint32_t meta_len = read_u32(in, path);
  std::string meta(meta_len, '\0');
  if (!in.read(meta.data(), meta_len)) throw io_error("truncated archive: " + path);
  TensorArchive a;
  try {
    a.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("bad archive metadata in " + path + ": " + e.what());
  }
  const uint32_t count = read_u32(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw io_error("truncated archive: " + path);
    const int64_t rows = read_i64(in, path);
    const int64_t cols = read_i64(in, path);
    if (rows < 0 || cols < 0 || rows * cols > (int64_t(1) << 32))
      throw io_error("implausible tensor shape in " + path);
    Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(Scalar) * m.size())))
      throw io_error("truncated archive: " + path);
    a.tensors.emplace_back(std::move(name), std::move(m));
  }
  return a;
}

}  // namespace vnt
