#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "testutil.hpp"
#include "vnt/digest.hpp"
#include "vnt/optim.hpp"
#include "vnt/rng.hpp"
#include "vnt/tensor_io.hpp"

using namespace vnt;

TEST_CASE("rng: same seed, same stream; different seeds diverge") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next(), y = b.next(), z = c.next();
    all_equal = all_equal && (x == y);
    any_diff = any_diff || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng: mt19937_64 reference value (sequence pinned by the standard)") {
  // 10000th draw of a default-seeded mt19937_64 per the C++ standard.
  std::mt19937_64 ref(5489u);
  ref.discard(9999);
  CHECK(ref() == 9981545732273789042ULL);
}

TEST_CASE("rng: below() stays in range and covers values") {
  Rng r(7);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 2000; ++i) {
    const uint64_t v = r.below(10);
    REQUIRE(v < 10);
    seen[static_cast<size_t>(v)]++;
  }
  for (int count : seen) CHECK(count > 100);  // roughly uniform
}

TEST_CASE("rng: normal() moments") {
  Rng r(1234);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("rng: sample without replacement is distinct and deterministic") {
  std::vector<int> pool{1, 3, 5, 7, 9, 11, 13};
  Rng a(9), b(9);
  auto s1 = a.sample(pool, 4);
  auto s2 = b.sample(pool, 4);
  CHECK(s1 == s2);
  std::sort(s1.begin(), s1.end());
  CHECK(std::adjacent_find(s1.begin(), s1.end()) == s1.end());
}

TEST_CASE("digest: deterministic, order-independent over names, content-sensitive") {
  Matrix a = testutil::random_matrix(3, 4, 1);
  Matrix b = testutil::random_matrix(2, 2, 2);
  const std::string d1 = digest_named_matrices({{"a", &a}, {"b", &b}});
  const std::string d2 = digest_named_matrices({{"b", &b}, {"a", &a}});
  CHECK(d1 == d2);
  Matrix a2 = a;
  a2(0, 0) += 1e-12;  // any bit flip must change the digest
  const std::string d3 = digest_named_matrices({{"a", &a2}, {"b", &b}});
  CHECK(d1 != d3);
}

TEST_CASE("tensor archive: roundtrip preserves bytes and metadata") {
  const std::string dir = testutil::scratch_dir("archive");
  TensorArchive a;
  a.meta = {{"kind", "test"}, {"value", 7}};
  a.add("first", testutil::random_matrix(5, 3, 10));
  a.add("second", testutil::random_matrix(1, 8, 11));
  a.add("empty", Matrix(0, 4));
  const std::string path = dir + "/arch.bin";
  save_archive(a, path);
  TensorArchive b = load_archive(path);
  CHECK(b.meta.at("kind") == "test");
  CHECK(b.meta.at("value") == 7);
  REQUIRE(b.tensors.size() == 3);
  CHECK(b.at("first") == a.at("first"));
  CHECK(b.at("second") == a.at("second"));
  CHECK(b.at("empty").rows() == 0);
  CHECK(b.at("empty").cols() == 4);
  CHECK_THROWS_AS(b.at("missing"), io_error);
  CHECK_THROWS_AS(load_archive(dir + "/nope.bin"), io_error);
}

TEST_CASE("tensor archive: corrupted magic rejected") {
  const std::string dir = testutil::scratch_dir("archive_bad");
  const std::string path = dir + "/bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  CHECK_THROWS_AS(load_archive(path), io_error);
}

TEST_CASE("adam: converges on a convex quadratic") {
  // minimize ||x - t||^2
  Matrix target = testutil::random_matrix(3, 3, 5);
  Matrix x = Matrix::Zero(3, 3);
  Adam opt(0.05);
  for (int i = 0; i < 2000; ++i) {
    Matrix g = 2.0 * (x - target);
    opt.step({&x}, {&g});
  }
  CHECK((x - target).norm() < 1e-3);
}

TEST_CASE("adam: rejects changing parameter count between steps") {
  Matrix a = Matrix::Zero(2, 2), g = Matrix::Ones(2, 2);
  Adam opt(0.1);
  opt.step({&a}, {&g});
  CHECK_THROWS_AS(opt.step({&a, &a}, {&g, &g}), shape_error);
}

TEST_CASE("mix_seed: distinct indices give distinct streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(3, 4) == mix_seed(3, 4));
}
