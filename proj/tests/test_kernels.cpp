// Scalar/SIMD kernel equivalence: every backend must produce bit-identical
// results to the scalar reference on every size, including ragged tails.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "prunix/kernels.hpp"
#include "prunix/rng.hpp"

using namespace prunix;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, bool with_zeros = true) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (with_zeros && rng.uniform() < 0.1)
      v[i] = 0.0f;
    else
      v[i] = rng.uniform_f(-2.0f, 2.0f);
  }
  return v;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool bit_equal(float a, float b) {
  return std::memcmp(&a, &b, sizeof(float)) == 0;
}

const std::size_t kSizes[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 63, 64, 65, 257};

}  // namespace

TEST_CASE("simd backends match the scalar reference bit for bit") {
  const kern::detail::Impl& ref = kern::detail::scalar_impl();
  std::vector<std::pair<const char*, const kern::detail::Impl*>> variants;
  if (kern::backend_supported(kern::Backend::avx2))
    variants.emplace_back("avx2", kern::detail::avx2_impl());
  if (kern::backend_supported(kern::Backend::neon))
    variants.emplace_back("neon", kern::detail::neon_impl());
  if (variants.empty()) {
    MESSAGE("no SIMD backend on this machine; scalar only");
    return;
  }

  Rng rng(20240901);
  for (const auto& [name, impl] : variants) {
    CAPTURE(name);
    for (const std::size_t n : kSizes) {
      CAPTURE(n);
      const auto x = random_vec(rng, n);
      const auto y = random_vec(rng, n);
      const float a = rng.uniform_f(-1.5f, 1.5f);
      const float c = rng.uniform_f(-1.0f, 1.0f);

      CHECK(bit_equal(ref.dot(x.data(), y.data(), n),
                      impl->dot(x.data(), y.data(), n)));
      CHECK(bit_equal(ref.sum(x.data(), n), impl->sum(x.data(), n)));

      auto y1 = y, y2 = y;
      ref.axpy(y1.data(), a, x.data(), n);
      impl->axpy(y2.data(), a, x.data(), n);
      CHECK(bit_equal(y1, y2));

      y1 = y;
      y2 = y;
      ref.add_const(y1.data(), c, n);
      impl->add_const(y2.data(), c, n);
      CHECK(bit_equal(y1, y2));

      y1 = y;
      y2 = y;
      ref.scale(y1.data(), a, n);
      impl->scale(y2.data(), a, n);
      CHECK(bit_equal(y1, y2));

      std::vector<float> d1(n), d2(n);
      ref.relu(d1.data(), x.data(), n);
      impl->relu(d2.data(), x.data(), n);
      CHECK(bit_equal(d1, d2));

      auto g1 = random_vec(rng, n);
      auto g2 = g1;
      ref.relu_backward(g1.data(), x.data(), y.data(), n);
      impl->relu_backward(g2.data(), x.data(), y.data(), n);
      CHECK(bit_equal(g1, g2));
    }
  }
}

TEST_CASE("relu edge values agree across backends") {
  const kern::detail::Impl& ref = kern::detail::scalar_impl();
  const kern::detail::Impl* avx2 = kern::backend_supported(kern::Backend::avx2)
                                       ? kern::detail::avx2_impl()
                                       : nullptr;
  if (avx2 == nullptr) return;
  const std::vector<float> edge = {-0.0f, 0.0f, -1e-30f, 1e-30f,
                                   -1.0f, 1.0f, 1e30f,   -1e30f};
  std::vector<float> a(edge.size()), b(edge.size());
  ref.relu(a.data(), edge.data(), edge.size());
  avx2->relu(b.data(), edge.data(), edge.size());
  CHECK(bit_equal(a, b));
}

TEST_CASE("forced backend selection") {
  CHECK(kern::backend_supported(kern::Backend::scalar));
  kern::force_backend(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  const float x[3] = {1.0f, 2.0f, 3.0f};
  CHECK(kern::sum(x, 3) == 6.0f);
  if (kern::backend_supported(kern::Backend::avx2)) {
    kern::force_backend(kern::Backend::avx2);
    CHECK(kern::active_backend() == kern::Backend::avx2);
    CHECK(kern::sum(x, 3) == 6.0f);
  }
  CHECK_THROWS_AS(kern::force_backend(static_cast<kern::Backend>(
                      kern::backend_supported(kern::Backend::avx2) ? 2 : 1)),
                  std::invalid_argument);
}

TEST_CASE("dot reduction order is the documented 8-lane contract") {
  // Values chosen so naive left-to-right summation differs in the last ulp;
  // the kernel must reproduce the 8-accumulator order exactly.
  Rng rng(7);
  std::vector<float> x = random_vec(rng, 37, false);
  std::vector<float> y = random_vec(rng, 37, false);
  float s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= x.size(); i += 8)
    for (int k = 0; k < 8; ++k) s[k] += x[i + k] * y[i + k];
  float expect = s[0];
  for (int k = 1; k < 8; ++k) expect += s[k];
  for (; i < x.size(); ++i) expect += x[i] * y[i];
  CHECK(bit_equal(expect,
                  kern::detail::scalar_impl().dot(x.data(), y.data(), x.size())));
}
