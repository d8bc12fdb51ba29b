#include <benchmark/benchmark.h>

#include <random>

#include "relucert/certify.hpp"
#include "relucert/geometry.hpp"
#include "relucert/mmr.hpp"
#include "relucert/network.hpp"

namespace {

using namespace relucert;

Vector uniform(int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x(i) = u(rng);
  return x;
}

// Widths of an MNIST-sized single hidden layer model, hidden width from the arg.
Network mnist_like(int hidden, std::mt19937_64& rng) {
  const std::vector<int> widths{784, hidden, 10};
  return init_network(widths, rng);
}

void BM_Forward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Network net = mnist_like(static_cast<int>(state.range(0)), rng);
  const Vector x = uniform(784, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(1024);

void BM_AffineCoefficients(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const std::vector<int> widths{784, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 10};
  const Network net = init_network(widths, rng);
  const Vector x = uniform(784, rng);
  const ActivationPattern pattern = activation_pattern(forward(net, x));
  for (auto _ : state) benchmark::DoNotOptimize(affine_coefficients(net, pattern));
}
BENCHMARK(BM_AffineCoefficients)->Arg(64)->Arg(256);

void BM_RegionDistances(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Network net = mnist_like(static_cast<int>(state.range(0)), rng);
  const Vector x = uniform(784, rng);
  const Box box = Box::unit(784);
  const bool use_box = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(region_distances(net, x, PNorm::L2, use_box ? &box : nullptr));
}
BENCHMARK(BM_RegionDistances)->Args({128, 0})->Args({128, 1})->Args({1024, 1});

void BM_BoxDistance(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const int d = static_cast<int>(state.range(0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  OrientedHyperplane h;
  h.normal = Vector(d);
  for (int i = 0; i < d; ++i) h.normal(i) = gauss(rng);
  h.offset = -h.normal.dot(uniform(d, rng));
  const Vector x = uniform(d, rng);
  const Box box = Box::unit(d);
  const PNorm p = state.range(1) ? PNorm::Linf : PNorm::L2;
  for (auto _ : state) benchmark::DoNotOptimize(box_constrained_distance(h, x, p, box));
}
BENCHMARK(BM_BoxDistance)->Args({10, 0})->Args({784, 0})->Args({784, 1});

void BM_CertifyPoint(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const Network net = mnist_like(128, rng);
  const Vector x = uniform(784, rng);
  CertifyOptions o;
  o.box = Box::unit(784);
  o.budget = NeighborBudget(static_cast<int>(state.range(0)));
  const int label = argmax(logits(net, x));
  for (auto _ : state) benchmark::DoNotOptimize(certify_point(net, x, label, o));
}
BENCHMARK(BM_CertifyPoint)->Arg(0)->Arg(5);

void BM_ObjectiveGradient(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const Network net = mnist_like(128, rng);
  Dataset batch;
  for (int i = 0; i < 64; ++i) batch.add(uniform(784, rng), i % 10);
  MarginSettings s;
  s.lambda = state.range(0) ? 1.0 : 0.0;
  s.k_B = 12;
  s.k_D = 10;
  for (auto _ : state) benchmark::DoNotOptimize(objective_gradient(net, batch, s));
}
BENCHMARK(BM_ObjectiveGradient)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
