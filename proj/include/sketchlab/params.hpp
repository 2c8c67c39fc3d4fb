#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sketchlab {

/// A learnable array together with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> dims;
  std::vector<T, Eigen::aligned_allocator<T>> value;
  std::vector<T, Eigen::aligned_allocator<T>> grad;

  Param() = default;
  Param(std::string n, std::vector<int> d, T fill = T{0}) : name(std::move(n)), dims(std::move(d)) {
    std::size_t count = 1;
    for (int v : dims) count *= static_cast<std::size_t>(v);
    value.assign(count, fill);
    grad.assign(count, T{0});
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Deterministic weight source shared by every model builder. Each parameter
/// draws from the stream in construction order, so identical (seed, topology)
/// yields identical weights.
class InitStream {
 public:
  explicit InitStream(std::uint64_t seed) : engine_(seed) {}

  template <typename T>
  void normal(Param<T>& p, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : p.value) v = static_cast<T>(dist(engine_));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sketchlab
