#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <unistd.h>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "crm/nn.hpp"
#include "crm/rng.hpp"

namespace testing {

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

// central differences over every parameter
inline std::vector<double> fd_grad(crm::Model& model, const std::function<double()>& f, double step) {
  auto theta = model.params();
  std::vector<double> g(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double saved = theta[j];
    const double h = step * std::max(1.0, std::abs(saved));
    theta[j] = saved + h;
    const double up = f();
    theta[j] = saved - h;
    const double down = f();
    theta[j] = saved;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

inline crm::Model random_mlp(crm::Rng& rng) {
  const std::size_t in = 2 + rng.below(5);
  const std::size_t k = 2 + rng.below(4);
  std::vector<std::size_t> hidden;
  for (std::size_t l = rng.below(3); l > 0; --l) hidden.push_back(2 + rng.below(6));
  crm::Model m = hidden.empty() ? crm::Model::linear(in, k) : crm::Model::mlp(in, hidden, k);
  m.init_uniform(rng);
  for (auto& p : m.params()) p *= 2.0;
  return m;
}

inline std::vector<double> random_vec(crm::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("crm_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace testing
