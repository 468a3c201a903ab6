#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ghost/data/image.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ghost-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path data_dir() { return GHOST_DATA_DIR; }

inline ghost::data::Image random_binary(std::size_t w, std::size_t h, std::mt19937_64& rng, double p = 0.3) {
  std::bernoulli_distribution lit(p);
  ghost::data::Image img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = lit(rng) ? 1.0 : 0.0;
  return img;
}

inline ghost::data::Image random_gray(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ghost::data::Image img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = u(rng);
  return img;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace testing
