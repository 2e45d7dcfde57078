#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "realface/corpus.hpp"
#include "realface/model_io.hpp"

namespace realface::testing {

// Fitted once per test binary; the canonical 3x4x2 corpus at d = 256.
inline const FittedModel& canonical_model() {
  static const FittedModel model = fit_model(generate_synthetic_corpus(7, 256, canonical_modes(), 1.5));
  return model;
}

inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("realface_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::VectorXd uniform_vector(std::mt19937_64& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace realface::testing
