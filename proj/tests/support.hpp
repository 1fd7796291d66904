#pragma once

#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <string>

#include "healthpredictor/errors.hpp"

namespace hp::test {

// Runs `expr` and checks that it throws hp::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                     \
  do {                                                       \
    bool thrown_ = false;                                    \
    try {                                                    \
      (void)(expr);                                          \
    } catch (const ::hp::Error& e_) {                        \
      thrown_ = true;                                        \
      CHECK_MESSAGE(e_.code() == (expected), std::string(e_.what()));     \
    }                                                        \
    CHECK_MESSAGE(thrown_, "expected " #expected);           \
  } while (false)

inline Eigen::VectorXd random_simplex(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = e(rng);
  return v / v.sum();
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hp::test
