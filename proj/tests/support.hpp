#pragma once

#include <cmath>
#include <random>

#include <doctest.h>

#include "imse/errors.hpp"
#include "imse/linalg.hpp"
#include "instances.hpp"

#define CHECK_CODE(expr, expected)                                          \
  do {                                                                      \
    bool thrown_ = false;                                                   \
    try {                                                                   \
      (void)(expr);                                                         \
    } catch (const imse::Error& e_) {                                       \
      thrown_ = true;                                                       \
      CHECK_MESSAGE(e_.code() == (expected), "got " << e_.what());          \
    }                                                                       \
    CHECK_MESSAGE(thrown_, "expected " << imse::error_name(expected));      \
  } while (0)

namespace testing {

inline imse::Mat scalar(double v) { return imse::Mat::Constant(1, 1, v); }

inline imse::Mat random_spd(std::mt19937_64& gen, int n, double floor = 0.2) {
  std::normal_distribution<double> nd;
  imse::Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = nd(gen);
  return M * M.transpose() + floor * imse::Mat::Identity(n, n);
}

}  // namespace testing
