#pragma once

#include <vector>

#include "imse/linalg.hpp"

namespace imse {

struct KnnOptions {
  int k = 4;
  int max_dim = 8;     // trajectory vectors longer than this are windowed
  bool windowing = true;
  int groups = 10;     // delete-a-group jackknife
  int threads = 0;
};

struct EntropyRateEstimate {
  double rate = 0.0;  // nats/step
  double stderr_ = 0.0;
  int window = 0;     // steps per sample vector actually used
  int samples = 0;
};

// Kozachenko-Leonenko estimate on whitened rows of `samples` (one sample per row).
double knn_entropy(const Mat& samples, int k = 4, int threads = 0);

// Per-step h(E_0^n) - h(W_0^n) from trajectories of E with unit white noise W.
// Each row holds E_0..E_n stacked (length (n+1) * step_dim).
EntropyRateEstimate entropy_difference_rate_estimate(const Mat& trajectories, int step_dim,
                                                     int horizon,
                                                     const KnnOptions& options = {});

}  // namespace imse
