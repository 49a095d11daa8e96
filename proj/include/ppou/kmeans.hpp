// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace ppou {

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x d
  std::vector<int> labels;    // size n
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding and squared Euclidean
/// distances. Deterministic given the seed. Passing warm_start skips
/// seeding and refines the given centroids, which keeps cluster indices
/// stable across repeated calls on drifting data.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int max_iterations = 100, const Eigen::MatrixXd* warm_start = nullptr);

}  // namespace ppou
