// SPDX-License-Identifier: Apache-2.0
#include "ppou/kmeans.hpp"

#include <limits>
#include <random>
#include <stdexcept>

namespace ppou {

namespace {

double sq_dist(const Eigen::MatrixXd& points, Eigen::Index r, const Eigen::MatrixXd& centroids,
               Eigen::Index c) {
  return (points.row(r) - centroids.row(c)).squaredNorm();
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));

  Eigen::VectorXd d2(n);
  for (Eigen::Index r = 0; r < n; ++r) d2(r) = sq_dist(points, r, centroids, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (Eigen::Index r = 0; r < n; ++r) {
        target -= d2(r);
        if (target <= 0.0) {
          chosen = r;
          break;
        }
      }
    } else {
      chosen = pick(rng);  // all points coincide with chosen centroids
    }
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index r = 0; r < n; ++r) {
      d2(r) = std::min(d2(r), sq_dist(points, r, centroids, c));
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int max_iterations, const Eigen::MatrixXd* warm_start) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > n) {
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds sample count " +
                                std::to_string(n));
  }

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centroids =
      warm_start != nullptr ? *warm_start : seed_plus_plus(points, k, rng);
  result.labels.assign(static_cast<std::size_t>(n), 0);

  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  Eigen::MatrixXd sums(k, points.cols());
  for (int it = 0; it < max_iterations; ++it) {
    result.iterations = it + 1;
    bool changed = false;
    for (Eigen::Index r = 0; r < n; ++r) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(points, r, result.centroids, c);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      if (result.labels[static_cast<std::size_t>(r)] != best_c) {
        result.labels[static_cast<std::size_t>(r)] = best_c;
        changed = true;
      }
    }
    if (!changed && it > 0) break;

    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int c = result.labels[static_cast<std::size_t>(r)];
      sums.row(c) += points.row(r);
      counts[static_cast<std::size_t>(c)]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seat an empty cluster at the point farthest from its centroid.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index r = 0; r < n; ++r) {
          const int rc = result.labels[static_cast<std::size_t>(r)];
          const double d = sq_dist(points, r, result.centroids, rc);
          if (d > far_d) {
            far_d = d;
            far = r;
          }
        }
        result.centroids.row(c) = points.row(far);
      }
    }
  }
  return result;
}

}  // namespace ppou
