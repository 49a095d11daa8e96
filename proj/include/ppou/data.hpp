// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ppou {

/// Scattered regression data. Optional columns are empty when absent:
/// group_id marks repeated measurements of one input, noise_floor carries a
/// per-sample background-noise variance, clean is the noiseless signal for
/// generators that know it, and params stores generator parameters (e.g.
/// the curve parameter t) for plotting.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<long> group_id;
  Eigen::VectorXd noise_floor;
  Eigen::VectorXd clean;
  Eigen::MatrixXd params;
  std::string provenance;

  long n() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
};

/// y = sin(2 pi x) + eps(x), eps(x) ~ N(0, (alpha x)^2), with n points
/// evenly spaced on [0, 1]. The clean signal is kept alongside.
Dataset gen_sine_noise(long n, double alpha, std::uint64_t seed);

/// Open trefoil knot in R^3 sampled at n evenly spaced parameters on
/// [0, 1.8 pi]; the target formula is applied exactly as parameterized.
Dataset gen_trefoil(long n);

struct SwissRollOptions {
  double t1_min = 1.5 * 3.14159265358979323846;
  double t1_max = 4.5 * 3.14159265358979323846;
  double t2_min = 0.0;
  double t2_max = 10.0;
  // 0 = exact endpoint-inclusive lattice; in (0, 1] = uniform jitter within
  // each lattice cell, as a fraction of the cell size.
  double jitter = 0.0;
};

/// Swiss roll x = (t1 cos t1, t2, t1 sin t1) with y = sqrt(nt1) sin(2 pi
/// nt2), where nt is the min-max normalization of the sampled t to [0,1]^2.
Dataset gen_swissroll(long n, std::uint64_t seed, const SwissRollOptions& options = {});

struct RingsOptions {
  double radius = 1.0;
  double spacing = 1.0;  // distance between consecutive ring centers on x1
};

/// n_rings unit circles with seeded random orientations embedded in R^dim,
/// centers evenly spaced along the x1 axis; per-ring targets are
/// sin(2 pi t + delta_r) with a seeded uniform phase shift.
Dataset gen_rings(int dim, int n_rings, long n, std::uint64_t seed,
                  const RingsOptions& options = {});

struct CsvSchema {
  // Empty input_columns = every column named x1..xd, in numeric order.
  std::vector<std::string> input_columns;
  std::string target_column = "y";
  std::string group_column = "group";
  std::string noise_column = "noise_floor";
  std::string clean_column = "clean";
};

/// Reads a headered CSV. Unrecognized columns are ignored. Parse failures
/// and non-finite values report the offending row and column.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes x1..xd, y and whatever optional columns the dataset carries,
/// with 17 significant digits so doubles round-trip losslessly.
void save_csv(const Dataset& data, const std::string& path);

/// Seeded shuffle, then partition into ceil(fraction*N) / rest.
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed);

/// Row subset in the given order.
Dataset take_rows(const Dataset& data, const std::vector<long>& rows);

}  // namespace ppou
