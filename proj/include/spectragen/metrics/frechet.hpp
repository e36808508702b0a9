#pragma once

#include <Eigen/Dense>

namespace spectragen::metrics {

/// n x D feature matrix, one embedding per row.
using FeatureSet = Eigen::MatrixXd;

/**
 * |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with unbiased
 * covariances. Requires n > D on both sides.
 */
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

}  // namespace spectragen::metrics
