#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "trl3d/geometry.hpp"

namespace trl3d {

/// Frame embeddings, one row per frame.
using Embeddings = Eigen::MatrixXd;

struct NearestNeighborMaps {
    std::vector<std::size_t> forward;  // j(i): nearest row of V to u_i
    std::vector<std::size_t> cycle;    // k(i): nearest row of U to v_{j(i)}
};

struct AlignmentReport {
    double alignment_error = 0.0;
    double cycle_error = 0.0;
    double kendall_tau = 0.0;
    std::vector<std::size_t> nn_map_ab;
    std::vector<std::size_t> nn_map_ba;
};

struct DisparityReport {
    double position_disparity = 0.0;
    double orientation_disparity = 0.0;
};

/// Index of the row of `rows` closest to `query` (Euclidean); ties to the lowest index.
std::size_t nearest_row(const Embeddings& rows, const Eigen::VectorXd& query);

NearestNeighborMaps nn_align(const Embeddings& u, const Embeddings& v);

/// mean_i |i - map(i)| / N
double alignment_error(const std::vector<std::size_t>& j_map, std::size_t n);
double cycle_error(const std::vector<std::size_t>& k_map, std::size_t n);

/// (concordant - discordant) / (N(N-1)/2) over pairs i<j with their nearest
/// neighbours p, q in V. Tied neighbours (p == q) count as discordant.
double kendall_tau(const Embeddings& u, const Embeddings& v);

/// Alignment of U against V (direction U -> V).
AlignmentReport evaluate_alignment(const Embeddings& u, const Embeddings& v);

double pearson_r(const std::vector<double>& a, const std::vector<double>& b);
double fisher_mean_r(const std::vector<double>& rs);

/// Sum of squared residuals after similarity alignment of unit-norm, centred
/// copies (reflections allowed). Inputs are [n,3] point sets in correspondence.
double procrustes_disparity(const Eigen::MatrixX3d& x, const Eigen::MatrixX3d& y);

DisparityReport camera_eval(const std::vector<CameraExtrinsics>& est, const std::vector<CameraExtrinsics>& gt);

}  // namespace trl3d
