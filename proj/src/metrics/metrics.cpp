#include "trl3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>

namespace trl3d {

namespace {

void check_pair(const Embeddings& u, const Embeddings& v, const char* who) {
    if (u.rows() == 0 || v.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty input");
    if (u.rows() != v.rows() || u.cols() != v.cols()) {
        throw std::invalid_argument(std::string(who) + ": sequences differ in shape (" + std::to_string(u.rows()) +
                                    "x" + std::to_string(u.cols()) + " vs " + std::to_string(v.rows()) + "x" +
                                    std::to_string(v.cols()) + ")");
    }
}

double map_error(const std::vector<std::size_t>& map, std::size_t n, const char* who) {
    if (n == 0 || map.size() != n) throw std::invalid_argument(std::string(who) + ": map length differs from N");
    // Integer total, one division: the result is the correctly rounded mean.
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (map[i] >= n) throw std::out_of_range(std::string(who) + ": map entry out of range");
        total += map[i] > i ? map[i] - i : i - map[i];
    }
    return static_cast<double>(total) / (static_cast<double>(n) * static_cast<double>(n));
}

Eigen::MatrixX3d normalised(const Eigen::MatrixX3d& x) {
    Eigen::MatrixX3d c = x.rowwise() - x.colwise().mean();
    const double norm = c.norm();
    if (!(norm > 1e-12)) throw std::invalid_argument("procrustes_disparity: degenerate point set (no spread)");
    return c / norm;
}

}  // namespace

std::size_t nearest_row(const Embeddings& rows, const Eigen::VectorXd& query) {
    if (rows.rows() == 0) throw std::invalid_argument("nearest_row: empty input");
    std::size_t best = 0;
    double best_d = (rows.row(0).transpose() - query).squaredNorm();
    for (Eigen::Index t = 1; t < rows.rows(); ++t) {
        const double d = (rows.row(t).transpose() - query).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(t);
        }
    }
    return best;
}

NearestNeighborMaps nn_align(const Embeddings& u, const Embeddings& v) {
    check_pair(u, v, "nn_align");
    NearestNeighborMaps maps;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const std::size_t j = nearest_row(v, u.row(i).transpose());
        maps.forward.push_back(j);
        maps.cycle.push_back(nearest_row(u, v.row(static_cast<Eigen::Index>(j)).transpose()));
    }
    return maps;
}

double alignment_error(const std::vector<std::size_t>& j_map, std::size_t n) {
    return map_error(j_map, n, "alignment_error");
}

double cycle_error(const std::vector<std::size_t>& k_map, std::size_t n) { return map_error(k_map, n, "cycle_error"); }

double kendall_tau(const Embeddings& u, const Embeddings& v) {
    check_pair(u, v, "kendall_tau");
    const std::size_t n = static_cast<std::size_t>(u.rows());
    if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 frames");
    std::vector<std::size_t> nn(n);
    for (std::size_t i = 0; i < n; ++i) nn[i] = nearest_row(v, u.row(static_cast<Eigen::Index>(i)).transpose());
    long long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (nn[i] < nn[j]) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    return static_cast<double>(concordant - discordant) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

AlignmentReport evaluate_alignment(const Embeddings& u, const Embeddings& v) {
    AlignmentReport r;
    const NearestNeighborMaps maps = nn_align(u, v);
    const std::size_t n = static_cast<std::size_t>(u.rows());
    r.alignment_error = alignment_error(maps.forward, n);
    r.cycle_error = cycle_error(maps.cycle, n);
    r.kendall_tau = n >= 2 ? kendall_tau(u, v) : 0.0;
    r.nn_map_ab = maps.forward;
    r.nn_map_ba = nn_align(v, u).forward;
    return r;
}

double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson_r: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson_r: need at least 2 values");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw std::invalid_argument("pearson_r: degenerate map (zero variance)");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double fisher_mean_r(const std::vector<double>& rs) {
    if (rs.empty()) throw std::invalid_argument("fisher_mean_r: empty input");
    double z = 0.0;
    for (double r : rs) {
        if (!(std::abs(r) < 1.0)) throw std::invalid_argument("fisher_mean_r: |r| must be < 1, got " + std::to_string(r));
        z += std::atanh(r);
    }
    return std::tanh(z / static_cast<double>(rs.size()));
}

double procrustes_disparity(const Eigen::MatrixX3d& x, const Eigen::MatrixX3d& y) {
    if (x.rows() != y.rows()) throw std::invalid_argument("procrustes_disparity: point sets differ in length");
    if (x.rows() < 3) throw std::invalid_argument("procrustes_disparity: need at least 3 points");
    const Eigen::MatrixX3d a = normalised(x);
    const Eigen::MatrixX3d b = normalised(y);
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(a.transpose() * b);
    const double s = svd.singularValues().sum();
    return std::clamp(1.0 - s * s, 0.0, 1.0);
}

DisparityReport camera_eval(const std::vector<CameraExtrinsics>& est, const std::vector<CameraExtrinsics>& gt) {
    if (est.size() != gt.size()) {
        throw std::invalid_argument("camera_eval: " + std::to_string(est.size()) + " estimates for " +
                                    std::to_string(gt.size()) + " ground-truth cameras");
    }
    if (est.size() < 3) throw std::invalid_argument("camera_eval: need at least 3 cameras");
    const Eigen::Index n = static_cast<Eigen::Index>(est.size());
    Eigen::MatrixX3d pe(n, 3), pg(n, 3), oe(n, 3), og(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        pe.row(i) = est[i].center().transpose();
        pg.row(i) = gt[i].center().transpose();
        oe.row(i) = est[i].looking_at().normalized().transpose();
        og.row(i) = gt[i].looking_at().normalized().transpose();
    }
    return {procrustes_disparity(pe, pg), procrustes_disparity(oe, og)};
}

}  // namespace trl3d
