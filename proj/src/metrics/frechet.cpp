#include "spectragen/metrics/frechet.hpp"

#include <cmath>
#include <string>

#include "spectragen/numerics/error.hpp"

namespace spectragen::metrics {

namespace {

constexpr double kClamp = 1e-10;

Eigen::MatrixXd covariance(const FeatureSet& f, const Eigen::RowVectorXd& mean) {
    const Eigen::MatrixXd centered = f.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(f.rows() - 1);
}

// Eigenvalues of a symmetric PSD matrix, small negative round-off clamped to zero.
Eigen::VectorXd psd_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& solver, const char* what) {
    if (solver.info() != Eigen::Success) throw NumericalError(std::string(what) + ": eigendecomposition failed");
    Eigen::VectorXd ev = solver.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (!std::isfinite(ev[i])) throw NumericalError(std::string(what) + ": non-finite eigenvalue");
        if (ev[i] < -kClamp * scale) throw NumericalError(std::string(what) + ": covariance is not positive semidefinite");
        if (ev[i] < kClamp) ev[i] = 0.0;
    }
    return ev;
}

}  // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.cols() != b.cols()) throw DataError("feature sets differ in dimension");
    const auto d = a.cols();
    if (d == 0) throw DataError("feature sets need at least one dimension");
    if (a.rows() <= d || b.rows() <= d) {
        throw DataError("covariance needs more rows than dimensions (" + std::to_string(d) + ")");
    }
    if (!a.allFinite() || !b.allFinite()) throw NumericalError("feature sets contain non-finite values");
    const Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
    const Eigen::MatrixXd sa = covariance(a, mu_a), sb = covariance(b, mu_b);

    // tr (Sa Sb)^(1/2) = tr (Sa^(1/2) Sb Sa^(1/2))^(1/2), both symmetric.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
    const Eigen::VectorXd la = psd_eigenvalues(ea, "frechet_distance");
    const Eigen::MatrixXd root_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
    Eigen::MatrixXd m = root_a * sb * root_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
    const double trace_root = psd_eigenvalues(em, "frechet_distance").cwiseSqrt().sum();

    const double dist = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_root;
    return std::max(0.0, dist);
}

}  // namespace spectragen::metrics
