#include "fisherlens/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fisherlens {

namespace {

void check_covariance(const Matrix& cov) {
  require(cov.rows() == cov.cols(), ErrorKind::DimensionMismatch,
          "noise covariance must be square");
  require(cov.size() > 0, ErrorKind::DimensionMismatch,
          "noise covariance is empty");
  const double scale = cov.cwiseAbs().maxCoeff();
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * scale, ErrorKind::NotSymmetric,
          "noise covariance is not symmetric (max |C - C^T| = " +
              std::to_string(asym) + ")");
}

Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& cov) {
  check_covariance(cov);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  require(eig.info() == Eigen::Success, ErrorKind::NotPositiveDefinite,
          "eigendecomposition of the noise covariance failed");
  const Vector& ev = eig.eigenvalues();  // ascending
  const double largest = ev(ev.size() - 1);
  const double pd_tol = kPositiveDefiniteRelTol * std::max(largest, 0.0);
  if (!(ev(0) > pd_tol) || !(largest > 0.0)) {
    throw Error(ErrorKind::NotPositiveDefinite,
                "noise covariance is not positive definite (smallest "
                "eigenvalue " +
                    std::to_string(ev(0)) + ")");
  }
  return eig;
}

}  // namespace

std::string_view to_string(ComponentRole role) noexcept {
  switch (role) {
    case ComponentRole::Object: return "object";
    case ComponentRole::Lse: return "lse";
    case ComponentRole::Trial: return "trial";
    case ComponentRole::Filtered: return "filtered";
  }
  return "unknown";
}

GeneralLinearModel::GeneralLinearModel(Matrix psf, Vector noise_mean,
                                       Matrix noise_cov)
    : psf_(std::move(psf)), mean_(std::move(noise_mean)),
      cov_(std::move(noise_cov)) {
  require(psf_.rows() > 0 && psf_.cols() > 0, ErrorKind::DimensionMismatch,
          "PSF matrix is empty");
  require(psf_.rows() >= psf_.cols(), ErrorKind::DimensionMismatch,
          "PSF matrix must have m >= n (got " + std::to_string(psf_.rows()) +
              "x" + std::to_string(psf_.cols()) + ")");
  require_same_size(mean_.size(), psf_.rows(), "noise mean");
  require_same_size(cov_.rows(), psf_.rows(), "noise covariance");
  checked_eigen(cov_);
}

GeneralLinearModel GeneralLinearModel::white(Matrix psf, double mean,
                                             double sigma) {
  require(sigma > 0.0, ErrorKind::NotPositiveDefinite,
          "white-noise sigma must be positive");
  const Eigen::Index m = psf.rows();
  return GeneralLinearModel(std::move(psf), Vector::Constant(m, mean),
                            Matrix::Identity(m, m) * (sigma * sigma));
}

Matrix matrix_inverse_sqrt(const Matrix& cov) {
  const auto eig = checked_eigen(cov);
  const Vector inv_root = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  Matrix s = eig.eigenvectors() * inv_root.asDiagonal() *
             eig.eigenvectors().transpose();
  // Symmetrize to remove rounding asymmetry.
  return 0.5 * (s + s.transpose());
}

Matrix matrix_sqrt(const Matrix& cov) {
  const auto eig = checked_eigen(cov);
  Matrix s = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() *
             eig.eigenvectors().transpose();
  return 0.5 * (s + s.transpose());
}

Vector StandardModel::whiten_image(const Vector& image,
                                   const Vector& noise_mean) const {
  require_same_size(image.size(), whitener_.rows(), "image");
  require_same_size(noise_mean.size(), whitener_.rows(), "noise mean");
  return whitener_ * (image - noise_mean);
}

StandardModel whiten_psf(const GeneralLinearModel& model) {
  Matrix s = matrix_inverse_sqrt(model.noise_cov());
  Matrix a = s * model.psf_matrix();
  return StandardModel(std::move(a), std::move(s));
}

WhitenedProblem whiten(const GeneralLinearModel& model, const Vector& image) {
  require_same_size(image.size(), model.rows(), "image");
  StandardModel std_model = whiten_psf(model);
  Vector z = std_model.whiten_image(image, model.noise_mean());
  return {std::move(std_model), std::move(z)};
}

Vector SpectralBasis::refine(const Vector& whitened_image) const {
  require_same_size(whitened_image.size(), f_->u.rows(), "whitened image");
  return f_->u.transpose() * whitened_image;
}

SpectralBasis decompose_basis(const StandardModel& std_model,
                              double rank_rel_tol) {
  const Matrix& a = std_model.whitened_psf();
  require(rank_rel_tol >= 0.0 && rank_rel_tol < 1.0,
          ErrorKind::InvalidArgument, "rank_rel_tol must lie in [0, 1)");
  require(a.size() > 0 && a.cwiseAbs().maxCoeff() > 0.0, ErrorKind::ZeroMatrix,
          "whitened PSF is the zero matrix");

  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  auto f = std::make_shared<SpectralBasis::Factors>();
  // JacobiSVD returns singular values sorted in decreasing order.
  f->u = svd.matrixU();
  f->delta = svd.singularValues();
  f->v = svd.matrixV();
  f->lambda = f->delta.cwiseAbs2();
  f->rank_rel_tol = rank_rel_tol;
  const double cutoff = rank_rel_tol * f->delta(0);
  Eigen::Index r = 0;
  while (r < f->delta.size() && f->delta(r) > 0.0 && f->delta(r) >= cutoff) {
    ++r;
  }
  f->rank = r;
  return SpectralBasis(std::move(f));
}

SpectralModel::SpectralModel(SpectralBasis basis, const Vector& whitened_image)
    : basis_(std::move(basis)), phi_(basis_.refine(whitened_image)) {
  const Eigen::Index r = basis_.effective_rank();
  truncated_energy_ = phi_.tail(phi_.size() - r).squaredNorm();
}

SpectralModel decompose(const StandardModel& std_model,
                        const Vector& whitened_image, double rank_rel_tol) {
  require_same_size(whitened_image.size(), std_model.rows(), "whitened image");
  return SpectralModel(decompose_basis(std_model, rank_rel_tol),
                       whitened_image);
}

Vector synthesize(const SpectralBasis& basis, const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), basis.size(), "principal components");
  return basis.eigen_basis() * p.coeffs;
}

PrincipalComponents analyze(const SpectralBasis& basis, const Vector& x,
                            ComponentRole role) {
  require_same_size(x.size(), basis.size(), "object vector");
  return {basis.eigen_basis().transpose() * x, role};
}

std::string_view error_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::NotSymmetric: return "not-symmetric";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
    case ErrorKind::ZeroMatrix: return "zero-matrix";
    case ErrorKind::InvalidDof: return "invalid-dof";
    case ErrorKind::DomainError: return "domain-error";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InfeasibleConstraint: return "infeasible-constraint";
    case ErrorKind::MaxItersExceeded: return "max-iters-exceeded";
    case ErrorKind::NoRoot: return "no-root";
    case ErrorKind::DegenerateTarget: return "degenerate-target";
    case ErrorKind::NotConverged: return "not-converged";
    case ErrorKind::InvalidRadius: return "invalid-radius";
    case ErrorKind::InvalidSigma: return "invalid-sigma";
    case ErrorKind::Parse: return "parse-error";
  }
  return "unknown";
}

}  // namespace fisherlens
