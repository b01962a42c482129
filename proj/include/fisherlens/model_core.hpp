#pragma once

// Data-formation models and their deterministic reductions:
//   general model   y0 = H x0 + xi,   xi ~ (a, C)
//   standard model  z0 = A x0 + eta,  eta ~ (0, I)       (whitening)
//   spectral model  phi = U^T z0 = Delta p0 + zeta       (SVD of A)
//
// Everything here is immutable after construction.

#include <memory>
#include <string_view>

#include <Eigen/Dense>

#include "fisherlens/errors.hpp"

namespace fisherlens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kDefaultRankRelTol = 1e-12;

/// Rejects noise covariances whose smallest eigenvalue is below this fraction
/// of the largest one.
inline constexpr double kPositiveDefiniteRelTol = 1e-12;

class GeneralLinearModel {
 public:
  /// Validates m >= n, sizes, symmetry and positive definiteness of the
  /// covariance.
  GeneralLinearModel(Matrix psf, Vector noise_mean, Matrix noise_cov);

  /// White-noise shorthand: C = sigma^2 I, a = mean * 1.
  static GeneralLinearModel white(Matrix psf, double mean, double sigma);

  const Matrix& psf_matrix() const noexcept { return psf_; }
  const Vector& noise_mean() const noexcept { return mean_; }
  const Matrix& noise_cov() const noexcept { return cov_; }
  Eigen::Index rows() const noexcept { return psf_.rows(); }
  Eigen::Index cols() const noexcept { return psf_.cols(); }

 private:
  Matrix psf_;
  Vector mean_;
  Matrix cov_;
};

class StandardModel {
 public:
  const Matrix& whitened_psf() const noexcept { return a_; }
  /// C^{-1/2} of the originating general model; maps y0 - a to z0.
  const Matrix& whitener() const noexcept { return whitener_; }
  Eigen::Index rows() const noexcept { return a_.rows(); }
  Eigen::Index cols() const noexcept { return a_.cols(); }

  /// z0 = C^{-1/2} (y0 - a) for a further image of the same model.
  Vector whiten_image(const Vector& image, const Vector& noise_mean) const;

 private:
  friend StandardModel whiten_psf(const GeneralLinearModel&);
  StandardModel(Matrix a, Matrix whitener)
      : a_(std::move(a)), whitener_(std::move(whitener)) {}

  Matrix a_;
  Matrix whitener_;
};

/// SVD factors of a whitened PSF, shared between every image restored with
/// the same model.
class SpectralBasis {
 public:
  const Matrix& left_factor() const noexcept { return f_->u; }
  const Vector& singular_values() const noexcept { return f_->delta; }
  const Matrix& eigen_basis() const noexcept { return f_->v; }
  /// Fisher eigenvalues lambda_k = delta_k^2 for all n components.
  const Vector& fisher_eigenvalues() const noexcept { return f_->lambda; }
  /// Number of leading components with delta_k >= rank_rel_tol * delta_1.
  Eigen::Index effective_rank() const noexcept { return f_->rank; }
  double rank_rel_tol() const noexcept { return f_->rank_rel_tol; }
  Eigen::Index rows() const noexcept { return f_->u.rows(); }
  Eigen::Index size() const noexcept { return f_->v.cols(); }

  /// phi = U^T z0.
  Vector refine(const Vector& whitened_image) const;

 private:
  struct Factors {
    Matrix u;
    Vector delta;
    Matrix v;
    Vector lambda;
    Eigen::Index rank = 0;
    double rank_rel_tol = kDefaultRankRelTol;
  };
  friend SpectralBasis decompose_basis(const StandardModel&, double);
  explicit SpectralBasis(std::shared_ptr<const Factors> f) : f_(std::move(f)) {}

  std::shared_ptr<const Factors> f_;
};

/// The n-dimensional form of the problem: phi = Delta p0 + zeta.
///
/// phi keeps all n entries. Components past effective_rank() are treated as
/// unrecoverable: their LSE coefficient and every filter weight is zero, but
/// they still contribute phi_k^2 to the misfit so that the misfit of the true
/// object stays chi-square with n degrees of freedom.
class SpectralModel {
 public:
  SpectralModel(SpectralBasis basis, const Vector& whitened_image);

  const SpectralBasis& basis() const noexcept { return basis_; }
  const Matrix& left_factor() const noexcept { return basis_.left_factor(); }
  const Vector& singular_values() const noexcept {
    return basis_.singular_values();
  }
  const Matrix& eigen_basis() const noexcept { return basis_.eigen_basis(); }
  const Vector& fisher_eigenvalues() const noexcept {
    return basis_.fisher_eigenvalues();
  }
  Eigen::Index effective_rank() const noexcept {
    return basis_.effective_rank();
  }
  Eigen::Index size() const noexcept { return basis_.size(); }
  const Vector& refined_image() const noexcept { return phi_; }

  /// sum_{k >= r} phi_k^2: the part of the misfit no estimate can remove.
  double truncated_energy() const noexcept { return truncated_energy_; }

 private:
  SpectralBasis basis_;
  Vector phi_;
  double truncated_energy_ = 0.0;
};

enum class ComponentRole { Object, Lse, Trial, Filtered };

std::string_view to_string(ComponentRole role) noexcept;

struct PrincipalComponents {
  Vector coeffs;
  ComponentRole role = ComponentRole::Trial;
};

/// Symmetric S with S C S = I, via symmetric eigendecomposition.
Matrix matrix_inverse_sqrt(const Matrix& cov);

/// Symmetric square root C^{1/2}; used to check whitening consistency.
Matrix matrix_sqrt(const Matrix& cov);

StandardModel whiten_psf(const GeneralLinearModel& model);

struct WhitenedProblem {
  StandardModel model;
  Vector whitened_image;
};

/// z0 = C^{-1/2}(y0 - a), A = C^{-1/2} H.
WhitenedProblem whiten(const GeneralLinearModel& model, const Vector& image);

SpectralBasis decompose_basis(const StandardModel& std_model,
                              double rank_rel_tol = kDefaultRankRelTol);

SpectralModel decompose(const StandardModel& std_model,
                        const Vector& whitened_image,
                        double rank_rel_tol = kDefaultRankRelTol);

/// x = V p.
Vector synthesize(const SpectralBasis& basis, const PrincipalComponents& p);
inline Vector synthesize(const SpectralModel& spec,
                         const PrincipalComponents& p) {
  return synthesize(spec.basis(), p);
}

/// p = V^T x.
PrincipalComponents analyze(const SpectralBasis& basis, const Vector& x,
                            ComponentRole role = ComponentRole::Object);
inline PrincipalComponents analyze(const SpectralModel& spec, const Vector& x,
                                   ComponentRole role = ComponentRole::Object) {
  return analyze(spec.basis(), x, role);
}

}  // namespace fisherlens
