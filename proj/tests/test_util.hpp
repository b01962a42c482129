#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "fisherlens/model_core.hpp"

namespace testutil {

using fisherlens::Matrix;
using fisherlens::Vector;

inline Vector normal_vector(std::mt19937_64& rng, Eigen::Index n,
                            double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) g.col(j) = normal_vector(rng, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, n);
}

// H = Q1 diag(delta) Q2^T with delta log-uniform in [lo, hi].
inline Matrix random_psf(std::mt19937_64& rng, Eigen::Index n, double lo = 1e-2,
                         double hi = 10.0) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = std::exp(u(rng));
  return random_orthogonal(rng, n) * d.asDiagonal() *
         random_orthogonal(rng, n).transpose();
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  Matrix b(n, n);
  for (Eigen::Index j = 0; j < n; ++j) b.col(j) = normal_vector(rng, n);
  return b * b.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

// Unit-noise spectral model with Delta = diag(delta) and refined image phi.
inline fisherlens::SpectralModel diag_model(const Vector& delta,
                                            const Vector& phi) {
  using namespace fisherlens;
  const Eigen::Index n = delta.size();
  const auto model = GeneralLinearModel::white(delta.asDiagonal().toDenseMatrix(),
                                               0.0, 1.0);
  const WhitenedProblem wp = whiten(model, phi);
  SpectralModel spec = decompose(wp.model, wp.whitened_image);
  (void)n;
  return spec;
}

// Random well-posed problem y = H x0 + xi with unit white noise.
inline fisherlens::SpectralModel random_model(std::mt19937_64& rng,
                                              Eigen::Index n,
                                              double signal = 10.0) {
  using namespace fisherlens;
  const Matrix h = random_psf(rng, n, 0.1, 10.0);
  const Vector x0 = normal_vector(rng, n, signal);
  const auto model = GeneralLinearModel::white(h, 0.0, 1.0);
  const WhitenedProblem wp = whiten(model, h * x0 + normal_vector(rng, n));
  return decompose(wp.model, wp.whitened_image);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace testutil
