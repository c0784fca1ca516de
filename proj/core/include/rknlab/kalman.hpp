// Classical Kalman filter: predict / innovate / gain / update, Joseph-form
// and split-covariance reference formulas, o-KF / so-KF runs, and a
// steady-state gain oracle via Riccati fixed-point iteration.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rknlab/ssm.hpp"

namespace rknlab {

enum class Phase { predicted, corrected };

struct FilterState {
  Vector x_hat;
  Matrix P;
  int t = 0;
  Phase phase = Phase::corrected;
};

struct Innovation {
  Vector y;
  Matrix S;
};

struct MeasurementNoiseModel {
  enum class Mode { oracle, fixed };
  Mode mode = Mode::oracle;
  double fixed_value = 1.0;  // R when mode == fixed (so-KF convention: 1)

  static MeasurementNoiseModel oracle() { return {Mode::oracle, 0.0}; }
  static MeasurementNoiseModel fixed(double r) {
    if (!(r > 0)) throw std::invalid_argument("fixed R must be positive");
    return {Mode::fixed, r};
  }
};

// Per-step record of one filter pass over one episode.
struct FilterRun {
  std::string estimator_id;
  int64_t episode_id = 0;
  Matrix x_pred;               // T x m
  Matrix x_corr;               // T x m
  std::vector<Matrix> P_pred;  // optional (empty for learned filters)
  std::vector<Matrix> P_corr;
  std::vector<Matrix> K;       // m x n
  Matrix y;                    // T x n innovations
  std::vector<Matrix> S;       // optional

  int length() const { return static_cast<int>(x_corr.rows()); }
};

FilterState kf_predict(const FilterState& state, const Matrix& F, const Matrix& Q);
Innovation kf_innovate(const FilterState& state, const Vector& z, const Matrix& H,
                       const Matrix& R);
// K = P_pred H^T S^{-1}, solved via Cholesky of S.
Matrix kalman_gain(const Matrix& P_pred, const Matrix& H, const Matrix& S);
FilterState kf_update(const FilterState& state, const Matrix& K, const Vector& y,
                      const Matrix& H);

// Gain-agnostic covariance update (I-KH) P (I-KH)^T + K R K^T.
Matrix joseph_update(const Matrix& P_pred, const Matrix& K, const Matrix& H,
                     const Matrix& R);

// Corrected covariance written as propagated term A plus noise term B,
// A + B == joseph_update(F P F^T + Q, K, H, R).
std::pair<Matrix, Matrix> covariance_split(const Matrix& P_prev_corrected,
                                           const Matrix& K, const Matrix& F,
                                           const Matrix& H, const Matrix& Q,
                                           const Matrix& R);

FilterRun run_kf(const StateSpaceModel& model, const MeasurementNoiseModel& noise,
                 const InitialLaw& initial, const Episode& episode);

// Fixed point of the discrete Riccati recursion, iterated until the
// corrected covariance moves by < 1e-12. The iteration cap is generous
// because Q = 0 boundary cases contract only harmonically.
Matrix steady_state_gain(const Matrix& F, const Matrix& H, const Matrix& Q,
                         const Matrix& R);

}  // namespace rknlab
