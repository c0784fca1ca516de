#include "rknlab/kalman.hpp"

#include <charconv>
#include <cmath>

namespace rknlab {

FilterState kf_predict(const FilterState& state, const Matrix& F, const Matrix& Q) {
  if (state.phase != Phase::corrected)
    throw std::invalid_argument("kf_predict: expects a corrected state");
  if (F.cols() != state.x_hat.size() || Q.rows() != F.rows())
    throw std::invalid_argument("kf_predict: dimension mismatch");
  FilterState out;
  out.x_hat = F * state.x_hat;
  out.P = symmetrize(F * state.P * F.transpose() + Q);
  out.t = state.t + 1;
  out.phase = Phase::predicted;
  return out;
}

Innovation kf_innovate(const FilterState& state, const Vector& z, const Matrix& H,
                       const Matrix& R) {
  if (state.phase != Phase::predicted)
    throw std::invalid_argument("kf_innovate: expects a predicted state");
  if (H.cols() != state.x_hat.size() || z.size() != H.rows())
    throw std::invalid_argument("kf_innovate: dimension mismatch");
  Innovation inn;
  inn.y = z - H * state.x_hat;
  inn.S = symmetrize(H * state.P * H.transpose() + R);
  cholesky_or_throw(inn.S, "kf_innovate: S");
  return inn;
}

Matrix kalman_gain(const Matrix& P_pred, const Matrix& H, const Matrix& S) {
  const auto llt = cholesky_or_throw(S, "kalman_gain: S");
  // K = P H^T S^{-1}  <=>  S K^T = H P^T
  return llt.solve(H * P_pred.transpose()).transpose();
}

FilterState kf_update(const FilterState& state, const Matrix& K, const Vector& y,
                      const Matrix& H) {
  if (state.phase != Phase::predicted)
    throw std::invalid_argument("kf_update: expects a predicted state");
  if (K.rows() != state.x_hat.size() || K.cols() != y.size() ||
      H.rows() != y.size() || H.cols() != state.x_hat.size())
    throw std::invalid_argument("kf_update: dimension mismatch");
  FilterState out;
  out.x_hat = state.x_hat + K * y;
  const Matrix I = Matrix::Identity(state.x_hat.size(), state.x_hat.size());
  out.P = symmetrize((I - K * H) * state.P);
  out.t = state.t;
  out.phase = Phase::corrected;
  return out;
}

Matrix joseph_update(const Matrix& P_pred, const Matrix& K, const Matrix& H,
                     const Matrix& R) {
  const Matrix I = Matrix::Identity(P_pred.rows(), P_pred.cols());
  const Matrix IKH = I - K * H;
  return symmetrize(IKH * P_pred * IKH.transpose() + K * R * K.transpose());
}

std::pair<Matrix, Matrix> covariance_split(const Matrix& P_prev_corrected,
                                           const Matrix& K, const Matrix& F,
                                           const Matrix& H, const Matrix& Q,
                                           const Matrix& R) {
  const Matrix I = Matrix::Identity(F.rows(), F.cols());
  const Matrix IKH = I - K * H;
  Matrix A = IKH * F * P_prev_corrected * F.transpose() * IKH.transpose();
  Matrix B = IKH * Q * IKH.transpose() + K * R * K.transpose();
  return {symmetrize(A), symmetrize(B)};
}

FilterRun run_kf(const StateSpaceModel& model, const MeasurementNoiseModel& noise,
                 const InitialLaw& initial, const Episode& episode) {
  model.validate();
  const int T = episode.length();
  const int m = model.state_dim();
  const int n = model.meas_dim();
  if (episode.x.cols() != m || episode.z.cols() != n)
    throw std::invalid_argument("run_kf: episode incompatible with model dims");

  FilterRun run;
  if (noise.mode == MeasurementNoiseModel::Mode::oracle) {
    run.estimator_id = "kf:oracle";
  } else {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), noise.fixed_value);
    run.estimator_id = "kf:fixed=" + std::string(buf, ptr);
  }
  run.episode_id = episode.episode_id;
  run.x_pred.resize(T, m);
  run.x_corr.resize(T, m);
  run.y.resize(T, n);
  run.P_pred.reserve(T);
  run.P_corr.reserve(T);
  run.K.reserve(T);
  run.S.reserve(T);

  FilterState state{initial.mean, initial.cov, 0, Phase::corrected};
  for (int t = 0; t < T; ++t) {
    try {
      const FilterState pred = kf_predict(state, model.F, model.Q);
      Matrix R(n, n);
      if (noise.mode == MeasurementNoiseModel::Mode::oracle) {
        const double s = episode.schedule.sigma.at(t);
        R = (s * s) * Matrix::Identity(n, n);
      } else {
        R = noise.fixed_value * Matrix::Identity(n, n);
      }
      const Innovation inn = kf_innovate(pred, episode.z.row(t).transpose(), model.H, R);
      const Matrix K = kalman_gain(pred.P, model.H, inn.S);
      state = kf_update(pred, K, inn.y, model.H);
      cholesky_or_throw(state.P, "run_kf: corrected P");

      run.x_pred.row(t) = pred.x_hat.transpose();
      run.x_corr.row(t) = state.x_hat.transpose();
      run.y.row(t) = inn.y.transpose();
      run.P_pred.push_back(pred.P);
      run.P_corr.push_back(state.P);
      run.K.push_back(K);
      run.S.push_back(inn.S);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (step " + std::to_string(t) + ")");
    }
  }
  return run;
}

Matrix steady_state_gain(const Matrix& F, const Matrix& H, const Matrix& Q,
                         const Matrix& R) {
  const int m = static_cast<int>(F.rows());
  Matrix P = Matrix::Identity(m, m);
  Matrix K;
  // The cap must cover the Q = 0 boundary, where the recursion contracts
  // only harmonically (P_k ~ 1/k) and needs ~1e6 steps to settle.
  constexpr int kMaxIter = 2000000;
  for (int it = 0; it < kMaxIter; ++it) {
    const Matrix P_pred = symmetrize(F * P * F.transpose() + Q);
    const Matrix S = symmetrize(H * P_pred * H.transpose() + R);
    K = kalman_gain(P_pred, H, S);
    const Matrix P_next = joseph_update(P_pred, K, H, R);
    if ((P_next - P).cwiseAbs().maxCoeff() < 1e-12) return K;
    P = P_next;
  }
  throw NumericalError("steady_state_gain: Riccati iteration did not converge");
}

}  // namespace rknlab
