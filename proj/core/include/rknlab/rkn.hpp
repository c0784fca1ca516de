// Recursive KalmanNet: two GRU branches wrapped in dense layers produce the
// gain and the Cholesky factor of the noise contribution; the corrected
// covariance follows the recursion P_t = A_t + C_t C_t^T with
// A_t = (I - K H) F P_{t-1} F^T (I - K H)^T. The filter never reads the
// noise statistics (sigma_t, Q, R) of the data it processes.
#pragma once

#include <cstdint>
#include <optional>

#include "rknlab/kalman.hpp"
#include "rknlab/nn.hpp"

namespace rknlab {

struct RknBranch {
  DenseLayer input;  // feat_dim -> hidden, relu
  GruCell gru;       // hidden -> hidden
  DenseLayer output; // hidden -> head_dim, identity
};

struct RknModel {
  RknBranch gain;  // head m*n
  RknBranch chol;  // head m(m+1)/2
  int feat_dim = 0;
  int m = 0;
  int n = 0;
  int hidden = 32;

  // Architecture for an m-state / n-measurement linear system; feat_dim is
  // n + m + n*m + n (innovation, previous correction, vec(H), measurement
  // difference).
  static RknModel make(int m, int n, int hidden, uint64_t init_seed);
};

// Deterministic parameter ordering shared by serialization and training.
ParamStore collect_params(RknModel& model);

struct RknHidden {
  Vector h_gain;
  Vector h_chol;
  Vector prev_correction;  // K y from the previous step, zero at start
  Vector prev_z;           // previous measurement; H x0 at start
  Matrix P_prev;           // previous corrected covariance
};

RknHidden initial_hidden(const RknModel& model, const InitialLaw& initial,
                         const Matrix& H);

// [y; prev_correction; vec(H); z_t - z_{t-1}] squared elementwise.
Vector build_features(const Vector& y, const Vector& prev_correction,
                      const Matrix& H, const Vector& dz);

// Lower triangle filled row-major from raw; diagonal through
// softplus(u) + 1e-6 so C C^T is always SPD.
Matrix chol_head_to_factor(const Vector& raw, int m);

// Forward intermediates of one step, sufficient for exact reverse-mode.
struct RknStepCache {
  Vector x_prev;      // corrected state entering the step
  Matrix P_prev;
  Vector x_pred, y, dz, prev_corr, u, features;
  DenseCache gain_in, chol_in, gain_out, chol_out;
  GruCache gain_gru, chol_gru;
  Vector raw_chol;
  Matrix K, C, P;     // P is the corrected covariance leaving the step
  Vector corr;        // K y
};

struct RknStepResult {
  FilterState state;  // corrected
  Matrix K;
  Matrix C;
};

RknStepResult rkn_step(const RknModel& model, RknHidden& hidden,
                       const Vector& x_prev_corrected, const Vector& z,
                       const Matrix& F, const Matrix& H, RknStepCache* tape);

struct RknTape {
  std::vector<RknStepCache> steps;
};

// Runs the full recursion over the measurements z (T x n). Only F and H are
// visible to the filter; noise statistics are not part of the interface.
FilterRun rkn_filter(const RknModel& model, const InitialLaw& initial,
                     const Matrix& z, const Matrix& F, const Matrix& H,
                     RknTape* tape = nullptr, int64_t episode_id = 0);

// Per-step upstream gradients of a scalar loss: d/dx_corr and d/dP_corr.
struct RknSeqGrads {
  std::vector<Vector> dx_corr;
  std::vector<Matrix> dP_corr;
};

// Full backprop through time, including the recursion through P_prev and
// the previous-correction feature path. Accumulates into parameter grads.
void rkn_backward(RknModel& model, const RknTape& tape, const RknSeqGrads& grads,
                  const Matrix& F, const Matrix& H);

}  // namespace rknlab
