// Gaussian NLL objective, Adam training loop with validation-based early
// stopping, and JSON checkpoints.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rknlab/rkn.hpp"

namespace rknlab {

// 0.5 * (ln det P + e^T P^{-1} e + m ln 2pi), via Cholesky of P.
double gaussian_nll(const Vector& e, const Matrix& P);

struct NllGrads {
  Vector de;
  Matrix dP;
};
NllGrads gaussian_nll_backward(const Vector& e, const Matrix& P);

// Mean-over-time NLL of the corrected estimates of one episode plus
// l2_lambda * ||params||^2. With with_grad, exact gradients (including the
// l2 term) are accumulated into the model's parameter grads.
double sequence_loss(RknModel& model, const InitialLaw& initial,
                     const Episode& episode, const Matrix& F, const Matrix& H,
                     double l2_lambda, bool with_grad);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 20;      // epochs without validation improvement
  double l2_lambda = 1e-4;
  uint64_t seed = 0;      // shuffling
  int threads = 0;        // 0: use worker_count()

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, includes l2 term
  std::vector<double> val_loss;    // per epoch, mean NLL only
  int best_epoch = -1;
  int stopped_epoch = -1;
  bool clipping_engaged = false;
};

std::pair<RknModel, TrainHistory> train_rkn(const TrainConfig& config,
                                            uint64_t model_init_seed,
                                            const Dataset& train_set,
                                            const Dataset& val_set);

struct CheckpointMeta {
  uint64_t init_seed = 0;
  std::string note;
};

void save_checkpoint(RknModel& model, const std::string& path,
                     const CheckpointMeta& meta = {});
RknModel load_checkpoint(const std::string& path);

// FNV-1a hash of the checkpoint file bytes; used as the estimator tag
// "rkn:<hash>" in filter runs and reports.
std::string file_hash_hex(const std::string& path);

}  // namespace rknlab
