// Linear-Gaussian state-space models and the constant-velocity dataset
// generator with switching measurement-noise regimes.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rknlab/common.hpp"

namespace rknlab {

struct StateSpaceModel {
  Matrix F;  // m x m propagation
  Matrix H;  // n x m measurement
  Matrix Q;  // m x m propagation-noise covariance (PSD)

  int state_dim() const { return static_cast<int>(F.rows()); }
  int meas_dim() const { return static_cast<int>(H.rows()); }

  // Checks dimension consistency and that Q is symmetric PSD.
  void validate() const;
};

enum class Scenario { S1, S2a, S2b, S3a, S3b, Custom };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct NoiseSchedule {
  std::vector<double> sigma;  // per-step measurement-noise std, all > 0
  Scenario scenario = Scenario::Custom;

  int length() const { return static_cast<int>(sigma.size()); }
};

struct InitialLaw {
  Vector mean;  // x_hat_{0|0}
  Matrix cov;   // P_{0|0}, SPD
};

struct Episode {
  Matrix x;  // T x m true states (t = 1..T)
  Matrix z;  // T x n measurements
  NoiseSchedule schedule;
  uint64_t seed = 0;
  int64_t episode_id = 0;

  int length() const { return static_cast<int>(x.rows()); }
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

using ScenarioMix = std::vector<std::pair<Scenario, int>>;

struct Dataset {
  std::vector<Episode> episodes;
  StateSpaceModel model;
  InitialLaw initial;
  uint64_t master_seed = 0;
  Split split = Split::train;
  ScenarioMix mix;

  int length() const { return episodes.empty() ? 0 : episodes.front().length(); }
};

// Constant-velocity model: F = [[1, dt], [0, 1]], H = [1, 0],
// Q = diag(0, sigma_v^2). Velocity follows a random walk.
StateSpaceModel make_cv_model(double dt, double sigma_v);

// The default initial law of the experiments: mean (0, 1), cov diag(1, 0.01).
InitialLaw default_cv_initial();

// Scenario schedules: S1 switches 0.35 -> 1.75 at step 75; the others are
// constant (S2a 1.5, S2b 0.6, S3a 1.907, S3b 0.1907).
NoiseSchedule make_schedule(Scenario scenario, int T);

// Per-episode seed, independent of generation order.
uint64_t episode_seed(uint64_t master_seed, Split split, int64_t k);

Episode simulate_episode(const StateSpaceModel& model, const NoiseSchedule& schedule,
                         const InitialLaw& initial, int T, uint64_t seed);

// Generates `mix` episodes interleaved round-robin across scenarios, each
// with a seed derived from (master_seed, split, index).
Dataset generate_dataset(const StateSpaceModel& model, const ScenarioMix& mix,
                         const InitialLaw& initial, int T, uint64_t master_seed,
                         Split split);

}  // namespace rknlab
