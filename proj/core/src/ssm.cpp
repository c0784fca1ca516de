#include "rknlab/ssm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace rknlab {

Matrix psd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Vector d = es.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] < -1e-12 * scale) throw NumericalError("psd_sqrt: matrix is not PSD");
    d[i] = std::sqrt(std::max(d[i], 0.0));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::LLT<Matrix> cholesky_or_throw(const Matrix& a, const std::string& what) {
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) throw NumericalError(what + ": matrix is not SPD");
  return llt;
}

int worker_count() {
  if (const char* env = std::getenv("RKN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

void parallel_for_indexed(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void parallel_for_workers(int count, int threads,
                          const std::function<void(int worker, int i)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += threads) fn(w, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void StateSpaceModel::validate() const {
  const int m = state_dim();
  const int n = meas_dim();
  if (F.rows() != m || F.cols() != m) throw std::invalid_argument("F must be m x m");
  if (H.cols() != m || H.rows() != n) throw std::invalid_argument("H must be n x m");
  if (Q.rows() != m || Q.cols() != m) throw std::invalid_argument("Q must be m x m");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(Q));
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("Q must be symmetric positive semi-definite");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2a: return "S2a";
    case Scenario::S2b: return "S2b";
    case Scenario::S3a: return "S3a";
    case Scenario::S3b: return "S3b";
    case Scenario::Custom: return "custom";
  }
  return "custom";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "S1" || s == "s1") return Scenario::S1;
  if (s == "S2a" || s == "s2a") return Scenario::S2a;
  if (s == "S2b" || s == "s2b") return Scenario::S2b;
  if (s == "S3a" || s == "s3a") return Scenario::S3a;
  if (s == "S3b" || s == "s3b") return Scenario::S3b;
  if (s == "custom") return Scenario::Custom;
  throw std::invalid_argument("unknown scenario id '" + s +
                              "' (valid: S1, S2a, S2b, S3a, S3b, custom)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

StateSpaceModel make_cv_model(double dt, double sigma_v) {
  if (!(dt > 0)) throw std::invalid_argument("make_cv_model: dt must be positive");
  if (!(sigma_v > 0)) throw std::invalid_argument("make_cv_model: sigma_v must be positive");
  StateSpaceModel model;
  model.F = Matrix{{1.0, dt}, {0.0, 1.0}};
  model.H = Matrix{{1.0, 0.0}};
  model.Q = Matrix{{0.0, 0.0}, {0.0, sigma_v * sigma_v}};
  return model;
}

InitialLaw default_cv_initial() {
  InitialLaw initial;
  initial.mean = Vector{{0.0, 1.0}};
  initial.cov = Matrix{{1.0, 0.0}, {0.0, 0.01}};
  return initial;
}

NoiseSchedule make_schedule(Scenario scenario, int T) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  NoiseSchedule schedule;
  schedule.scenario = scenario;
  schedule.sigma.resize(T);
  switch (scenario) {
    case Scenario::S1:
      for (int t = 0; t < T; ++t) schedule.sigma[t] = t < 75 ? 0.35 : 1.75;
      break;
    case Scenario::S2a:
      std::fill(schedule.sigma.begin(), schedule.sigma.end(), 1.5);
      break;
    case Scenario::S2b:
      std::fill(schedule.sigma.begin(), schedule.sigma.end(), 0.6);
      break;
    case Scenario::S3a:
      std::fill(schedule.sigma.begin(), schedule.sigma.end(), 1.907);
      break;
    case Scenario::S3b:
      std::fill(schedule.sigma.begin(), schedule.sigma.end(), 0.1907);
      break;
    case Scenario::Custom:
      throw std::invalid_argument("make_schedule: 'custom' has no predefined sigma");
  }
  return schedule;
}

uint64_t episode_seed(uint64_t master_seed, Split split, int64_t k) {
  uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a64(to_string(split)));
  h = splitmix64(h ^ static_cast<uint64_t>(k));
  return h;
}

Episode simulate_episode(const StateSpaceModel& model, const NoiseSchedule& schedule,
                         const InitialLaw& initial, int T, uint64_t seed) {
  model.validate();
  if (schedule.length() != T)
    throw std::invalid_argument("simulate_episode: schedule length != T");
  const int m = model.state_dim();
  const int n = model.meas_dim();
  if (initial.mean.size() != m || initial.cov.rows() != m || initial.cov.cols() != m)
    throw std::invalid_argument("simulate_episode: initial law dimension mismatch");

  const Matrix sqrt_q = psd_sqrt(model.Q);
  const Matrix sqrt_p0 = psd_sqrt(initial.cov);

  GaussianRng rng(seed);
  Episode ep;
  ep.x.resize(T, m);
  ep.z.resize(T, n);
  ep.schedule = schedule;
  ep.seed = seed;

  Vector x = initial.mean + sqrt_p0 * rng.normal_vector(m);
  for (int t = 0; t < T; ++t) {
    x = model.F * x + sqrt_q * rng.normal_vector(m);
    ep.x.row(t) = x.transpose();
    const Vector w = schedule.sigma[t] * rng.normal_vector(n);
    ep.z.row(t) = (model.H * x + w).transpose();
  }
  return ep;
}

Dataset generate_dataset(const StateSpaceModel& model, const ScenarioMix& mix,
                         const InitialLaw& initial, int T, uint64_t master_seed,
                         Split split) {
  int total = 0;
  for (const auto& [scenario, count] : mix) {
    if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
    total += count;
  }
  if (total == 0) throw std::invalid_argument("generate_dataset: empty scenario mix");

  // Round-robin interleave: one episode from each mix entry that still has
  // budget, repeated until all counts are exhausted.
  std::vector<Scenario> order;
  order.reserve(total);
  std::vector<int> remaining;
  for (const auto& [scenario, count] : mix) remaining.push_back(count);
  while (static_cast<int>(order.size()) < total) {
    for (size_t i = 0; i < mix.size(); ++i) {
      if (remaining[i] > 0) {
        order.push_back(mix[i].first);
        --remaining[i];
      }
    }
  }

  Dataset ds;
  ds.model = model;
  ds.initial = initial;
  ds.master_seed = master_seed;
  ds.split = split;
  ds.mix = mix;
  ds.episodes.reserve(total);
  for (int k = 0; k < total; ++k) {
    const NoiseSchedule schedule = make_schedule(order[k], T);
    Episode ep = simulate_episode(model, schedule, initial, T,
                                  episode_seed(master_seed, split, k));
    ep.episode_id = k;
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

}  // namespace rknlab
