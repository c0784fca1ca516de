#include "rknlab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace rknlab {

using nlohmann::json;

double gaussian_nll(const Vector& e, const Matrix& P) {
  const auto llt = cholesky_or_throw(P, "gaussian_nll: P");
  const Matrix L = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  const double maha = e.dot(llt.solve(e));
  return 0.5 * (logdet + maha + e.size() * std::log(2.0 * M_PI));
}

NllGrads gaussian_nll_backward(const Vector& e, const Matrix& P) {
  const auto llt = cholesky_or_throw(P, "gaussian_nll_backward: P");
  const Vector pe = llt.solve(e);
  const Matrix pinv = llt.solve(Matrix::Identity(P.rows(), P.cols()));
  NllGrads g;
  g.de = pe;
  g.dP = 0.5 * (pinv - pe * pe.transpose());
  return g;
}

double sequence_loss(RknModel& model, const InitialLaw& initial,
                     const Episode& episode, const Matrix& F, const Matrix& H,
                     double l2_lambda, bool with_grad) {
  const int T = episode.length();
  RknTape tape;
  const FilterRun run = rkn_filter(model, initial, episode.z, F, H,
                                   with_grad ? &tape : nullptr);

  double nll_sum = 0.0;
  RknSeqGrads grads;
  if (with_grad) {
    grads.dx_corr.resize(T);
    grads.dP_corr.resize(T);
  }
  for (int t = 0; t < T; ++t) {
    const Vector e = episode.x.row(t).transpose() - run.x_corr.row(t).transpose();
    const Matrix& P = run.P_corr[t];
    nll_sum += gaussian_nll(e, P);
    if (with_grad) {
      const NllGrads g = gaussian_nll_backward(e, P);
      grads.dx_corr[t] = -g.de / T;  // d e / d x_corr = -I
      grads.dP_corr[t] = g.dP / T;
    }
  }

  ParamStore params = collect_params(model);
  if (with_grad) {
    rkn_backward(model, tape, grads, F, H);
    if (l2_lambda != 0.0)
      for (Param* p : params) p->grad += 2.0 * l2_lambda * p->value;
  }
  return nll_sum / T + l2_lambda * params.squared_norm();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  if (patience < 1 || patience > std::max(max_epochs, 1))
    throw std::invalid_argument("patience must be in [1, max_epochs]");
  if (l2_lambda < 0) throw std::invalid_argument("l2_lambda must be >= 0");
}

namespace {

double mean_val_nll(const RknModel& model, const Dataset& ds, int threads) {
  const int n = static_cast<int>(ds.episodes.size());
  std::vector<double> losses(n);
  parallel_for_indexed(n, threads, [&](int i) {
    const Episode& ep = ds.episodes[i];
    const FilterRun run =
        rkn_filter(model, ds.initial, ep.z, ds.model.F, ds.model.H);
    double s = 0.0;
    for (int t = 0; t < ep.length(); ++t)
      s += gaussian_nll(ep.x.row(t).transpose() - run.x_corr.row(t).transpose(),
                        run.P_corr[t]);
    losses[i] = s / ep.length();
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / n;
}

}  // namespace

std::pair<RknModel, TrainHistory> train_rkn(const TrainConfig& config,
                                            uint64_t model_init_seed,
                                            const Dataset& train_set,
                                            const Dataset& val_set) {
  config.validate();
  if (train_set.episodes.empty() || val_set.episodes.empty())
    throw std::invalid_argument("train_rkn: empty dataset");
  const StateSpaceModel& ssm = train_set.model;
  const int m = ssm.state_dim();
  const int n = ssm.meas_dim();
  const int threads = config.threads > 0 ? config.threads : worker_count();

  RknModel model = RknModel::make(m, n, 32, model_init_seed);
  ParamStore params = collect_params(model);
  const Eigen::Index dim = params.flat_size();

  TrainHistory history;
  if (config.max_epochs == 0) return {std::move(model), history};

  // Per-worker model clones; parameter values are refreshed each batch, and
  // per-episode flat gradients are reduced in episode order.
  std::vector<RknModel> worker_models(threads, model);

  Vector adam_m = Vector::Zero(dim);
  Vector adam_v = Vector::Zero(dim);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long adam_t = 0;

  Vector best_params = params.flat_values();
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  bool clipping = false;

  std::vector<int> order(train_set.episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_eng(splitmix64(config.seed ^ 0x5eedc0ffeeull));

  const int n_train = static_cast<int>(order.size());
  std::vector<Vector> episode_grads(config.batch_size);
  std::vector<double> episode_losses(config.batch_size);
  std::vector<std::vector<int>> worker_slot(threads);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);

    double epoch_loss = 0.0;
    int n_batches = 0;
    bool diverged = false;

    for (int start = 0; start < n_train && !diverged; start += config.batch_size) {
      const int bsz = std::min(config.batch_size, n_train - start);
      const Vector current = params.flat_values();
      parallel_for_workers(bsz, threads, [&](int worker, int i) {
        RknModel& wm = worker_models[worker];
        ParamStore wp = collect_params(wm);
        wp.set_flat_values(current);
        wp.zero_grads();
        const Episode& ep = train_set.episodes[order[start + i]];
        episode_losses[i] = sequence_loss(wm, train_set.initial, ep, ssm.F,
                                          ssm.H, 0.0, true);
        episode_grads[i] = wp.flat_grads();
      });

      double batch_loss = 0.0;
      Vector grad = Vector::Zero(dim);
      for (int i = 0; i < bsz; ++i) {
        batch_loss += episode_losses[i] / bsz;
        grad += episode_grads[i] / bsz;
      }
      grad += 2.0 * config.l2_lambda * current;
      batch_loss += config.l2_lambda * current.squaredNorm();

      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        diverged = true;
        break;
      }
      if (clipping) {
        const double norm = grad.norm();
        if (norm > 10.0) grad *= 10.0 / norm;
      }

      ++adam_t;
      adam_m = kBeta1 * adam_m + (1.0 - kBeta1) * grad;
      adam_v = kBeta2 * adam_v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(kBeta1, adam_t);
      const double c2 = 1.0 - std::pow(kBeta2, adam_t);
      Vector update = current;
      for (Eigen::Index j = 0; j < dim; ++j)
        update[j] -= config.learning_rate * (adam_m[j] / c1) /
                     (std::sqrt(adam_v[j] / c2) + kEps);
      params.set_flat_values(update);

      epoch_loss += batch_loss;
      ++n_batches;
    }

    double val = diverged ? std::numeric_limits<double>::quiet_NaN()
                          : mean_val_nll(model, val_set, threads);

    if (diverged || !std::isfinite(val)) {
      if (clipping)
        throw NumericalError("train_rkn: diverged (non-finite loss) despite clipping");
      // Safety valve: restore the best parameters and retry with clipping.
      clipping = true;
      history.clipping_engaged = true;
      params.set_flat_values(best_params);
      adam_m.setZero();
      adam_v.setZero();
      adam_t = 0;
      continue;
    }

    history.train_loss.push_back(epoch_loss / std::max(n_batches, 1));
    history.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params = params.flat_values();
      history.best_epoch = static_cast<int>(history.val_loss.size()) - 1;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      history.stopped_epoch = static_cast<int>(history.val_loss.size()) - 1;
      break;
    }
  }

  params.set_flat_values(best_params);
  return {std::move(model), history};
}

void save_checkpoint(RknModel& model, const std::string& path,
                     const CheckpointMeta& meta) {
  json j;
  j["format"] = "rkn-checkpoint-v1";
  j["arch"] = {{"m", model.m}, {"n", model.n}, {"hidden", model.hidden},
               {"feat_dim", model.feat_dim}};
  j["init_seed"] = meta.init_seed;
  j["note"] = meta.note;
  json params = json::array();
  for (const Param* p : collect_params(model)) {
    json entry;
    entry["name"] = p->name;
    entry["rows"] = p->value.rows();
    entry["cols"] = p->value.cols();
    json data = json::array();
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) data.push_back(p->value(i, c));
    entry["data"] = std::move(data);
    params.push_back(std::move(entry));
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  out << j.dump() << '\n';
}

RknModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("load_checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "rkn-checkpoint-v1")
    throw ParseError("load_checkpoint: unknown format");
  const auto& arch = j.at("arch");
  RknModel model = RknModel::make(arch.at("m").get<int>(), arch.at("n").get<int>(),
                                  arch.at("hidden").get<int>(), 0);
  if (arch.at("feat_dim").get<int>() != model.feat_dim)
    throw ParseError("load_checkpoint: feat_dim mismatch");

  ParamStore store = collect_params(model);
  const auto& params = j.at("params");
  if (params.size() != store.count())
    throw ParseError("load_checkpoint: parameter count mismatch");
  for (size_t k = 0; k < store.count(); ++k) {
    Param& p = store.at(k);
    const auto& entry = params[k];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("rows").get<Eigen::Index>() != p.value.rows() ||
        entry.at("cols").get<Eigen::Index>() != p.value.cols())
      throw ParseError("load_checkpoint: schema mismatch at parameter '" + p.name + "'");
    const auto& data = entry.at("data");
    if (static_cast<Eigen::Index>(data.size()) != p.value.size())
      throw ParseError("load_checkpoint: data size mismatch at '" + p.name + "'");
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        p.value(i, c) = data[idx++].get<double>();
  }
  return model;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash_hex: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const uint64_t h = fnv1a64(buf.str());
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

}  // namespace rknlab
