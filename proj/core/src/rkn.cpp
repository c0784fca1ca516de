#include "rknlab/rkn.hpp"

#include <cmath>

namespace rknlab {

namespace {

double softplus(double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); }
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

void name_branch(RknBranch& b, const std::string& prefix) {
  b.input.W.name = prefix + ".in.W";
  b.input.b.name = prefix + ".in.b";
  b.gru.Wz.name = prefix + ".gru.Wz";
  b.gru.Wr.name = prefix + ".gru.Wr";
  b.gru.Wh.name = prefix + ".gru.Wh";
  b.gru.Uz.name = prefix + ".gru.Uz";
  b.gru.Ur.name = prefix + ".gru.Ur";
  b.gru.Uh.name = prefix + ".gru.Uh";
  b.gru.bz.name = prefix + ".gru.bz";
  b.gru.br.name = prefix + ".gru.br";
  b.gru.bh.name = prefix + ".gru.bh";
  b.output.W.name = prefix + ".out.W";
  b.output.b.name = prefix + ".out.b";
}

void add_branch(ParamStore& store, RknBranch& b) {
  store.add(b.input.W);
  store.add(b.input.b);
  store.add(b.gru.Wz);
  store.add(b.gru.Wr);
  store.add(b.gru.Wh);
  store.add(b.gru.Uz);
  store.add(b.gru.Ur);
  store.add(b.gru.Uh);
  store.add(b.gru.bz);
  store.add(b.gru.br);
  store.add(b.gru.bh);
  store.add(b.output.W);
  store.add(b.output.b);
}

void init_branch(RknBranch& b, GaussianRng& rng) {
  init_dense(b.input, rng);
  init_gru(b.gru, rng);
  init_dense(b.output, rng);
  // Keep the initial heads near zero so the untrained filter starts close to
  // the open-loop path (K ~ 0) instead of amplifying the covariance
  // recursion with random gains.
  b.output.W.value *= 1e-3;
}

Vector vec_row_major(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[k++] = m(i, j);
  return v;
}

}  // namespace

RknModel RknModel::make(int m, int n, int hidden, uint64_t init_seed) {
  if (m < 1 || n < 1 || hidden < 1)
    throw std::invalid_argument("RknModel::make: dimensions must be positive");
  RknModel model;
  model.m = m;
  model.n = n;
  model.hidden = hidden;
  model.feat_dim = n + m + n * m + n;

  model.gain.input.resize(hidden, model.feat_dim);
  model.gain.input.act = Activation::relu;
  model.gain.gru.resize(hidden, hidden);
  model.gain.output.resize(m * n, hidden);

  model.chol.input.resize(hidden, model.feat_dim);
  model.chol.input.act = Activation::relu;
  model.chol.gru.resize(hidden, hidden);
  model.chol.output.resize(m * (m + 1) / 2, hidden);

  name_branch(model.gain, "gain");
  name_branch(model.chol, "chol");

  GaussianRng rng(init_seed);
  init_branch(model.gain, rng);
  init_branch(model.chol, rng);
  return model;
}

ParamStore collect_params(RknModel& model) {
  ParamStore store;
  add_branch(store, model.gain);
  add_branch(store, model.chol);
  return store;
}

RknHidden initial_hidden(const RknModel& model, const InitialLaw& initial,
                         const Matrix& H) {
  RknHidden h;
  h.h_gain = Vector::Zero(model.hidden);
  h.h_chol = Vector::Zero(model.hidden);
  h.prev_correction = Vector::Zero(model.m);
  h.prev_z = H * initial.mean;
  h.P_prev = initial.cov;
  return h;
}

Vector build_features(const Vector& y, const Vector& prev_correction,
                      const Matrix& H, const Vector& dz) {
  Vector u(y.size() + prev_correction.size() + H.size() + dz.size());
  u << y, prev_correction, vec_row_major(H), dz;
  return u.cwiseProduct(u);
}

Matrix chol_head_to_factor(const Vector& raw, int m) {
  if (raw.size() != m * (m + 1) / 2)
    throw std::invalid_argument("chol_head_to_factor: raw size mismatch");
  Matrix C = Matrix::Zero(m, m);
  Eigen::Index k = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j, ++k)
      C(i, j) = (i == j) ? softplus(raw[k]) + 1e-6 : raw[k];
  return C;
}

RknStepResult rkn_step(const RknModel& model, RknHidden& hidden,
                       const Vector& x_prev_corrected, const Vector& z,
                       const Matrix& F, const Matrix& H, RknStepCache* tape) {
  const int m = model.m;
  const int n = model.n;
  if (z.size() != n || x_prev_corrected.size() != m)
    throw std::invalid_argument("rkn_step: dimension mismatch");

  const Vector x_pred = F * x_prev_corrected;
  const Vector y = z - H * x_pred;
  const Vector dz = z - hidden.prev_z;
  Vector u(model.feat_dim);
  u << y, hidden.prev_correction, vec_row_major(H), dz;
  const Vector features = u.cwiseProduct(u);

  DenseCache gain_in_c, chol_in_c, gain_out_c, chol_out_c;
  GruCache gain_gru_c, chol_gru_c;

  const Vector a_gain = dense_forward(model.gain.input, features,
                                      tape ? &gain_in_c : nullptr);
  const Vector h_gain = gru_step(model.gain.gru, a_gain, hidden.h_gain,
                                 tape ? &gain_gru_c : nullptr);
  const Vector k_raw = dense_forward(model.gain.output, h_gain,
                                     tape ? &gain_out_c : nullptr);

  const Vector a_chol = dense_forward(model.chol.input, features,
                                      tape ? &chol_in_c : nullptr);
  const Vector h_chol = gru_step(model.chol.gru, a_chol, hidden.h_chol,
                                 tape ? &chol_gru_c : nullptr);
  const Vector raw = dense_forward(model.chol.output, h_chol,
                                   tape ? &chol_out_c : nullptr);

  Matrix K(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) K(i, j) = k_raw[i * n + j];
  const Matrix C = chol_head_to_factor(raw, m);

  const Vector corr = K * y;
  const Vector x_corr = x_pred + corr;
  const Matrix M = (Matrix::Identity(m, m) - K * H) * F;
  const Matrix A = M * hidden.P_prev * M.transpose();
  const Matrix B = C * C.transpose();
  const Matrix P = symmetrize(A + B);

  if (tape) {
    tape->x_prev = x_prev_corrected;
    tape->P_prev = hidden.P_prev;
    tape->x_pred = x_pred;
    tape->y = y;
    tape->dz = dz;
    tape->prev_corr = hidden.prev_correction;
    tape->u = u;
    tape->features = features;
    tape->gain_in = std::move(gain_in_c);
    tape->chol_in = std::move(chol_in_c);
    tape->gain_out = std::move(gain_out_c);
    tape->chol_out = std::move(chol_out_c);
    tape->gain_gru = std::move(gain_gru_c);
    tape->chol_gru = std::move(chol_gru_c);
    tape->raw_chol = raw;
    tape->K = K;
    tape->C = C;
    tape->P = P;
    tape->corr = corr;
  }

  hidden.h_gain = h_gain;
  hidden.h_chol = h_chol;
  hidden.prev_correction = corr;
  hidden.prev_z = z;
  hidden.P_prev = P;

  RknStepResult result;
  result.state = FilterState{x_corr, P, 0, Phase::corrected};
  result.K = K;
  result.C = C;
  return result;
}

FilterRun rkn_filter(const RknModel& model, const InitialLaw& initial,
                     const Matrix& z, const Matrix& F, const Matrix& H,
                     RknTape* tape, int64_t episode_id) {
  const int T = static_cast<int>(z.rows());
  const int m = model.m;
  const int n = model.n;
  if (z.cols() != n || initial.mean.size() != m)
    throw std::invalid_argument("rkn_filter: dimension mismatch");

  FilterRun run;
  run.estimator_id = "rkn";
  run.episode_id = episode_id;
  run.x_pred.resize(T, m);
  run.x_corr.resize(T, m);
  run.y.resize(T, n);
  run.P_corr.reserve(T);
  run.K.reserve(T);
  if (tape) tape->steps.resize(T);

  RknHidden hidden = initial_hidden(model, initial, H);
  Vector x = initial.mean;
  for (int t = 0; t < T; ++t) {
    try {
      const Vector x_pred = F * x;
      const Vector zt = z.row(t).transpose();
      RknStepResult step = rkn_step(model, hidden, x, zt, F, H,
                                    tape ? &tape->steps[t] : nullptr);
      x = step.state.x_hat;
      cholesky_or_throw(step.state.P, "rkn_filter: corrected P");
      run.x_pred.row(t) = x_pred.transpose();
      run.x_corr.row(t) = x.transpose();
      run.y.row(t) = (zt - H * x_pred).transpose();
      run.P_corr.push_back(step.state.P);
      run.K.push_back(step.K);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (step " + std::to_string(t) + ")");
    }
  }
  return run;
}

void rkn_backward(RknModel& model, const RknTape& tape, const RknSeqGrads& grads,
                  const Matrix& F, const Matrix& H) {
  const int T = static_cast<int>(tape.steps.size());
  const int m = model.m;
  const int n = model.n;
  if (static_cast<int>(grads.dx_corr.size()) != T ||
      static_cast<int>(grads.dP_corr.size()) != T)
    throw std::invalid_argument("rkn_backward: gradient/tape length mismatch");

  const Matrix HF = H * F;

  Vector carry_gx = Vector::Zero(m);
  Matrix carry_gP = Matrix::Zero(m, m);
  Vector carry_ghg = Vector::Zero(model.hidden);
  Vector carry_ghc = Vector::Zero(model.hidden);
  Vector carry_gcorr = Vector::Zero(m);

  for (int t = T - 1; t >= 0; --t) {
    const RknStepCache& c = tape.steps[t];

    const Vector gx = grads.dx_corr[t] + carry_gx;
    // The forward symmetrizes P, so project the upstream gradient too.
    const Matrix gP = symmetrize(grads.dP_corr[t] + carry_gP);

    const Vector gcorr = gx + carry_gcorr;
    Vector gx_pred = gx;

    // B = C C^T
    const Matrix gC_full = 2.0 * gP * c.C;  // gP symmetric: (gB + gB^T) C
    Vector graw(c.raw_chol.size());
    {
      Eigen::Index k = 0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j <= i; ++j, ++k)
          graw[k] = (i == j) ? gC_full(i, j) * sigmoid(c.raw_chol[k]) : gC_full(i, j);
    }

    // A = M P_prev M^T with M = (I - K H) F
    const Matrix M = (Matrix::Identity(m, m) - c.K * H) * F;
    carry_gP = M.transpose() * gP * M;
    const Matrix gM = 2.0 * gP * M * c.P_prev;  // (gA + gA^T) M P_prev
    Matrix gK = -gM * HF.transpose();

    // corr = K y
    gK.noalias() += gcorr * c.y.transpose();
    Vector gy = c.K.transpose() * gcorr;

    // Heads and branches.
    Vector gk_raw(m * n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gk_raw[i * n + j] = gK(i, j);

    const Vector dhg_out = dense_backward(model.gain.output, c.gain_out, gk_raw);
    const GruGrads gg = gru_backward(model.gain.gru, c.gain_gru, dhg_out + carry_ghg);
    const Vector dfeat_g = dense_backward(model.gain.input, c.gain_in, gg.dx);
    carry_ghg = gg.dh;

    const Vector dhc_out = dense_backward(model.chol.output, c.chol_out, graw);
    const GruGrads gc = gru_backward(model.chol.gru, c.chol_gru, dhc_out + carry_ghc);
    const Vector dfeat_c = dense_backward(model.chol.input, c.chol_in, gc.dx);
    carry_ghc = gc.dh;

    // features = u .* u
    const Vector du = 2.0 * c.u.cwiseProduct(dfeat_g + dfeat_c);
    gy += du.head(n);
    carry_gcorr = du.segment(n, m);  // flows into corr_{t-1}

    // y = z - H x_pred; x_pred = F x_prev
    gx_pred.noalias() -= H.transpose() * gy;
    carry_gx = F.transpose() * gx_pred;
  }
}

}  // namespace rknlab
