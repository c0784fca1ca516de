#include "rknlab/nn.hpp"

#include <cmath>
#include <random>

namespace rknlab {

Eigen::Index ParamStore::flat_size() const {
  Eigen::Index total = 0;
  for (const Param* p : params_) total += p->value.size();
  return total;
}

void ParamStore::zero_grads() {
  for (Param* p : params_) p->grad.setZero();
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const Param* p : params_) s += p->value.squaredNorm();
  return s;
}

namespace {

// Row-major coordinate access into one matrix.
double& coord_ref(Matrix& m, Eigen::Index i) {
  return m(i / m.cols(), i % m.cols());
}

}  // namespace

Vector ParamStore::flat_values() const {
  Vector v(flat_size());
  Eigen::Index k = 0;
  for (const Param* p : params_)
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) v[k++] = p->value(i, j);
  return v;
}

Vector ParamStore::flat_grads() const {
  Vector v(flat_size());
  Eigen::Index k = 0;
  for (const Param* p : params_)
    for (Eigen::Index i = 0; i < p->grad.rows(); ++i)
      for (Eigen::Index j = 0; j < p->grad.cols(); ++j) v[k++] = p->grad(i, j);
  return v;
}

void ParamStore::set_flat_values(const Vector& v) {
  if (v.size() != flat_size())
    throw std::invalid_argument("set_flat_values: size mismatch");
  Eigen::Index k = 0;
  for (Param* p : params_)
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) p->value(i, j) = v[k++];
}

double ParamStore::get_coord(Eigen::Index i) const {
  for (const Param* p : params_) {
    if (i < p->value.size()) return const_cast<Matrix&>(p->value).coeff(i / p->value.cols(), i % p->value.cols());
    i -= p->value.size();
  }
  throw std::out_of_range("ParamStore::get_coord");
}

void ParamStore::set_coord(Eigen::Index i, double v) {
  for (Param* p : params_) {
    if (i < p->value.size()) {
      coord_ref(p->value, i) = v;
      return;
    }
    i -= p->value.size();
  }
  throw std::out_of_range("ParamStore::set_coord");
}

double ParamStore::grad_coord(Eigen::Index i) const {
  for (const Param* p : params_) {
    if (i < p->grad.size()) return const_cast<Matrix&>(p->grad).coeff(i / p->grad.cols(), i % p->grad.cols());
    i -= p->grad.size();
  }
  throw std::out_of_range("ParamStore::grad_coord");
}

namespace {

Vector apply_activation(Activation act, const Vector& pre) {
  switch (act) {
    case Activation::identity: return pre;
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::tanh: return pre.array().tanh().matrix();
  }
  return pre;
}

Vector activation_grad(Activation act, const Vector& pre, const Vector& dout) {
  switch (act) {
    case Activation::identity:
      return dout;
    case Activation::relu:
      return (pre.array() > 0.0).select(dout.array(), 0.0).matrix();
    case Activation::tanh: {
      const Eigen::ArrayXd th = pre.array().tanh();
      return (dout.array() * (1.0 - th * th)).matrix();
    }
  }
  return dout;
}

inline Eigen::ArrayXd sigmoid(const Vector& v) {
  return 1.0 / (1.0 + (-v.array()).exp());
}

}  // namespace

Vector dense_forward(const DenseLayer& layer, const Vector& x, DenseCache* tape) {
  if (x.size() != layer.in_dim())
    throw std::invalid_argument("dense_forward: input dimension mismatch");
  Vector pre = layer.W.value * x + layer.b.value.col(0);
  if (tape) {
    tape->x = x;
    tape->pre = pre;
  }
  return apply_activation(layer.act, pre);
}

Vector dense_backward(DenseLayer& layer, const DenseCache& tape, const Vector& dout) {
  const Vector dpre = activation_grad(layer.act, tape.pre, dout);
  layer.W.grad.noalias() += dpre * tape.x.transpose();
  layer.b.grad.col(0) += dpre;
  return layer.W.value.transpose() * dpre;
}

Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h, GruCache* tape) {
  if (x.size() != cell.input_dim() || h.size() != cell.hidden_dim())
    throw std::invalid_argument("gru_step: dimension mismatch");
  const Vector z = sigmoid(cell.Wz.value * x + cell.Uz.value * h + cell.bz.value.col(0)).matrix();
  const Vector r = sigmoid(cell.Wr.value * x + cell.Ur.value * h + cell.br.value.col(0)).matrix();
  const Vector rh = r.cwiseProduct(h);
  const Vector hcand =
      (cell.Wh.value * x + cell.Uh.value * rh + cell.bh.value.col(0)).array().tanh().matrix();
  Vector hn = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(hcand);
  if (tape) {
    tape->x = x;
    tape->h = h;
    tape->z = z;
    tape->r = r;
    tape->rh = rh;
    tape->hcand = hcand;
  }
  return hn;
}

GruGrads gru_backward(GruCell& cell, const GruCache& tape, const Vector& dh_next) {
  const Vector& z = tape.z;
  const Vector& r = tape.r;
  const Vector& h = tape.h;
  const Vector& hc = tape.hcand;

  Vector dh = dh_next.cwiseProduct((1.0 - z.array()).matrix());
  const Vector dz = dh_next.cwiseProduct(hc - h);
  const Vector dhc = dh_next.cwiseProduct(z);

  const Vector dah = dhc.cwiseProduct((1.0 - hc.array().square()).matrix());
  cell.Wh.grad.noalias() += dah * tape.x.transpose();
  cell.Uh.grad.noalias() += dah * tape.rh.transpose();
  cell.bh.grad.col(0) += dah;
  Vector dx = cell.Wh.value.transpose() * dah;
  const Vector drh = cell.Uh.value.transpose() * dah;
  const Vector dr = drh.cwiseProduct(h);
  dh += drh.cwiseProduct(r);

  const Vector daz = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
  cell.Wz.grad.noalias() += daz * tape.x.transpose();
  cell.Uz.grad.noalias() += daz * h.transpose();
  cell.bz.grad.col(0) += daz;
  dx += cell.Wz.value.transpose() * daz;
  dh += cell.Uz.value.transpose() * daz;

  const Vector dar = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
  cell.Wr.grad.noalias() += dar * tape.x.transpose();
  cell.Ur.grad.noalias() += dar * h.transpose();
  cell.br.grad.col(0) += dar;
  dx += cell.Wr.value.transpose() * dar;
  dh += cell.Ur.value.transpose() * dar;

  return {dx, dh};
}

Matrix glorot_uniform(int rows, int cols, GaussianRng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = limit * (2.0 * rng.uniform01() - 1.0);
  return m;
}

Matrix orthogonal(int n, GaussianRng& rng) {
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix column signs so the factorization (hence the init) is unique.
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

void init_dense(DenseLayer& layer, GaussianRng& rng) {
  layer.W.value = glorot_uniform(layer.out_dim(), layer.in_dim(), rng);
  layer.b.value.setZero();
}

void init_gru(GruCell& cell, GaussianRng& rng) {
  const int h = cell.hidden_dim();
  const int d = cell.input_dim();
  cell.Wz.value = glorot_uniform(h, d, rng);
  cell.Wr.value = glorot_uniform(h, d, rng);
  cell.Wh.value = glorot_uniform(h, d, rng);
  cell.Uz.value = orthogonal(h, rng);
  cell.Ur.value = orthogonal(h, rng);
  cell.Uh.value = orthogonal(h, rng);
  cell.bz.value.setZero();
  cell.br.value.setZero();
  cell.bh.value.setZero();
}

GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval,
                           ParamStore& params, int n_probes, double step,
                           double tol, uint64_t seed) {
  params.zero_grads();
  eval(true);
  const Vector analytic = params.flat_grads();

  std::mt19937_64 eng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, params.flat_size() - 1);

  GradCheckReport report;
  for (int p = 0; p < n_probes; ++p) {
    const Eigen::Index i = pick(eng);
    const double saved = params.get_coord(i);
    params.set_coord(i, saved + step);
    const double lp = eval(false);
    params.set_coord(i, saved - step);
    const double lm = eval(false);
    params.set_coord(i, saved);
    const double fd = (lp - lm) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    const double rel = std::abs(a - fd) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coord = i;
    }
    ++report.n_checked;
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace rknlab
