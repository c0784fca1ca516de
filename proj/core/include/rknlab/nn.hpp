// Minimal neural-network kernel: dense layers, GRU cells, parameter
// bookkeeping, hand-derived backward passes and finite-difference checking.
// The architectures are fixed, so each op records its own forward
// intermediates (a typed tape) and replays them exactly in backward().
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rknlab/common.hpp"

namespace rknlab {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
};

// Ordered, non-owning view over a model's parameters. The order is the
// deterministic flat layout used for serialization, optimizer state and
// finite-difference probing (row-major within each parameter).
class ParamStore {
 public:
  void add(Param& p) { params_.push_back(&p); }

  size_t count() const { return params_.size(); }
  Param& at(size_t i) { return *params_[i]; }
  const Param& at(size_t i) const { return *params_[i]; }

  Eigen::Index flat_size() const;
  void zero_grads();
  double squared_norm() const;

  Vector flat_values() const;
  Vector flat_grads() const;
  void set_flat_values(const Vector& v);

  double get_coord(Eigen::Index i) const;
  void set_coord(Eigen::Index i, double v);
  double grad_coord(Eigen::Index i) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param*> params_;
};

enum class Activation { identity, relu, tanh };

struct DenseLayer {
  Param W;  // out x in
  Param b;  // out x 1
  Activation act = Activation::identity;

  void resize(int out, int in) {
    W.resize(out, in);
    b.resize(out, 1);
  }
  int in_dim() const { return static_cast<int>(W.value.cols()); }
  int out_dim() const { return static_cast<int>(W.value.rows()); }
};

struct DenseCache {
  Vector x;    // input
  Vector pre;  // W x + b
};

Vector dense_forward(const DenseLayer& layer, const Vector& x, DenseCache* tape);
// Accumulates parameter grads, returns dL/dx.
Vector dense_backward(DenseLayer& layer, const DenseCache& tape, const Vector& dout);

struct GruCell {
  Param Wz, Wr, Wh;  // h x d input weights
  Param Uz, Ur, Uh;  // h x h recurrent weights
  Param bz, br, bh;  // h x 1

  void resize(int hidden, int input) {
    Wz.resize(hidden, input);
    Wr.resize(hidden, input);
    Wh.resize(hidden, input);
    Uz.resize(hidden, hidden);
    Ur.resize(hidden, hidden);
    Uh.resize(hidden, hidden);
    bz.resize(hidden, 1);
    br.resize(hidden, 1);
    bh.resize(hidden, 1);
  }
  int input_dim() const { return static_cast<int>(Wz.value.cols()); }
  int hidden_dim() const { return static_cast<int>(Wz.value.rows()); }
};

struct GruCache {
  Vector x, h;        // inputs
  Vector z, r, hcand; // gate activations
  Vector rh;          // r .* h
};

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// hcand = tanh(Wh x + Uh (r.*h) + bh); h' = (1-z).*h + z.*hcand
Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h, GruCache* tape);

struct GruGrads {
  Vector dx;
  Vector dh;
};
GruGrads gru_backward(GruCell& cell, const GruCache& tape, const Vector& dh_next);

// Glorot-uniform for input/dense weights, orthogonal recurrent weights,
// zero biases. Deterministic given the rng stream.
void init_dense(DenseLayer& layer, GaussianRng& rng);
void init_gru(GruCell& cell, GaussianRng& rng);
Matrix glorot_uniform(int rows, int cols, GaussianRng& rng);
Matrix orthogonal(int n, GaussianRng& rng);

struct GradCheckReport {
  double max_rel_err = 0.0;
  Eigen::Index worst_coord = -1;
  int n_checked = 0;
  bool pass = false;
};

// Compares analytic gradients against central finite differences on
// n_probes random flat coordinates. eval(true) must return the loss with
// gradients freshly accumulated in the store; eval(false) the loss only.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval,
                           ParamStore& params, int n_probes, double step,
                           double tol, uint64_t seed);

}  // namespace rknlab
