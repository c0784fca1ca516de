#include <doctest.h>

#include <cmath>

#include "rknlab/rkn.hpp"
#include "rknlab/train.hpp"

using namespace rknlab;

namespace {

const double kSoftplus0 = std::log(2.0) + 1e-6;

RknModel zeroed_model(int m, int n, int hidden) {
  RknModel model = RknModel::make(m, n, hidden, 1);
  ParamStore params = collect_params(model);
  params.set_flat_values(Vector::Zero(params.flat_size()));
  return model;
}

Episode short_episode(int T, uint64_t seed, Scenario sc = Scenario::S1) {
  const StateSpaceModel model = make_cv_model(1.0, 0.01);
  return simulate_episode(model, make_schedule(sc, T), default_cv_initial(), T,
                          seed);
}

}  // namespace

TEST_CASE("build_features") {
  SUBCASE("elementwise squaring example") {
    const Vector f = build_features(Vector{{2.0}}, Vector{{1.0, -3.0}},
                                    Matrix{{1.0, 0.0}}, Vector{{0.5}});
    REQUIRE(f.size() == 6);
    CHECK(f == Vector{{4.0, 1.0, 9.0, 1.0, 0.0, 0.25}});
  }
  SUBCASE("zero inputs give zero features") {
    const Vector f = build_features(Vector::Zero(1), Vector::Zero(2),
                                    Matrix::Zero(1, 2), Vector::Zero(1));
    CHECK(f.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("features are even in every input") {
    const Vector y{{0.7}}, pc{{-0.2, 1.1}}, dz{{-3.0}};
    const Matrix H{{1.0, 0.0}};
    CHECK(build_features(y, pc, H, dz) == build_features(-y, -pc, H, -dz));
  }
}

TEST_CASE("chol_head_to_factor") {
  SUBCASE("zero raw maps diagonal to softplus(0) + floor") {
    const Matrix C = chol_head_to_factor(Vector::Zero(3), 2);
    CHECK(C(0, 0) == doctest::Approx(kSoftplus0).epsilon(1e-12));
    CHECK(C(1, 1) == doctest::Approx(kSoftplus0).epsilon(1e-12));
    CHECK(C(1, 0) == 0.0);
    CHECK(C(0, 1) == 0.0);
  }
  SUBCASE("very negative diagonal hits the 1e-6 floor") {
    const Matrix C = chol_head_to_factor(Vector{{-30.0, 0.0, -30.0}}, 2);
    CHECK(C(0, 0) == doctest::Approx(1e-6).epsilon(1e-3));
    CHECK(C(1, 1) == doctest::Approx(1e-6).epsilon(1e-3));
  }
  SUBCASE("any raw yields lower-triangular C with SPD C C^T") {
    GaussianRng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const int m = 1 + static_cast<int>(rng.raw() % 4);
      const Matrix C = chol_head_to_factor(
          5.0 * rng.normal_vector(m * (m + 1) / 2), m);
      for (int i = 0; i < m; ++i) {
        CHECK(C(i, i) > 0.0);
        for (int j = i + 1; j < m; ++j) CHECK(C(i, j) == 0.0);
      }
      const Eigen::SelfAdjointEigenSolver<Matrix> es(C * C.transpose());
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }
  SUBCASE("raw size mismatch rejected") {
    CHECK_THROWS_AS(chol_head_to_factor(Vector::Zero(4), 2),
                    std::invalid_argument);
  }
}

TEST_CASE("rkn_step") {
  const StateSpaceModel sys = make_cv_model(1.0, 0.01);
  const InitialLaw init = default_cv_initial();

  SUBCASE("all-zero parameters take the zero-gain path") {
    const RknModel model = zeroed_model(2, 1, 8);
    RknHidden hidden = initial_hidden(model, init, sys.H);
    const Vector x_prev = init.mean;
    const RknStepResult step =
        rkn_step(model, hidden, x_prev, Vector{{0.4}}, sys.F, sys.H, nullptr);
    CHECK(step.K.cwiseAbs().maxCoeff() == 0.0);
    CHECK((step.state.x_hat - sys.F * x_prev).cwiseAbs().maxCoeff() == 0.0);
    const Matrix expected = sys.F * init.cov * sys.F.transpose() +
                            kSoftplus0 * kSoftplus0 * Matrix::Identity(2, 2);
    CHECK((step.state.P - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("A-term matches the covariance_split oracle") {
    const RknModel model = RknModel::make(2, 1, 16, 5);
    RknHidden hidden = initial_hidden(model, init, sys.H);
    Vector x = init.mean;
    const Episode ep = short_episode(10, 44);
    for (int t = 0; t < 10; ++t) {
      RknStepCache cache;
      const RknStepResult step = rkn_step(model, hidden, x, ep.z.row(t).transpose(),
                                          sys.F, sys.H, &cache);
      const Matrix A_learned = step.state.P - step.C * step.C.transpose();
      const Matrix A_oracle = covariance_split(cache.P_prev, step.K, sys.F, sys.H,
                                               sys.Q, Matrix{{1.0}}).first;
      CHECK((symmetrize(A_learned) - A_oracle).cwiseAbs().maxCoeff() < 1e-12);
      x = step.state.x_hat;
    }
  }
}

TEST_CASE("rkn_filter") {
  const StateSpaceModel sys = make_cv_model(1.0, 0.01);
  const InitialLaw init = default_cv_initial();

  SUBCASE("deterministic given model and episode") {
    const RknModel model = RknModel::make(2, 1, 32, 12);
    const Episode ep = short_episode(150, 7);
    const FilterRun a = rkn_filter(model, init, ep.z, sys.F, sys.H);
    const FilterRun b = rkn_filter(model, init, ep.z, sys.F, sys.H);
    CHECK(a.x_corr == b.x_corr);
    for (int t = 0; t < 150; ++t) CHECK(a.P_corr[t] == b.P_corr[t]);
  }
  SUBCASE("untrained model stays finite and SPD over 150 steps") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      const RknModel model = RknModel::make(2, 1, 32, seed);
      const Episode ep = short_episode(150, 100 + seed);
      const FilterRun run = rkn_filter(model, init, ep.z, sys.F, sys.H);
      CHECK(run.x_corr.allFinite());
      for (const Matrix& P : run.P_corr)
        CHECK_NOTHROW(cholesky_or_throw(P, "P"));
    }
  }
  SUBCASE("dimension mismatch rejected") {
    const RknModel model = RknModel::make(2, 1, 8, 1);
    CHECK_THROWS_AS(rkn_filter(model, init, Matrix::Zero(5, 2), sys.F, sys.H),
                    std::invalid_argument);
  }
}

namespace {

// Move the parameters away from the deliberately small head initialization;
// near-zero gradients would otherwise drown in finite-difference noise.
void perturb_params(RknModel& model, uint64_t seed, double scale) {
  ParamStore params = collect_params(model);
  GaussianRng rng(seed);
  Vector v = params.flat_values();
  v += scale * rng.normal_vector(v.size());
  params.set_flat_values(v);
}

}  // namespace

TEST_CASE("rkn backward matches finite differences") {
  const StateSpaceModel sys = make_cv_model(1.0, 0.01);
  const InitialLaw init = default_cv_initial();

  SUBCASE("single-step loss at tol 1e-4") {
    RknModel model = RknModel::make(2, 1, 8, 9);
    perturb_params(model, 17, 0.1);
    ParamStore params = collect_params(model);
    const Episode ep = short_episode(1, 3);
    auto eval = [&](bool with_grad) {
      return sequence_loss(model, init, ep, sys.F, sys.H, 0.0, with_grad);
    };
    const auto report = grad_check(eval, params, 64, 1e-6, 1e-4, 11);
    INFO("max rel err ", report.max_rel_err, " at coord ", report.worst_coord);
    CHECK(report.pass);
  }
  SUBCASE("length-20 sequence loss with l2 at tol 1e-3") {
    RknModel model = RknModel::make(2, 1, 16, 10);
    perturb_params(model, 19, 0.05);
    ParamStore params = collect_params(model);
    const Episode ep = short_episode(20, 8);
    auto eval = [&](bool with_grad) {
      return sequence_loss(model, init, ep, sys.F, sys.H, 1e-4, with_grad);
    };
    const auto report = grad_check(eval, params, 64, 1e-6, 1e-3, 13);
    INFO("max rel err ", report.max_rel_err, " at coord ", report.worst_coord);
    CHECK(report.pass);
  }
}
