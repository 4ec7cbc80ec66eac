#include "unlearn/pinn.hpp"

#include "unlearn/diff.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/traffic.hpp"

#include <doctest.h>

#include <cmath>

using namespace unlearn;
using namespace unlearn::pinn;

namespace {

MlpModel small_model(std::uint64_t seed, std::vector<int> sizes = {2, 8, 1}) {
  MlpModel m(std::move(sizes), 30.0, 0.0, 100.0, 0.0, 20.0);
  m.init_random(seed);
  return m;
}

/// Constant-speed model: zero weights, output bias picked for the target.
MlpModel constant_model(double speed, double v_f = 30.0) {
  MlpModel m({2, 4, 1}, v_f, 0.0, 100.0, 0.0, 20.0);
  Vector p = Vector::Zero(m.n_params());
  const double s = speed / v_f;
  p[p.size() - 1] = std::log(s / (1.0 - s));  // logit of the output bias
  m.set_params(p);
  return m;
}

GridSpec tiny_grid() {
  GridSpec g;
  g.length = 100.0;
  g.horizon = 20.0;
  g.dx = 25.0;
  g.dt = 10.0;  // 4 x 2 grid
  return g;
}

/// Three observed bins with kept/removed data plus two auxiliary points.
BinnedVelocityField toy_field(double kept_mean = 15.0, double removed_value = 30.0) {
  BinnedVelocityField field;
  field.grid = tiny_grid();
  field.bins.assign(static_cast<size_t>(field.grid.n_points()), Bin{});
  field.bins[0] = Bin{10.0 + 20.0, removed_value, 2, 1};
  field.bins[1] = Bin{kept_mean, 0.0, 1, 0};
  field.bins[2] = Bin{2.0 * kept_mean, removed_value, 2, 1};
  field.observed = {0, 1, 2};
  field.auxiliary = {3, 5};
  return field;
}

}  // namespace

TEST_CASE("weighted_bin_speed follows the quotient") {
  Bin bin{30.0, 30.0, 2, 1};  // kept {10, 20}, removed {30}
  CHECK(weighted_bin_speed(bin, 1.0) == doctest::Approx(20.0));
  CHECK(weighted_bin_speed(bin, 0.0) == doctest::Approx(15.0));
  CHECK(weighted_bin_speed(bin, 0.5) == doctest::Approx(18.0));
  CHECK(weighted_bin_speed_deta(bin, 1.0) == doctest::Approx(10.0 / 3.0));

  Bin empty;
  CHECK_THROWS_AS(weighted_bin_speed(empty, 1.0), std::invalid_argument);
  Bin only_removed{0.0, 12.0, 0, 1};
  CHECK_THROWS_AS(weighted_bin_speed(only_removed, 0.0), std::invalid_argument);
  CHECK(weighted_bin_speed(only_removed, 1.0) == doctest::Approx(12.0));
}

TEST_CASE("mlp parameter count and determinism of init") {
  CHECK(MlpModel::param_count({2, 32, 32, 1}) == 1185);
  MlpModel a = small_model(3), b = small_model(3);
  CHECK(a.params() == b.params());
  MlpModel c = small_model(4);
  CHECK(a.params() != c.params());
}

TEST_CASE("mlp output stays in [0, v_f]") {
  rng::Stream s(8, "range");
  MlpModel m = small_model(8, {2, 16, 16, 1});
  Vector p = m.params();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] *= 5.0 * s.uniform();
  m.set_params(p);
  for (int k = 0; k < 200; ++k) {
    const double v = m.value(s.uniform(-50.0, 150.0), s.uniform(-10.0, 30.0));
    CHECK(v >= 0.0);
    CHECK(v <= 30.0);
  }
}

TEST_CASE("mlp input partials match finite differences of the value") {
  MlpModel m = small_model(11, {2, 10, 6, 1});
  rng::Stream s(12, "fd-xt");
  const double h = 1e-5;
  for (int k = 0; k < 50; ++k) {
    const double x = s.uniform(0.0, 100.0);
    const double t = s.uniform(0.0, 20.0);
    const MlpModel::PointEval e = m.value_with_derivs(x, t);
    const double vx_fd = (m.value(x + h, t) - m.value(x - h, t)) / (2 * h);
    const double vt_fd = (m.value(x, t + h) - m.value(x, t - h)) / (2 * h);
    CHECK(e.v_x == doctest::Approx(vx_fd).epsilon(1e-4));
    CHECK(e.v_t == doctest::Approx(vt_fd).epsilon(1e-4));
  }
}

TEST_CASE("mlp parameter gradients match finite differences") {
  MlpModel m = small_model(13, {2, 6, 5, 1});
  const double x = 37.0, t = 11.0;
  const MlpModel::PointGrads g = m.full_eval(x, t);
  const double h = 1e-6;
  Vector p = m.params();
  for (int i = 0; i < m.n_params(); i += 3) {  // sample every third parameter
    MlpModel shifted = m;
    Vector pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    shifted.set_params(pp);
    const MlpModel::PointEval ep = shifted.value_with_derivs(x, t);
    shifted.set_params(pm);
    const MlpModel::PointEval em = shifted.value_with_derivs(x, t);
    CHECK(g.dv[i] == doctest::Approx((ep.v - em.v) / (2 * h)).epsilon(1e-4));
    const double dvx_fd = (ep.v_x - em.v_x) / (2 * h);
    const double dvt_fd = (ep.v_t - em.v_t) / (2 * h);
    if (std::abs(g.dvx[i]) > 1e-8 || std::abs(dvx_fd) > 1e-8) {
      CHECK(g.dvx[i] == doctest::Approx(dvx_fd).epsilon(1e-4));
    }
    if (std::abs(g.dvt[i]) > 1e-8 || std::abs(dvt_fd) > 1e-8) {
      CHECK(g.dvt[i] == doctest::Approx(dvt_fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("lwr_residual vanishes for constant fields") {
  GreenshieldsParams params;
  const MlpModel c20 = constant_model(20.0);
  CHECK(lwr_residual(c20, params, 30.0, 5.0) == doctest::Approx(0.0).epsilon(1e-14));
  // v = v_f / 2: the wave coefficient 2v - v_f vanishes too
  const MlpModel half = constant_model(15.0);
  CHECK(lwr_residual(half, params, 80.0, 19.0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("lwr_residual matches a finite-difference residual oracle") {
  GreenshieldsParams params;
  MlpModel m = small_model(21, {2, 12, 1});
  rng::Stream s(22, "lwr-fd");
  const double h = 1e-4;
  for (int k = 0; k < 25; ++k) {
    const double x = s.uniform(5.0, 95.0);
    const double t = s.uniform(1.0, 19.0);
    const double v = m.value(x, t);
    const double vx = (m.value(x + h, t) - m.value(x - h, t)) / (2 * h);
    const double vt = (m.value(x, t + h) - m.value(x, t - h)) / (2 * h);
    const double oracle = vt + (2 * v - params.v_f) * vx;
    const double got = lwr_residual(m, params, x, t);
    CHECK(got == doctest::Approx(oracle).epsilon(1e-4));
  }
}

TEST_CASE("objective endpoints and scaling") {
  GreenshieldsParams params;
  BinnedVelocityField field = toy_field();
  PinnObjective obj(field, params, 1.0);
  const MlpModel m = small_model(31);

  // eta = 1 equals the all-data loss computed by hand
  double by_hand = 0.0;
  for (int p : field.observed) {
    const Bin& bin = field.bins[static_cast<size_t>(p)];
    const double vw = (bin.kept_sum + bin.removed_sum) / (bin.kept_count + bin.removed_count);
    const double v = m.value(field.grid.x_center(field.grid.ix_of(p)),
                             field.grid.t_center(field.grid.it_of(p)));
    by_hand += (v - vw) * (v - vw);
  }
  by_hand += obj.physics_sq_sum(m);
  CHECK(std::abs(obj.loss(m, 1.0) - by_hand) <= 1e-12 * std::max(1.0, std::abs(by_hand)));

  // eta = 0 equals the kept-only loss
  double kept_loss = 0.0;
  for (int p : field.observed) {
    const Bin& bin = field.bins[static_cast<size_t>(p)];
    const double vw = bin.kept_sum / bin.kept_count;
    const double v = m.value(field.grid.x_center(field.grid.ix_of(p)),
                             field.grid.t_center(field.grid.it_of(p)));
    kept_loss += (v - vw) * (v - vw);
  }
  kept_loss += obj.physics_sq_sum(m);
  CHECK(std::abs(obj.loss(m, 0.0) - kept_loss) <= 1e-12 * std::max(1.0, kept_loss));

  // doubling lambda doubles exactly the physics share
  PinnObjective twice(field, params, 2.0);
  CHECK(twice.loss(m, 1.0) - obj.data_loss(m, 1.0) ==
        doctest::Approx(2.0 * obj.physics_sq_sum(m)));
}

TEST_CASE("perfect model gives zero loss") {
  GreenshieldsParams params;
  BinnedVelocityField field;
  field.grid = tiny_grid();
  field.bins.assign(static_cast<size_t>(field.grid.n_points()), Bin{});
  const double v0 = 18.0;
  field.bins[0] = Bin{2 * v0, 0.0, 2, 0};
  field.bins[4] = Bin{v0, 0.0, 1, 0};
  field.observed = {0, 4};
  field.auxiliary = {1, 2};
  PinnObjective obj(field, params, 1.0);
  const MlpModel m = constant_model(v0);
  CHECK(obj.loss(m, 1.0) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("objective gradient matches finite differences") {
  GreenshieldsParams params;
  PinnObjective obj(toy_field(), params, 0.7);
  MlpModel m = small_model(41, {2, 7, 1});
  const Vector g = obj.gradient(m, 0.8);
  const Vector g_fd = diff::fd_gradient(
      [&](const Vector& p) {
        MlpModel shifted = m;
        shifted.set_params(p);
        return obj.loss(shifted, 0.8);
      },
      m.params(), 1e-6);
  for (int i = 0; i < m.n_params(); ++i) {
    const double mag = std::max(std::abs(g[i]), std::abs(g_fd[i]));
    if (mag < 1e-8) continue;
    CHECK(std::abs(g[i] - g_fd[i]) / mag <= 1e-4);
  }
}

TEST_CASE("mixed column matches finite differences of the gradient in eta") {
  GreenshieldsParams params;
  PinnObjective obj(toy_field(), params, 1.0);
  MlpModel m = small_model(42, {2, 7, 1});
  const double eta = 1.0, h = 1e-5;
  const Vector mixed = obj.mixed_column(m, eta);
  const Vector fd = (obj.gradient(m, eta + h) - obj.gradient(m, eta - h)) / (2 * h);
  for (int i = 0; i < m.n_params(); ++i) {
    const double mag = std::max(std::abs(mixed[i]), std::abs(fd[i]));
    if (mag < 1e-8) continue;
    CHECK(std::abs(mixed[i] - fd[i]) / mag <= 1e-4);
  }
}

TEST_CASE("hvp agrees with a value-based dense Hessian oracle on a small net") {
  GreenshieldsParams params;
  PinnObjective obj(toy_field(), params, 1.0);
  MlpModel m = small_model(43, {2, 12, 1});  // 49 parameters
  REQUIRE(m.n_params() == 49);
  const Matrix h_oracle = diff::fd_hessian(
      [&](const Vector& p) {
        MlpModel shifted = m;
        shifted.set_params(p);
        return obj.loss(shifted, 1.0);
      },
      m.params(), 1e-3);
  rng::Stream s(44, "hvp");
  for (int k = 0; k < 5; ++k) {
    Vector v(m.n_params());
    for (int i = 0; i < m.n_params(); ++i) v[i] = s.normal();
    const Vector hv = obj.hvp(m, 1.0, v, 1e-4);
    const Vector want = h_oracle * v;
    CHECK((hv - want).lpNorm<Eigen::Infinity>() <=
          1e-6 * std::max(1.0, want.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("training is deterministic and fits a constant field") {
  GreenshieldsParams params;
  BinnedVelocityField field;
  field.grid = tiny_grid();
  field.bins.assign(static_cast<size_t>(field.grid.n_points()), Bin{});
  for (int p = 0; p < field.grid.n_points(); ++p) {
    field.bins[static_cast<size_t>(p)] = Bin{2 * 21.0, 0.0, 2, 0};
    field.observed.push_back(p);
  }
  field.auxiliary = {0, 3, 6};
  PinnObjective obj(field, params, 1.0);

  TrainConfig cfg;
  cfg.layer_sizes = {2, 8, 1};
  cfg.iterations = 1500;
  cfg.lr = 2e-2;
  cfg.seed = 7;
  auto [model_a, log_a] = train_pinn_fresh(obj, cfg);
  auto [model_b, log_b] = train_pinn_fresh(obj, cfg);
  CHECK(model_a.params() == model_b.params());  // bitwise determinism
  CHECK(log_a.final_loss == log_b.final_loss);
  CHECK(obj.data_loss(model_a, 1.0) / static_cast<double>(field.observed.size()) <= 1e-3);
}

TEST_CASE("unlearn_pinn: no removed data means zero update") {
  GreenshieldsParams params;
  BinnedVelocityField field = toy_field();
  for (Bin& b : field.bins) {
    b.removed_sum = 0.0;
    b.removed_count = 0;
  }
  for (auto& bin : field.bins) {
    if (bin.kept_count == 0 && bin.removed_count == 0) continue;
  }
  // ensure observed bins still have data
  field.bins[0].kept_count = 3;
  field.bins[0].kept_sum = 60.0;
  field.bins[2].kept_count = 3;
  field.bins[2].kept_sum = 90.0;
  PinnObjective obj(field, params, 1.0);
  const MlpModel m = small_model(51);
  const PinnUnlearnOutcome out = unlearn_pinn(m, obj);
  CHECK(out.result.delta_theta.norm() == doctest::Approx(0.0));
}

TEST_CASE("unlearn_pinn: removal that leaves bin means unchanged is a no-op") {
  GreenshieldsParams params;
  BinnedVelocityField field = toy_field();
  // removed mean equals kept mean in every touched bin
  field.bins[0] = Bin{30.0, 15.0, 2, 1};
  field.bins[2] = Bin{40.0, 40.0, 2, 2};
  PinnObjective obj(field, params, 1.0);
  const MlpModel m = small_model(52);
  const PinnUnlearnOutcome out = unlearn_pinn(m, obj);
  CHECK(out.result.delta_theta.norm() == doctest::Approx(0.0));
}

TEST_CASE("unlearn_pinn moves the model toward the kept-data solution") {
  GreenshieldsParams params;
  // Observed bins where removal shifts the mean from 20 to 15.
  BinnedVelocityField field;
  field.grid = tiny_grid();
  field.bins.assign(static_cast<size_t>(field.grid.n_points()), Bin{});
  for (int p = 0; p < field.grid.n_points(); ++p) {
    field.bins[static_cast<size_t>(p)] = Bin{15.0 * 2, 30.0, 2, 1};
    field.observed.push_back(p);
  }
  field.auxiliary = {1, 4, 7};
  PinnObjective obj(field, params, 0.1);

  TrainConfig cfg;
  cfg.layer_sizes = {2, 8, 1};
  cfg.iterations = 600;
  cfg.lr = 2e-2;
  cfg.seed = 9;
  auto [model, log] = train_pinn_fresh(obj, cfg);

  const PinnUnlearnOutcome out = unlearn_pinn(model, obj);
  // after unlearning, predictions sit closer to the kept mean (15)
  double before = 0.0, after = 0.0;
  for (int p : field.observed) {
    const double x = field.grid.x_center(field.grid.ix_of(p));
    const double t = field.grid.t_center(field.grid.it_of(p));
    before += std::abs(model.value(x, t) - 15.0);
    after += std::abs(out.model.value(x, t) - 15.0);
  }
  CHECK(after < before);
  CHECK(out.result.method == UnlearnMethod::influence);
}

TEST_CASE("matrix-free path matches the dense path on a small net") {
  GreenshieldsParams params;
  PinnObjective obj(toy_field(), params, 1.0);
  const MlpModel m = small_model(53, {2, 8, 1});
  PinnUnlearnConfig dense_cfg;
  dense_cfg.damping_abs = 1e-3;
  const PinnUnlearnOutcome dense = unlearn_pinn(m, obj, dense_cfg);
  PinnUnlearnConfig free_cfg;
  free_cfg.damping_abs = 1e-3;
  free_cfg.dense_dim_max = 5;  // force CG
  const PinnUnlearnOutcome mf = unlearn_pinn(m, obj, free_cfg);
  CHECK(mf.result.method == UnlearnMethod::matrix_free);
  CHECK((dense.result.delta_theta - mf.result.delta_theta).lpNorm<Eigen::Infinity>() <=
        1e-4 * std::max(1.0, dense.result.delta_theta.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("field_metrics on scaled predictions") {
  GreenshieldsParams params;
  BinnedVelocityField field;
  field.grid = tiny_grid();
  field.bins.assign(static_cast<size_t>(field.grid.n_points()), Bin{});
  field.bins[0] = Bin{20.0, 0.0, 1, 0};
  field.observed = {0};
  field.auxiliary = {1};
  PinnObjective obj(field, params, 1.0);

  const double v0 = 20.0;
  std::vector<double> truth(static_cast<size_t>(field.grid.n_points()), v0);
  const MlpModel exact = constant_model(v0);
  const FieldMetrics perfect = field_metrics(exact, obj, truth, 0.0);
  CHECK(perfect.data_mae == doctest::Approx(0.0));
  CHECK(perfect.physics_mae == doctest::Approx(0.0));
  CHECK(perfect.rel_l2 == doctest::Approx(0.0));

  // v_hat = 1.1 v uniformly -> relative L2 = 10%
  const MlpModel scaled = constant_model(1.1 * v0);
  const FieldMetrics off = field_metrics(scaled, obj, truth, 0.0);
  CHECK(off.rel_l2 == doctest::Approx(0.10).epsilon(1e-9));
}

TEST_CASE("strip_removed drops emptied observed bins") {
  BinnedVelocityField field = toy_field();
  field.bins[1] = Bin{0.0, 25.0, 0, 1};  // observed bin that loses everything
  const BinnedVelocityField kept = strip_removed(field);
  CHECK(kept.observed == std::vector<int>{0, 2});
  for (const Bin& b : kept.bins) CHECK(b.removed_count == 0);
}

TEST_CASE("matrix-free unlearning on the deep configuration") {
  GreenshieldsParams params;
  BinnedVelocityField field = toy_field();
  PinnObjective obj(field, params, 0.5);

  TrainConfig cfg;
  cfg.layer_sizes = {2, 64, 64, 64, 1};
  cfg.iterations = 200;
  cfg.lr = 1e-2;
  cfg.seed = 67;
  auto [model, log] = train_pinn_fresh(obj, cfg);
  REQUIRE(model.n_params() == 8577);

  PinnUnlearnConfig ucfg;  // n_params > dense_dim_max -> conjugate gradients
  ucfg.dense_dim_max = 2000;
  ucfg.damping_abs = 1e-2;
  ucfg.cg_max_iter = 4000;
  const PinnUnlearnOutcome out = unlearn_pinn(model, obj, ucfg);
  CHECK(out.result.method == UnlearnMethod::matrix_free);
  CHECK(out.result.delta_theta.allFinite());
  CHECK(out.result.delta_theta.norm() > 0.0);
  // the update moves predictions toward the kept-data means on touched bins
  double before = 0.0, after = 0.0;
  for (int p : field.observed) {
    const Bin& bin = field.bins[static_cast<size_t>(p)];
    if (bin.removed_count == 0) continue;
    const double kept_mean = bin.kept_sum / bin.kept_count;
    const double x = field.grid.x_center(field.grid.ix_of(p));
    const double t = field.grid.t_center(field.grid.it_of(p));
    before += std::abs(model.value(x, t) - kept_mean);
    after += std::abs(out.model.value(x, t) - kept_mean);
  }
  CHECK(after < before);
}
