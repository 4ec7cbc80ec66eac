#include "unlearn/diff.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace unlearn;
using namespace unlearn::testutil;

namespace {

/// L(eta, theta) = 0.5 (theta-1)^2 + eta 0.5 (theta-3)^2 at theta_bar = 2.
WeightedProblem toy_1d() {
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 2;
  const double z[] = {1.0, 3.0};
  prog.loss = [z](int i, const Vector& th) {
    const double d = th[0] - z[i];
    return 0.5 * d * d;
  };
  prog.loss_grad = [z](int i, const Vector& th) {
    return Vector::Constant(1, th[0] - z[i]);
  };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Identity(1, 1); };
  RemovalRequest req;
  req.removed_indices = {1};
  std::vector<Vector> pts = {Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)};
  return assemble_weighted_objective(prog, WeightedDataset::uniform(pts), req, PenaltyConfig{});
}

KktPoint kkt_at(double theta) {
  KktPoint k;
  k.theta = Vector::Constant(1, theta);
  k.lambda_g = Vector();
  k.lambda_h = Vector();
  return k;
}

/// Random strongly-convex quadratic family: per-point losses
/// 0.5 (theta - z_i)^T P_i (theta - z_i) with random SPD P_i.
WeightedProblem random_quadratic_problem(rng::Stream& s, int dim, int n_points,
                                         const std::vector<int>& removed) {
  std::vector<Matrix> ps;
  std::vector<Vector> zs;
  for (int i = 0; i < n_points; ++i) {
    ps.push_back(random_spd(s, dim, 0.3));
    zs.push_back(random_vector(s, dim));
  }
  ConstrainedProgram prog;
  prog.dim_theta = dim;
  prog.n_points = n_points;
  prog.loss = [ps, zs](int i, const Vector& th) {
    const Vector d = th - zs[static_cast<size_t>(i)];
    return 0.5 * d.dot(ps[static_cast<size_t>(i)] * d);
  };
  prog.loss_grad = [ps, zs](int i, const Vector& th) {
    return Vector(ps[static_cast<size_t>(i)] * (th - zs[static_cast<size_t>(i)]));
  };
  prog.loss_hess = [ps](int i, const Vector&) { return ps[static_cast<size_t>(i)]; };
  RemovalRequest req;
  req.removed_indices = removed;
  std::vector<Vector> pts(static_cast<size_t>(n_points), Vector::Zero(1));
  return assemble_weighted_objective(prog, WeightedDataset::uniform(pts), req,
                                     PenaltyConfig{});
}

}  // namespace

TEST_CASE("1d toy derivatives by hand") {
  const WeightedProblem wp = toy_1d();
  const diff::DerivativeBundle b =
      diff::lagrangian_derivatives(wp, kkt_at(2.0), diff::Mode::analytic);
  CHECK(b.grad_theta[0] == doctest::Approx(0.0));
  CHECK((*b.hess_dense)(0, 0) == doctest::Approx(2.0));
  CHECK(b.mixed_theta_eta(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("finite differences agree with the analytic toy bundle") {
  const WeightedProblem wp = toy_1d();
  const KktPoint kkt = kkt_at(2.0);
  const auto analytic = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
  const auto numeric = diff::lagrangian_derivatives(wp, kkt, diff::Mode::finite_difference);
  CHECK(std::abs(analytic.grad_theta[0] - numeric.grad_theta[0]) <= 1e-6);
  CHECK(std::abs((*analytic.hess_dense)(0, 0) - (*numeric.hess_dense)(0, 0)) <= 1e-6);
  CHECK(std::abs(analytic.mixed_theta_eta(0, 0) - numeric.mixed_theta_eta(0, 0)) <= 1e-6);
}

TEST_CASE("hessian_vector_product") {
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Zero(2);
  b.hess_dense = Matrix::Identity(2, 2);
  const Vector v = Eigen::Vector2d(0.3, -1.2);
  CHECK(diff::hessian_vector_product(b, v).isApprox(v));

  Matrix h(2, 2);
  h << 2, 1, 1, 3;
  b.hess_dense = h;
  const Vector got = diff::hessian_vector_product(b, Eigen::Vector2d(1.0, 0.0));
  CHECK(got[0] == doctest::Approx(2.0));
  CHECK(got[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(diff::hessian_vector_product(b, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("finite_difference_check passes on identical bundles and flags faults") {
  const WeightedProblem wp = toy_1d();
  const KktPoint kkt = kkt_at(2.0);
  const auto b = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
  const auto same = diff::finite_difference_check(b, b, 1e-10);
  CHECK(same.all_pass);
  CHECK(same.blocks.front().max_rel_diff == 0.0);

  auto flipped = b;
  flipped.grad_theta = Vector::Constant(1, 0.7);  // constructed fault
  const auto report = diff::finite_difference_check(flipped, b, 1e-4);
  CHECK(!report.all_pass);
  bool grad_failed = false;
  for (const auto& block : report.blocks) {
    if (block.name == "grad") grad_failed = !block.pass;
  }
  CHECK(grad_failed);
}

TEST_CASE("quadratic family: analytic matches central differences at random points") {
  for (int trial = 0; trial < 20; ++trial) {
    rng::Stream s(900 + static_cast<std::uint64_t>(trial), "diff-family");
    const int dim = 1 + s.uniform_int(4);
    const int n_points = 3 + s.uniform_int(4);
    std::vector<int> removed = {s.uniform_int(n_points)};
    const WeightedProblem wp = random_quadratic_problem(s, dim, n_points, removed);
    KktPoint kkt;
    kkt.theta = random_vector(s, dim);
    kkt.lambda_g = Vector();
    kkt.lambda_h = Vector();
    const auto analytic = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
    const auto numeric = diff::lagrangian_derivatives(wp, kkt, diff::Mode::finite_difference);
    const auto report = diff::finite_difference_check(analytic, numeric, 1e-4);
    CHECK(report.all_pass);
    // Hessian symmetry invariant
    const Matrix& h = *analytic.hess_dense;
    CHECK((h - h.transpose()).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("analytic mode requires registered derivatives") {
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 1;
  prog.loss = [](int, const Vector& th) { return th[0] * th[0]; };
  RemovalRequest req;
  req.removed_indices = {0};
  WeightedProblem wp = assemble_weighted_objective(
      prog, WeightedDataset::uniform({Vector::Zero(1)}), req, PenaltyConfig{});
  KktPoint kkt;
  kkt.theta = Vector::Zero(1);
  CHECK_THROWS_AS(diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic),
                  std::invalid_argument);
  // finite-difference mode still works
  const auto numeric = diff::lagrangian_derivatives(wp, kkt, diff::Mode::finite_difference);
  CHECK(numeric.grad_theta.size() == 1);
}

TEST_CASE("folded penalty derivatives need eta callbacks in analytic mode") {
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 1;
  prog.loss = [](int, const Vector& th) { return 0.5 * th[0] * th[0]; };
  prog.loss_grad = [](int, const Vector& th) { return Vector::Constant(1, th[0]); };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Identity(1, 1); };
  ConstraintFn g;
  g.data_indices = {0};
  g.value = [](const Vector& th, const Vector& eta) { return eta[0] * th[0] - 0.5; };
  g.grad = [](const Vector&, const Vector& eta) { return Vector::Constant(1, eta[0]); };
  prog.inequalities.push_back(g);
  RemovalRequest req;
  req.removed_indices = {0};
  WeightedProblem wp = assemble_weighted_objective(
      prog, WeightedDataset::uniform({Vector::Zero(1)}), req, PenaltyConfig{});
  KktPoint kkt;
  kkt.theta = Vector::Constant(1, 2.0);
  kkt.lambda_g = Vector();
  kkt.lambda_h = Vector();
  CHECK_THROWS_AS(diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic),
                  std::invalid_argument);
}

TEST_CASE("folded penalty with eta callbacks matches finite differences") {
  // Constraint g(theta, eta) = eta_0 * theta - 0.5, folded; p = 3 penalty.
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 1;
  prog.loss = [](int, const Vector& th) { return 0.5 * th[0] * th[0]; };
  prog.loss_grad = [](int, const Vector& th) { return Vector::Constant(1, th[0]); };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Identity(1, 1); };
  ConstraintFn g;
  g.data_indices = {0};
  g.value = [](const Vector& th, const Vector& eta) { return eta[0] * th[0] - 0.5; };
  g.grad = [](const Vector&, const Vector& eta) { return Vector::Constant(1, eta[0]); };
  g.hess = nullptr;  // affine in theta
  g.value_deta = [](const Vector& th, const Vector&, int) { return th[0]; };
  g.grad_deta = [](const Vector&, const Vector&, int) { return Vector::Constant(1, 1.0); };
  prog.inequalities.push_back(g);
  ConstraintFn h;
  h.data_indices = {0};
  h.value = [](const Vector& th, const Vector& eta) { return eta[0] * (th[0] - 1.4); };
  h.grad = [](const Vector&, const Vector& eta) { return Vector::Constant(1, eta[0]); };
  h.value_deta = [](const Vector& th, const Vector&, int) { return th[0] - 1.4; };
  h.grad_deta = [](const Vector&, const Vector&, int) { return Vector::Constant(1, 1.0); };
  prog.equalities.push_back(h);

  RemovalRequest req;
  req.removed_indices = {0};
  PenaltyConfig pen;
  pen.c_g = 3.0;
  pen.c_h = 2.0;
  WeightedProblem wp = assemble_weighted_objective(
      prog, WeightedDataset::uniform({Vector::Zero(1)}), req, pen);
  KktPoint kkt;
  kkt.theta = Vector::Constant(1, 2.0);  // both penalty branches active
  kkt.lambda_g = Vector();
  kkt.lambda_h = Vector();
  const auto analytic = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
  const auto numeric = diff::lagrangian_derivatives(wp, kkt, diff::Mode::finite_difference);
  const auto report = diff::finite_difference_check(analytic, numeric, 1e-4);
  CHECK(report.all_pass);
}

TEST_CASE("hard constraints contribute multiplier terms and linearizations") {
  // One hard equality (untouched), one removed point.
  ConstrainedProgram prog;
  prog.dim_theta = 2;
  prog.n_points = 2;
  prog.loss = [](int i, const Vector& th) { return 0.5 * th.squaredNorm() + i * th[0]; };
  prog.loss_grad = [](int i, const Vector& th) {
    Vector g = th;
    g[0] += i;
    return g;
  };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Identity(2, 2); };
  ConstraintFn h;
  h.data_indices = {0};
  h.value = [](const Vector& th, const Vector&) { return th[0] - 2.0 * th[1] + 0.3; };
  h.grad = [](const Vector&, const Vector&) { return Vector(Eigen::Vector2d(1.0, -2.0)); };
  prog.equalities.push_back(h);

  RemovalRequest req;
  req.removed_indices = {1};
  WeightedProblem wp = assemble_weighted_objective(
      prog, WeightedDataset::uniform({Vector::Zero(1), Vector::Zero(1)}), req,
      PenaltyConfig{});
  KktPoint kkt;
  kkt.theta = Eigen::Vector2d(0.5, -0.25);
  kkt.lambda_g = Vector();
  kkt.lambda_h = Vector::Constant(1, 0.8);

  const auto analytic = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
  const auto numeric = diff::lagrangian_derivatives(wp, kkt, diff::Mode::finite_difference);
  CHECK(diff::finite_difference_check(analytic, numeric, 1e-4).all_pass);
  REQUIRE(analytic.hard_eq.size() == 1);
  CHECK(analytic.hard_eq[0].value == doctest::Approx(0.5 + 0.5 + 0.3));
  CHECK(analytic.hard_eq[0].grad.isApprox(Eigen::Vector2d(1.0, -2.0)));
}
