#include "unlearn/unlearn.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace unlearn;
using namespace unlearn::testutil;

namespace {

/// Problem with prescribed constant hard-inequality values (for index-set
/// classification). One dummy removable point keeps the request valid.
WeightedProblem constant_constraint_problem(const std::vector<double>& g_values) {
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 1;
  prog.loss = [](int, const Vector&) { return 0.0; };
  prog.loss_grad = [](int, const Vector&) { return Vector::Zero(1); };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Zero(1, 1); };
  for (double v : g_values) {
    ConstraintFn c;
    c.value = [v](const Vector&, const Vector&) { return v; };
    c.grad = [](const Vector&, const Vector&) { return Vector::Zero(1); };
    prog.inequalities.push_back(c);
  }
  RemovalRequest req;
  req.removed_indices = {0};
  return assemble_weighted_objective(prog, WeightedDataset::uniform({Vector::Zero(1)}), req,
                                     PenaltyConfig{});
}

KktPoint kkt_with(const Vector& theta, const Vector& lambda_g) {
  KktPoint k;
  k.theta = theta;
  k.lambda_g = lambda_g;
  k.lambda_h = Vector();
  return k;
}

/// Exact-unlearning family: shared quadratic regularizer carried by a
/// synthetic always-kept point plus per-point linear losses. theta(eta)
/// solves Q theta = sum_i eta_i a_i exactly, so first order is exact.
struct LinearFamily {
  ConstrainedProgram prog;
  Matrix q;
  std::vector<Vector> a;
  int n_data = 0;

  Vector retrain(const Vector& eta_data) const {
    Vector rhs = Vector::Zero(q.rows());
    for (int i = 0; i < n_data; ++i) rhs += eta_data[i] * a[static_cast<size_t>(i)];
    return q.ldlt().solve(rhs);
  }
};

LinearFamily make_linear_family(rng::Stream& s, int dim, int n_data) {
  LinearFamily fam;
  fam.q = random_spd(s, dim, 0.5);
  for (int i = 0; i < n_data; ++i) fam.a.push_back(random_vector(s, dim));
  fam.n_data = n_data;

  ConstrainedProgram& prog = fam.prog;
  prog.dim_theta = dim;
  prog.n_points = n_data + 1;  // slot 0 carries the regularizer
  const Matrix q = fam.q;
  const std::vector<Vector> a = fam.a;
  prog.loss = [q, a](int i, const Vector& th) {
    if (i == 0) return 0.5 * th.dot(q * th);
    return -a[static_cast<size_t>(i - 1)].dot(th);
  };
  prog.loss_grad = [q, a](int i, const Vector& th) {
    if (i == 0) return Vector(q * th);
    return Vector(-a[static_cast<size_t>(i - 1)]);
  };
  prog.loss_hess = [q](int i, const Vector&) {
    if (i == 0) return q;
    return Matrix(Matrix::Zero(q.rows(), q.cols()));
  };
  return fam;
}

WeightedProblem wrap(const ConstrainedProgram& prog, const RemovalRequest& req) {
  std::vector<Vector> pts(static_cast<size_t>(prog.n_points), Vector::Zero(1));
  return assemble_weighted_objective(prog, WeightedDataset::uniform(pts), req,
                                     PenaltyConfig{});
}

}  // namespace

TEST_CASE("classify_index_sets applies the definitions") {
  WeightedProblem wp = constant_constraint_problem({0.0, 0.0, -0.3});
  Vector lam(3);
  lam << 0.5, 0.0, 0.1;
  const IndexPartition part = classify_index_sets(kkt_with(Vector::Zero(1), lam), wp, 1e-6);
  CHECK(part.active == std::vector<int>{0, 1});
  CHECK(part.weakly_active == std::vector<int>{1});
  CHECK(part.inactive == std::vector<int>{2});
  CHECK(part.warnings.size() == 1);  // slot 2 has positive multiplier
}

TEST_CASE("classify_index_sets: all strictly inactive") {
  WeightedProblem wp = constant_constraint_problem({-0.5, -1.0});
  const IndexPartition part =
      classify_index_sets(kkt_with(Vector::Zero(1), Vector::Zero(2)), wp, 1e-6);
  CHECK(part.active.empty());
  CHECK(part.weakly_active.empty());
  CHECK(part.inactive == std::vector<int>{0, 1});
  CHECK(part.warnings.empty());
}

TEST_CASE("classify_index_sets: within tolerance counts as active") {
  WeightedProblem wp = constant_constraint_problem({-1e-12});
  const IndexPartition part =
      classify_index_sets(kkt_with(Vector::Zero(1), Vector::Constant(1, 0.2)), wp, 1e-9);
  CHECK(part.active == std::vector<int>{0});
  CHECK(part.weakly_active.empty());
}

TEST_CASE("assemble_auxiliary: 1d toy gives min dtheta^2 + dtheta") {
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Zero(1);
  b.hess_dense = Matrix::Constant(1, 1, 2.0);
  b.mixed_theta_eta = Matrix::Constant(1, 1, -1.0);
  RemovalRequest req;
  req.removed_indices = {0};
  const qp::AuxiliaryQp aux = assemble_auxiliary(b, IndexPartition{}, req);
  CHECK(aux.H(0, 0) == doctest::Approx(2.0));
  CHECK(aux.c[0] == doctest::Approx(1.0));
  CHECK(aux.rows.empty());
  const qp::QpSolution sol = qp::solve(aux);
  CHECK(sol.delta_theta[0] == doctest::Approx(-0.5));
}

TEST_CASE("assemble_auxiliary row kinds follow the partition") {
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Zero(2);
  b.hess_dense = Matrix::Identity(2, 2);
  b.mixed_theta_eta = Matrix::Zero(2, 1);
  b.hard_ineq.resize(3);
  for (int s = 0; s < 3; ++s) {
    b.hard_ineq[static_cast<size_t>(s)].value = -0.1 * s;
    b.hard_ineq[static_cast<size_t>(s)].grad = Vector::Ones(2);
  }
  b.hard_eq.resize(1);
  b.hard_eq[0].value = 0.0;
  b.hard_eq[0].grad = Vector::Ones(2);

  IndexPartition part;
  part.active = {0, 1};
  part.weakly_active = {1};
  part.inactive = {2};
  RemovalRequest req;
  req.removed_indices = {0};
  const qp::AuxiliaryQp aux = assemble_auxiliary(b, part, req);
  REQUIRE(aux.rows.size() == 4);
  CHECK(aux.rows[0].kind == qp::RowKind::equality);
  CHECK(aux.rows[1].kind == qp::RowKind::inequality);
  CHECK(aux.rows[2].kind == qp::RowKind::free_row);
  CHECK(aux.rows[3].kind == qp::RowKind::equality);
}

TEST_CASE("stationarity carry-over is dropped when small, kept when large") {
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Constant(1, 1e-9);
  b.hess_dense = Matrix::Identity(1, 1);
  b.mixed_theta_eta = Matrix::Zero(1, 1);
  RemovalRequest req;
  req.removed_indices = {0};
  std::vector<std::string> warnings;
  double carry = 0.0;
  qp::AuxiliaryQp aux = assemble_auxiliary(b, IndexPartition{}, req, {}, &warnings, &carry);
  CHECK(aux.c[0] == 0.0);
  CHECK(carry == doctest::Approx(1e-9));
  CHECK(warnings.empty());

  b.grad_theta = Vector::Constant(1, 1e-3);
  aux = assemble_auxiliary(b, IndexPartition{}, req, {}, &warnings, &carry);
  CHECK(aux.c[0] == doctest::Approx(1e-3));
  CHECK(warnings.size() == 1);
}

TEST_CASE("unlearn: linear family is exact, single point") {
  rng::Stream s(21, "exact-family");
  LinearFamily fam = make_linear_family(s, 3, 6);
  RemovalRequest req;
  req.removed_indices = {4};  // program slot; data slot 3
  WeightedProblem wp = wrap(fam.prog, req);

  KktPoint kkt;
  kkt.theta = fam.retrain(Vector::Ones(6));
  kkt.lambda_g = Vector();
  kkt.lambda_h = Vector();

  const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  CHECK(res.method == UnlearnMethod::influence);
  Vector eta_after = Vector::Ones(6);
  eta_after[3] = 0.0;
  const Vector retrained = fam.retrain(eta_after);
  CHECK((res.theta_updated - retrained).norm() <= 1e-8 * std::max(1.0, retrained.norm()));
  CHECK(res.vi_residual <= 1e-8);
}

TEST_CASE("unlearn: linear family multi-point removal matches retrain") {
  rng::Stream s(22, "exact-family-multi");
  LinearFamily fam = make_linear_family(s, 4, 8);
  RemovalRequest req;
  req.removed_indices = {2, 6, 7};  // data slots 1, 5, 6
  WeightedProblem wp = wrap(fam.prog, req);

  KktPoint kkt;
  kkt.theta = fam.retrain(Vector::Ones(8));
  const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  Vector eta_after = Vector::Ones(8);
  eta_after[1] = eta_after[5] = eta_after[6] = 0.0;
  const Vector retrained = fam.retrain(eta_after);
  CHECK((res.theta_updated - retrained).norm() <= 1e-8 * std::max(1.0, retrained.norm()));
}

TEST_CASE("unlearn: exactness holds with an untouched hard equality") {
  rng::Stream s(23, "exact-eq");
  const int dim = 3;
  LinearFamily fam = make_linear_family(s, dim, 5);
  const Vector a_eq = random_vector(s, dim);
  const double c0 = 0.7;
  ConstraintFn h;
  h.data_indices = {1};  // kept data point
  h.value = [a_eq, c0](const Vector& th, const Vector&) { return a_eq.dot(th) - c0; };
  h.grad = [a_eq](const Vector&, const Vector&) { return a_eq; };
  fam.prog.equalities.push_back(h);

  // KKT of the equality-constrained problem is linear in eta.
  auto solve_kkt = [&](const Vector& eta_data) {
    Matrix kkt_mat(dim + 1, dim + 1);
    kkt_mat.setZero();
    kkt_mat.topLeftCorner(dim, dim) = fam.q;
    kkt_mat.topRightCorner(dim, 1) = a_eq;
    kkt_mat.bottomLeftCorner(1, dim) = a_eq.transpose();
    Vector rhs = Vector::Zero(dim + 1);
    for (int i = 0; i < fam.n_data; ++i) rhs.head(dim) += eta_data[i] * fam.a[static_cast<size_t>(i)];
    rhs[dim] = c0;
    return Vector(kkt_mat.ldlt().solve(rhs));
  };

  RemovalRequest req;
  req.removed_indices = {3};  // data slot 2
  WeightedProblem wp = wrap(fam.prog, req);

  const Vector full = solve_kkt(Vector::Ones(5));
  KktPoint kkt;
  kkt.theta = full.head(dim);
  kkt.lambda_g = Vector();
  kkt.lambda_h = Vector::Constant(1, full[dim]);  // L adds +lambda h, KKT row carries +a mu

  const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  CHECK(res.method == UnlearnMethod::aux_qp);
  Vector eta_after = Vector::Ones(5);
  eta_after[2] = 0.0;
  const Vector retrained = solve_kkt(eta_after).head(dim);
  CHECK((res.theta_updated - retrained).norm() <= 1e-8 * std::max(1.0, retrained.norm()));
  CHECK(res.vi_residual <= 1e-8);
  CHECK(res.vi_sign_ok);
  // first-order feasibility of the linearized equality row
  double max_eq_violation = 0.0;
  for (const auto& entry : res.feasibility) {
    if (entry.kind == "equality") max_eq_violation = std::max(max_eq_violation, entry.violation);
  }
  CHECK(max_eq_violation <= 1e-6);
}

TEST_CASE("unlearn: quadratic toy is first order (dtheta = -0.5 vs true -1)") {
  // L(eta, theta) = 0.5 (theta-1)^2 + eta 0.5 (theta-3)^2, theta(1) = 2;
  // theta(eta) = (1 + 3 eta) / (1 + eta).
  ConstrainedProgram prog;
  prog.dim_theta = 1;
  prog.n_points = 2;
  const double z[] = {1.0, 3.0};
  prog.loss = [z](int i, const Vector& th) {
    const double d = th[0] - z[i];
    return 0.5 * d * d;
  };
  prog.loss_grad = [z](int i, const Vector& th) { return Vector::Constant(1, th[0] - z[i]); };
  prog.loss_hess = [](int, const Vector&) { return Matrix::Identity(1, 1); };
  RemovalRequest req;
  req.removed_indices = {1};
  WeightedProblem wp = wrap(prog, req);
  KktPoint kkt;
  kkt.theta = Vector::Constant(1, 2.0);
  const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  CHECK(res.delta_theta[0] == doctest::Approx(-0.5));
  CHECK(res.theta_updated[0] == doctest::Approx(1.5));  // true retrain is 1.0
}

TEST_CASE("unlearn: null request gives zero update") {
  rng::Stream s(24, "null-request");
  LinearFamily fam = make_linear_family(s, 2, 4);
  RemovalRequest req;
  req.removed_indices = {2};
  req.target_weight = 1.0;  // q = 0
  WeightedProblem wp = wrap(fam.prog, req);
  KktPoint kkt;
  kkt.theta = fam.retrain(Vector::Ones(4));
  const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  CHECK(res.delta_theta.norm() <= 1e-12);
  CHECK(res.delta_lambda_g.size() == 0);
}

TEST_CASE("influence_unconstrained: identity Hessian returns +mixed for q=-1") {
  // dtheta = -H^{-1} (mixed q): downweighting flips the sensitivity sign.
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Zero(3);
  b.hess_dense = Matrix::Identity(3, 3);
  Matrix mixed(3, 1);
  mixed << 0.2, -0.7, 1.1;
  b.mixed_theta_eta = mixed;
  RemovalRequest req;
  req.removed_indices = {0};
  const UnlearnResult res = influence_unconstrained(b, req);
  CHECK(res.delta_theta.isApprox(mixed.col(0), 1e-12));
}

TEST_CASE("influence_unconstrained: matrix-free CG matches the dense solve") {
  rng::Stream s(25, "cg-path");
  const int dim = 40;
  const Matrix h = random_spd(s, dim, 0.4);
  diff::DerivativeBundle dense;
  dense.grad_theta = Vector::Zero(dim);
  dense.hess_dense = h;
  dense.mixed_theta_eta = random_vector(s, dim);
  RemovalRequest req;
  req.removed_indices = {0};
  const UnlearnResult a = influence_unconstrained(dense, req);

  diff::DerivativeBundle free_form;
  free_form.grad_theta = Vector::Zero(dim);
  free_form.mixed_theta_eta = dense.mixed_theta_eta;
  free_form.hvp = [h](const Vector& v) { return Vector(h * v); };
  UnlearnOptions opts;
  opts.dense_dim_max = 10;  // force the CG path
  const UnlearnResult b = influence_unconstrained(free_form, req, opts);
  CHECK(b.method == UnlearnMethod::matrix_free);
  CHECK((a.delta_theta - b.delta_theta).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("influence_unconstrained: singular Hessian is damped") {
  diff::DerivativeBundle b;
  b.grad_theta = Vector::Zero(2);
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = 1.0;  // rank deficient
  b.hess_dense = h;
  b.mixed_theta_eta = Matrix::Constant(2, 1, 1.0);
  RemovalRequest req;
  req.removed_indices = {0};
  const UnlearnResult res = influence_unconstrained(b, req);
  CHECK(res.damping_used > 0.0);
  CHECK(res.delta_theta.allFinite());
}

TEST_CASE("first-order error shrinks ~4x when the downweight halves") {
  int in_range = 0;
  const int trials = 8;
  for (int trial = 0; trial < trials; ++trial) {
    rng::Stream s(500 + static_cast<std::uint64_t>(trial), "ratio");
    const int dim = 2 + s.uniform_int(3);
    const int n = 4 + s.uniform_int(4);
    // strongly-convex quadratic losses; Hessian depends on eta
    std::vector<Matrix> ps;
    std::vector<Vector> zs;
    for (int i = 0; i < n; ++i) {
      ps.push_back(random_spd(s, dim, 0.4));
      zs.push_back(random_vector(s, dim));
    }
    auto retrain = [&](const Vector& eta) {
      Matrix lhs = Matrix::Zero(dim, dim);
      Vector rhs = Vector::Zero(dim);
      for (int i = 0; i < n; ++i) {
        lhs += eta[i] * ps[static_cast<size_t>(i)];
        rhs += eta[i] * ps[static_cast<size_t>(i)] * zs[static_cast<size_t>(i)];
      }
      return Vector(lhs.ldlt().solve(rhs));
    };
    ConstrainedProgram prog;
    prog.dim_theta = dim;
    prog.n_points = n;
    prog.loss = [ps, zs](int i, const Vector& th) {
      const Vector d = th - zs[static_cast<size_t>(i)];
      return 0.5 * d.dot(ps[static_cast<size_t>(i)] * d);
    };
    prog.loss_grad = [ps, zs](int i, const Vector& th) {
      return Vector(ps[static_cast<size_t>(i)] * (th - zs[static_cast<size_t>(i)]));
    };
    prog.loss_hess = [ps](int i, const Vector&) { return ps[static_cast<size_t>(i)]; };

    const int removed = s.uniform_int(n);
    const Vector theta_bar = retrain(Vector::Ones(n));
    auto error_at = [&](double eps) {
      RemovalRequest req;
      req.removed_indices = {removed};
      req.target_weight = 1.0 - eps;
      WeightedProblem wp = wrap(prog, req);
      KktPoint kkt;
      kkt.theta = theta_bar;
      const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
      Vector eta = Vector::Ones(n);
      eta[removed] = 1.0 - eps;
      return (retrain(eta) - res.theta_updated).norm();
    };
    const double ratio = error_at(0.2) / error_at(0.1);
    if (ratio >= 3.2 && ratio <= 4.8) ++in_range;
  }
  CHECK(in_range >= trials - 1);  // allow one borderline draw at unit scale
}

TEST_CASE("certify flags a corrupted update") {
  rng::Stream s(26, "certify");
  LinearFamily fam = make_linear_family(s, 2, 4);
  const Vector a_eq = random_vector(s, 2);
  ConstraintFn h;
  h.data_indices = {1};
  h.value = [a_eq](const Vector& th, const Vector&) { return a_eq.dot(th) - 0.4; };
  h.grad = [a_eq](const Vector&, const Vector&) { return a_eq; };
  fam.prog.equalities.push_back(h);

  RemovalRequest req;
  req.removed_indices = {2};
  WeightedProblem wp = wrap(fam.prog, req);
  Matrix kkt_mat(3, 3);
  kkt_mat.setZero();
  kkt_mat.topLeftCorner(2, 2) = fam.q;
  kkt_mat.topRightCorner(2, 1) = a_eq;
  kkt_mat.bottomLeftCorner(1, 2) = a_eq.transpose();
  Vector rhs = Vector::Zero(3);
  for (const auto& ai : fam.a) rhs.head(2) += ai;
  rhs[2] = 0.4;
  const Vector full = Vector(kkt_mat.ldlt().solve(rhs));
  KktPoint kkt;
  kkt.theta = full.head(2);
  kkt.lambda_h = Vector::Constant(1, full[2]);

  UnlearnResult res = ::unlearn::unlearn(wp, kkt);
  const auto bundle = diff::lagrangian_derivatives(wp, kkt, diff::Mode::analytic);
  Certificate good = certify(res, wp, bundle);
  CHECK(good.max_violation <= 1e-6);

  res.theta_updated += Vector::Constant(2, 0.5);  // deliberate corruption
  res.delta_theta += Vector::Constant(2, 0.5);
  Certificate bad = certify(res, wp, bundle);
  CHECK(bad.max_violation > 1e-3);
  CHECK(bad.vi_residual > 1e-3);
}

TEST_CASE("folded penalized constraints flow through the whole pipeline") {
  // Quadratic losses, one inequality and one equality constraint touching
  // the removed point; both fold into the objective via phi. First-order
  // accuracy must scale quadratically in the downweight.
  rng::Stream s(31, "folded-pipeline");
  const int dim = 2;
  const Vector a1 = random_vector(s, dim), a2 = random_vector(s, dim),
               a3 = random_vector(s, dim);
  const Vector b_in = random_vector(s, dim), b_eq = random_vector(s, dim);

  ConstrainedProgram prog;
  prog.dim_theta = dim;
  prog.n_points = 4;  // slot 0 carries the regularizer, slot 3 is removed
  const std::vector<Vector> loads = {a1, a2, a3};
  prog.loss = [loads](int i, const Vector& th) {
    if (i == 0) return 0.5 * th.squaredNorm();
    return -loads[static_cast<size_t>(i - 1)].dot(th);
  };
  prog.loss_grad = [loads](int i, const Vector& th) {
    if (i == 0) return th;
    return Vector(-loads[static_cast<size_t>(i - 1)]);
  };
  prog.loss_hess = [dim](int i, const Vector&) {
    if (i == 0) return Matrix(Matrix::Identity(dim, dim));
    return Matrix(Matrix::Zero(dim, dim));
  };

  const Vector theta_free = a1 + a2 + a3;
  const double c_in = b_in.dot(theta_free) - 0.4;   // active: g > 0 at the free optimum
  const double c_eq = b_eq.dot(theta_free) - 0.3;

  ConstraintFn g;
  g.data_indices = {3};
  g.value = [b_in, c_in](const Vector& th, const Vector& eta) {
    return eta[3] * b_in.dot(th) - c_in;
  };
  g.grad = [b_in](const Vector&, const Vector& eta) { return Vector(eta[3] * b_in); };
  g.value_deta = [b_in](const Vector& th, const Vector&, int) { return b_in.dot(th); };
  g.grad_deta = [b_in](const Vector&, const Vector&, int) { return b_in; };
  prog.inequalities.push_back(g);

  ConstraintFn h;
  h.data_indices = {3};
  h.value = [b_eq, c_eq](const Vector& th, const Vector& eta) {
    return eta[3] * b_eq.dot(th) - c_eq;
  };
  h.grad = [b_eq](const Vector&, const Vector& eta) { return Vector(eta[3] * b_eq); };
  h.value_deta = [b_eq](const Vector& th, const Vector&, int) { return b_eq.dot(th); };
  h.grad_deta = [b_eq](const Vector&, const Vector&, int) { return b_eq; };
  prog.equalities.push_back(h);

  PenaltyConfig pen;
  pen.c_g = 40.0;
  pen.c_h = 40.0;

  // penalized trainer: damped Newton on the weighted objective via the
  // analytic derivative bundle
  auto train_at = [&](double eta_removed) {
    RemovalRequest req;
    req.removed_indices = {3};
    req.target_weight = 0.0;
    std::vector<Vector> pts(4, Vector::Zero(1));
    WeightedProblem wp =
        assemble_weighted_objective(prog, WeightedDataset::uniform(pts), req, pen);
    Vector eta_k = Vector::Constant(1, eta_removed);
    Vector theta = theta_free;
    for (int it = 0; it < 200; ++it) {
      // gradient/Hessian of the weighted objective at this eta via FD of
      // the objective (independent of the analytic path under test)
      auto f = [&](const Vector& th) { return wp.objective(eta_k, th); };
      const Vector grad = diff::fd_gradient(f, theta, 1e-6);
      Matrix hess = diff::fd_hessian(f, theta, 1e-4);
      hess.diagonal().array() += 1e-9;
      const Vector step = hess.ldlt().solve(grad);
      theta -= step;
      if (step.norm() < 1e-13) break;
    }
    return theta;
  };

  const Vector theta_bar = train_at(1.0);
  auto unlearn_error = [&](double eps) {
    RemovalRequest req;
    req.removed_indices = {3};
    req.target_weight = 1.0 - eps;
    std::vector<Vector> pts(4, Vector::Zero(1));
    WeightedProblem wp =
        assemble_weighted_objective(prog, WeightedDataset::uniform(pts), req, pen);
    REQUIRE(wp.folded_inequalities().size() == 1);
    REQUIRE(wp.folded_equalities().size() == 1);
    KktPoint kkt;
    kkt.theta = theta_bar;
    const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
    CHECK(res.method == UnlearnMethod::influence);  // everything folded, nothing hard
    return (train_at(1.0 - eps) - res.theta_updated).norm();
  };

  const double e1 = unlearn_error(0.10);
  const double e2 = unlearn_error(0.05);
  CHECK(e1 / e2 >= 3.0);
  CHECK(e1 / e2 <= 5.0);
}

TEST_CASE("infeasible auxiliary systems propagate as failures") {
  // two contradictory hard equalities make the linearized rows
  // inconsistent
  rng::Stream s(77, "infeasible-aux");
  LinearFamily fam = make_linear_family(s, 2, 4);
  const Vector a_eq = random_vector(s, 2);
  for (double offset : {0.0, 1.0}) {
    ConstraintFn h;
    h.data_indices = {1};
    h.value = [a_eq, offset](const Vector& th, const Vector&) { return a_eq.dot(th) - offset; };
    h.grad = [a_eq](const Vector&, const Vector&) { return a_eq; };
    fam.prog.equalities.push_back(std::move(h));
  }
  RemovalRequest req;
  req.removed_indices = {3};
  WeightedProblem wp = wrap(fam.prog, req);
  KktPoint kkt;
  kkt.theta = Vector::Zero(2);
  kkt.lambda_h = Vector::Zero(2);
  CHECK_THROWS_AS(::unlearn::unlearn(wp, kkt), std::runtime_error);
}
