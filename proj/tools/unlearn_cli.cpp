// Command-line driver: data generation, training, unlearning, retraining
// and comparison for the toy, SVM and PINN tasks. Artifacts are JSON/CSV
// files under --out; every command is deterministic given (config, seed).

#include "unlearn/core.hpp"
#include "unlearn/diff.hpp"
#include "unlearn/pinn.hpp"
#include "unlearn/qp.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/svm.hpp"
#include "unlearn/traffic.hpp"
#include "unlearn/unlearn.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unlearn;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

struct RunConfig {
  json raw;
  std::string task;
  std::uint64_t seed = 1;
  fs::path out_dir;
};

RunConfig parse_config(const std::string& config_path, const std::string& out_dir,
                       std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  cfg.raw = load_json(config_path);
  if (cfg.raw.value("version", 0) != 1) {
    throw std::invalid_argument("config: unsupported or missing version (expected 1)");
  }
  cfg.task = cfg.raw.value("task", "");
  if (cfg.task != "svm" && cfg.task != "pinn" && cfg.task != "toy") {
    throw std::invalid_argument("config: task must be svm, pinn or toy");
  }
  if (!cfg.raw.contains("seed")) throw std::invalid_argument("config: seed missing");
  cfg.seed = seed_override ? *seed_override : cfg.raw.at("seed").get<std::uint64_t>();
  cfg.out_dir = out_dir;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

// ---------------------------------------------------------------- toy task

struct ToyProblem {
  Matrix q;
  std::vector<Vector> a;
  std::vector<int> removed;  // data-point indices (0-based, excluding the regularizer slot)
  double target_weight = 0.0;

  int dim() const { return static_cast<int>(q.rows()); }
  int n_data() const { return static_cast<int>(a.size()); }

  Vector solve(const Vector& eta) const {
    Vector rhs = Vector::Zero(dim());
    for (int i = 0; i < n_data(); ++i) rhs += eta[i] * a[static_cast<size_t>(i)];
    return q.ldlt().solve(rhs);
  }

  /// Program view: slot 0 carries the shared regularizer, data points
  /// follow at slots 1..n.
  WeightedProblem weighted() const {
    ConstrainedProgram prog;
    prog.dim_theta = dim();
    prog.n_points = n_data() + 1;
    const Matrix qm = q;
    const std::vector<Vector> av = a;
    prog.loss = [qm, av](int i, const Vector& th) {
      if (i == 0) return 0.5 * th.dot(qm * th);
      return -av[static_cast<size_t>(i - 1)].dot(th);
    };
    prog.loss_grad = [qm, av](int i, const Vector& th) {
      if (i == 0) return Vector(qm * th);
      return Vector(-av[static_cast<size_t>(i - 1)]);
    };
    prog.loss_hess = [qm](int i, const Vector&) {
      if (i == 0) return qm;
      return Matrix(Matrix::Zero(qm.rows(), qm.cols()));
    };
    RemovalRequest req;
    for (int k : removed) req.removed_indices.push_back(k + 1);
    req.target_weight = target_weight;
    std::vector<Vector> pts(static_cast<size_t>(prog.n_points), Vector::Zero(1));
    return assemble_weighted_objective(std::move(prog), WeightedDataset::uniform(pts),
                                       std::move(req), PenaltyConfig{});
  }
};

ToyProblem toy_generate(const RunConfig& cfg) {
  const json& tj = cfg.raw.at("toy");
  const int dim = tj.value("dim", 3);
  const int n = tj.value("n_points", 8);
  ToyProblem toy;
  rng::Stream s(cfg.seed, "toy-data");
  Matrix root(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) root(i, j) = s.normal();
  }
  toy.q = root * root.transpose() / dim;
  toy.q.diagonal().array() += 0.5;
  for (int i = 0; i < n; ++i) {
    Vector ai(dim);
    for (int j = 0; j < dim; ++j) ai[j] = s.normal();
    toy.a.push_back(ai);
  }
  toy.removed = tj.value("removed", std::vector<int>{n - 1});
  toy.target_weight = tj.value("target_weight", 0.0);
  for (int k : toy.removed) {
    if (k < 0 || k >= n) throw std::invalid_argument("toy: removed index out of range");
  }
  if (toy.removed.empty()) throw std::invalid_argument("toy: empty removal set");
  return toy;
}

json toy_to_json(const ToyProblem& toy) {
  json j;
  j["type"] = "toy-problem";
  j["dim"] = toy.dim();
  std::vector<std::vector<double>> qm;
  for (int i = 0; i < toy.dim(); ++i) {
    std::vector<double> row(static_cast<size_t>(toy.dim()));
    for (int k = 0; k < toy.dim(); ++k) row[static_cast<size_t>(k)] = toy.q(i, k);
    qm.push_back(std::move(row));
  }
  j["Q"] = qm;
  json av = json::array();
  for (const Vector& ai : toy.a) av.push_back(to_std(ai));
  j["a"] = av;
  j["removed"] = toy.removed;
  j["target_weight"] = toy.target_weight;
  return j;
}

ToyProblem toy_from_json(const json& j) {
  ToyProblem toy;
  const auto qm = j.at("Q").get<std::vector<std::vector<double>>>();
  const int dim = static_cast<int>(qm.size());
  toy.q.resize(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int k = 0; k < dim; ++k) toy.q(i, k) = qm[static_cast<size_t>(i)][static_cast<size_t>(k)];
  }
  for (const auto& ai : j.at("a").get<std::vector<std::vector<double>>>()) {
    toy.a.push_back(Eigen::Map<const Vector>(ai.data(), static_cast<Eigen::Index>(ai.size())));
  }
  toy.removed = j.at("removed").get<std::vector<int>>();
  toy.target_weight = j.at("target_weight").get<double>();
  return toy;
}

// ---------------------------------------------------------------- svm task

struct SvmSetup {
  svm::Dataset train_data;
  svm::Dataset test_data;
  int removed_index = -1;
};

svm::Dataset svm_generate(int n, double spread, rng::Stream& s) {
  svm::Dataset data;
  data.x.resize(n, 2);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double label = i % 2 == 0 ? -1.0 : 1.0;
    const double cx = label < 0 ? -1.2 : 1.2;
    const double cy = label < 0 ? -0.8 : 0.8;
    data.x(i, 0) = cx + spread * s.normal();
    data.x(i, 1) = cy + spread * s.normal();
    data.y[i] = label;
  }
  return data;
}

int svm_resolve_removal(const json& svm_cfg, const svm::Dataset& data, double c, double beta) {
  const json removal = svm_cfg.value("removal", json{{"mode", "margin_sv"}});
  const std::string mode = removal.value("mode", "margin_sv");
  if (mode == "index") {
    if (!removal.contains("index")) throw std::invalid_argument("svm removal: index missing");
    const int idx = removal.at("index").get<int>();
    if (idx < 0 || idx >= data.size()) {
      throw std::invalid_argument("svm removal: index out of range");
    }
    return idx;
  }
  const svm::TrainResult plain = svm::train(data, c, beta, -1, 1.0);
  if (mode == "margin_sv") {
    int best = -1;
    double gap = 1e18;
    for (int slot : plain.partition.margin_sv) {
      const double g = std::abs(plain.partition.alpha[slot] - 0.5 * c);
      if (g < gap) {
        gap = g;
        best = plain.model.kept[static_cast<size_t>(slot)];
      }
    }
    if (best < 0) throw std::runtime_error("svm removal: no margin support vector in the suite");
    return best;
  }
  if (mode == "reserve") {
    int best = -1;
    double margin = 1.0;
    for (int slot : plain.partition.reserve_out) {
      const int orig = plain.model.kept[static_cast<size_t>(slot)];
      const double m = data.y[orig] * plain.model.decision(data.x.row(orig).transpose());
      if (m > margin) {
        margin = m;
        best = orig;
      }
    }
    if (best < 0) throw std::runtime_error("svm removal: no reserve point in the suite");
    return best;
  }
  throw std::invalid_argument("svm removal: unknown mode " + mode);
}

void svm_save_model(const svm::SvmModel& model, const svm::SupportPartition* part,
                    const fs::path& path) {
  json j;
  j["type"] = "svm";
  j["w"] = to_std(model.w);
  j["b"] = model.b;
  j["xi"] = to_std(model.xi);
  j["kept"] = model.kept;
  j["removed_index"] = model.removed_index;
  j["C"] = model.c;
  j["beta"] = model.beta;
  if (part != nullptr) {
    j["alpha"] = to_std(part->alpha);
    j["mu"] = to_std(part->mu);
    j["partition"] = {{"margin_sv", part->margin_sv.size()},
                      {"error_at", part->error_at.size()},
                      {"error_in", part->error_in.size()},
                      {"reserve_at", part->reserve_at.size()},
                      {"reserve_out", part->reserve_out.size()}};
  }
  write_json(j, path);
}

svm::SvmModel svm_load_model(const fs::path& path, svm::SupportPartition* part,
                             const svm::Dataset* data) {
  const json j = load_json(path.string());
  if (j.value("type", "") != "svm") throw std::invalid_argument("model is not an svm model");
  svm::SvmModel m;
  const auto w = j.at("w").get<std::vector<double>>();
  const auto xi = j.at("xi").get<std::vector<double>>();
  m.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.xi = Eigen::Map<const Vector>(xi.data(), static_cast<Eigen::Index>(xi.size()));
  m.b = j.at("b").get<double>();
  m.kept = j.at("kept").get<std::vector<int>>();
  m.removed_index = j.at("removed_index").get<int>();
  m.c = j.at("C").get<double>();
  m.beta = j.at("beta").get<double>();
  if (part != nullptr) {
    if (!j.contains("alpha") || data == nullptr) {
      throw std::invalid_argument("model file lacks multipliers needed for unlearning");
    }
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    *part = svm::partition_vectors(
        m, *data, Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size())),
        Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size())));
  }
  return m;
}

// ---------------------------------------------------------------- pinn task

struct PinnSetup {
  pinn::GreenshieldsParams params;
  pinn::GridSpec grid;
  traffic::ScenarioSpec scenario;
  int n_vehicles = 300;
  double observed_fraction = 0.14;
  double aux_fraction = 0.30;
  double lambda_phys = 1.0;
  double removal_fraction = 0.10;
  std::string removal_mode = "slowest";
  pinn::TrainConfig train;
};

PinnSetup pinn_setup(const RunConfig& cfg) {
  const json pj = cfg.raw.value("pinn", json::object());
  PinnSetup s;
  s.params.v_f = pj.value("v_f", 30.0);
  s.params.rho_m = pj.value("rho_m", 0.12);
  s.grid.length = pj.value("length", 500.0);
  s.grid.horizon = pj.value("horizon", 120.0);
  s.grid.dx = pj.value("dx", 12.5);
  s.grid.dt = pj.value("dt", 2.0);
  const std::string kind = pj.value("scenario", "riemann");
  s.scenario.kind = kind == "congestion_pulse" ? traffic::ScenarioSpec::Kind::congestion_pulse
                                               : traffic::ScenarioSpec::Kind::riemann;
  s.scenario.rho_left = pj.value("rho_left", 0.02);
  s.scenario.rho_right = pj.value("rho_right", 0.10);
  s.scenario.heterogeneity = pj.value("heterogeneity", 0.1);
  s.n_vehicles = pj.value("n_vehicles", 300);
  s.observed_fraction = pj.value("observed_fraction", 0.14);
  s.aux_fraction = pj.value("aux_fraction", 0.30);
  s.lambda_phys = pj.value("lambda_phys", 1.0);
  s.removal_fraction = pj.value("removal_fraction", 0.10);
  s.removal_mode = pj.value("removal_mode", "slowest");
  s.train.layer_sizes = pj.value("layers", std::vector<int>{2, 32, 32, 1});
  s.train.iterations = pj.value("iterations", 6000);
  s.train.lr = pj.value("lr", 8e-3);
  s.train.seed = cfg.seed;
  s.train.log_every = pj.value("log_every", 500);
  return s;
}

/// Rebuilds the binned field from the generated artifacts; deterministic.
pinn::BinnedVelocityField pinn_field(const RunConfig& cfg, const PinnSetup& s) {
  traffic::TrajectorySet set =
      traffic::parse_trajectories((cfg.out_dir / "trajectories.csv").string());
  const json manifest = load_json((cfg.out_dir / "manifest.json").string());
  const auto removed = manifest.at("removed_ids").get<std::vector<int>>();
  set.removed_ids = std::set<int>(removed.begin(), removed.end());
  pinn::BinnedVelocityField field = traffic::bin_trajectories(set, s.grid);
  field.observed = manifest.at("observed").get<std::vector<int>>();
  field.auxiliary = manifest.at("auxiliary").get<std::vector<int>>();
  return field;
}

std::vector<double> pinn_truth(const RunConfig& cfg) {
  std::ifstream in(cfg.out_dir / "truth.csv");
  if (!in) throw std::invalid_argument("truth.csv missing; run gen-data first");
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> truth;
  while (std::getline(in, line)) {
    const auto pos = line.find_last_of(',');
    truth.push_back(std::stod(line.substr(pos + 1)));
  }
  return truth;
}

json pinn_metrics_json(const pinn::FieldMetrics& m) {
  return json{{"data_mae", m.data_mae},
              {"physics_mae", m.physics_mae},
              {"rel_l2", m.rel_l2},
              {"observed_used", m.observed_used}};
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const RunConfig& cfg) {
  if (cfg.task == "toy") {
    write_json(toy_to_json(toy_generate(cfg)), cfg.out_dir / "toy_problem.json");
    return 0;
  }
  if (cfg.task == "svm") {
    const json sj = cfg.raw.value("svm", json::object());
    rng::Stream s(cfg.seed, "svm-data");
    const svm::Dataset train_data = svm_generate(sj.value("n_points", 60), sj.value("spread", 0.9), s);
    rng::Stream s_test(cfg.seed, "svm-test");
    const svm::Dataset test_data =
        svm_generate(sj.value("n_test", 40), sj.value("spread", 0.9), s_test);
    svm::save_dataset(train_data, (cfg.out_dir / "dataset.csv").string());
    svm::save_dataset(test_data, (cfg.out_dir / "test.csv").string());
    return 0;
  }
  const PinnSetup s = pinn_setup(cfg);
  traffic::SyntheticScenario scenario = traffic::generate_greenshields_scenario(
      s.params, s.grid, s.scenario, s.n_vehicles, cfg.seed);
  const traffic::RemovalPick mode = s.removal_mode == "random" ? traffic::RemovalPick::random
                                                               : traffic::RemovalPick::slowest;
  scenario.trajectories.removed_ids =
      traffic::pick_removal_ids(scenario.trajectories, s.removal_fraction, cfg.seed, mode, &s.grid);
  traffic::write_trajectories(scenario.trajectories, (cfg.out_dir / "trajectories.csv").string());

  pinn::BinnedVelocityField field = traffic::bin_trajectories(scenario.trajectories, s.grid);
  const auto [obs, aux] = traffic::split_observed(field, s.observed_fraction, s.aux_fraction, cfg.seed);

  const std::vector<double> truth = scenario.truth.grid_speeds();
  std::ofstream tf(cfg.out_dir / "truth.csv");
  tf << "x,t,v\n";
  tf.precision(17);
  for (int p = 0; p < s.grid.n_points(); ++p) {
    tf << s.grid.x_center(s.grid.ix_of(p)) << "," << s.grid.t_center(s.grid.it_of(p)) << ","
       << truth[static_cast<size_t>(p)] << "\n";
  }

  json manifest;
  manifest["task"] = "pinn";
  manifest["seed"] = cfg.seed;
  manifest["grid"] = {{"length", s.grid.length},
                      {"horizon", s.grid.horizon},
                      {"dx", s.grid.dx},
                      {"dt", s.grid.dt}};
  manifest["params"] = {{"v_f", s.params.v_f}, {"rho_m", s.params.rho_m}};
  manifest["removed_ids"] =
      std::vector<int>(scenario.trajectories.removed_ids.begin(),
                       scenario.trajectories.removed_ids.end());
  manifest["observed"] = obs;
  manifest["auxiliary"] = aux;
  manifest["n_records"] = scenario.trajectories.size();
  write_json(manifest, cfg.out_dir / "manifest.json");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const double t0 = now_seconds();
  if (cfg.task == "toy") {
    const ToyProblem toy = toy_from_json(load_json((cfg.out_dir / "toy_problem.json").string()));
    const Vector theta = toy.solve(Vector::Ones(toy.n_data()));
    write_json(json{{"type", "toy"}, {"theta", to_std(theta)}}, cfg.out_dir / "model.json");
    write_json(json{{"task", "toy"}, {"train_seconds", now_seconds() - t0}},
               cfg.out_dir / "train_log.json");
    return 0;
  }
  if (cfg.task == "svm") {
    const json sj = cfg.raw.value("svm", json::object());
    const double c = sj.value("c", 1.0);
    const double beta = sj.value("beta", 50.0);
    const svm::Dataset data = svm::load_dataset((cfg.out_dir / "dataset.csv").string());
    const svm::Dataset test = svm::load_dataset((cfg.out_dir / "test.csv").string());
    const int removed = svm_resolve_removal(sj, data, c, beta);
    const svm::TrainResult tr = svm::train(data, c, beta, removed, 1.0);
    svm_save_model(tr.model, &tr.partition, cfg.out_dir / "model.json");
    json log;
    log["task"] = "svm";
    log["objective"] = tr.objective;
    log["kkt_residual"] = tr.kkt_residual;
    log["iterations"] = tr.iterations;
    log["removed_index"] = removed;
    log["train_accuracy"] = svm::predict_accuracy(tr.model, data);
    log["test_accuracy"] = svm::predict_accuracy(tr.model, test);
    log["train_seconds"] = now_seconds() - t0;
    write_json(log, cfg.out_dir / "train_log.json");
    return 0;
  }
  const PinnSetup s = pinn_setup(cfg);
  const pinn::BinnedVelocityField field = pinn_field(cfg, s);
  const pinn::PinnObjective obj = pinn::build_objective(field, s.params, s.lambda_phys);
  auto [model, log] = pinn::train_pinn_fresh(obj, s.train);
  pinn::save_model(model, (cfg.out_dir / "model.json").string());
  const pinn::FieldMetrics metrics = pinn::field_metrics(model, obj, pinn_truth(cfg), 0.0);
  json jlog;
  jlog["task"] = "pinn";
  jlog["final_loss"] = log.final_loss;
  jlog["iterations"] = log.iterations;
  jlog["history"] = log.history;
  jlog["metrics"] = pinn_metrics_json(metrics);
  jlog["train_seconds"] = log.seconds;
  write_json(jlog, cfg.out_dir / "train_log.json");
  return 0;
}

int cmd_retrain(const RunConfig& cfg) {
  const double t0 = now_seconds();
  if (cfg.task == "toy") {
    const ToyProblem toy = toy_from_json(load_json((cfg.out_dir / "toy_problem.json").string()));
    Vector eta = Vector::Ones(toy.n_data());
    for (int k : toy.removed) eta[k] = toy.target_weight;
    const Vector theta = toy.solve(eta);
    write_json(json{{"type", "toy"}, {"theta", to_std(theta)}},
               cfg.out_dir / "model_retrained.json");
    write_json(json{{"task", "toy"}, {"retrain_seconds", now_seconds() - t0}},
               cfg.out_dir / "retrain_log.json");
    return 0;
  }
  if (cfg.task == "svm") {
    const json sj = cfg.raw.value("svm", json::object());
    const double c = sj.value("c", 1.0);
    const double beta = sj.value("beta", 50.0);
    const svm::Dataset data = svm::load_dataset((cfg.out_dir / "dataset.csv").string());
    const int removed = svm_resolve_removal(sj, data, c, beta);
    std::vector<int> kept;
    for (int i = 0; i < data.size(); ++i) {
      if (i != removed) kept.push_back(i);
    }
    const svm::TrainResult tr = svm::train(data.subset(kept), c, beta, -1, 1.0);
    svm_save_model(tr.model, &tr.partition, cfg.out_dir / "model_retrained.json");
    write_json(json{{"task", "svm"},
                    {"objective", tr.objective},
                    {"kkt_residual", tr.kkt_residual},
                    {"retrain_seconds", now_seconds() - t0}},
               cfg.out_dir / "retrain_log.json");
    return 0;
  }
  const PinnSetup s = pinn_setup(cfg);
  const pinn::BinnedVelocityField field = pinn_field(cfg, s);
  const pinn::PinnObjective obj =
      pinn::build_objective(pinn::strip_removed(field), s.params, s.lambda_phys);
  auto [model, log] = pinn::train_pinn_fresh(obj, s.train);
  pinn::save_model(model, (cfg.out_dir / "model_retrained.json").string());
  const pinn::FieldMetrics metrics = pinn::field_metrics(model, obj, pinn_truth(cfg), 0.0);
  json jlog;
  jlog["task"] = "pinn";
  jlog["final_loss"] = log.final_loss;
  jlog["metrics"] = pinn_metrics_json(metrics);
  jlog["retrain_seconds"] = log.seconds;
  write_json(jlog, cfg.out_dir / "retrain_log.json");
  return 0;
}

int cmd_unlearn(const RunConfig& cfg, const std::string& model_path) {
  const double t0 = now_seconds();
  const fs::path model_file =
      model_path.empty() ? cfg.out_dir / "model.json" : fs::path(model_path);

  json report;
  report["task"] = cfg.task;

  if (cfg.task == "toy") {
    const ToyProblem toy = toy_from_json(load_json((cfg.out_dir / "toy_problem.json").string()));
    const json mj = load_json(model_file.string());
    const auto theta_v = mj.at("theta").get<std::vector<double>>();
    KktPoint kkt;
    kkt.theta = Eigen::Map<const Vector>(theta_v.data(), static_cast<Eigen::Index>(theta_v.size()));
    kkt.lambda_g = Vector();
    kkt.lambda_h = Vector();
    const WeightedProblem wp = toy.weighted();
    const UnlearnResult res = ::unlearn::unlearn(wp, kkt);
    write_json(json{{"type", "toy"}, {"theta", to_std(res.theta_updated)}},
               cfg.out_dir / "model_unlearned.json");
    report["method"] = to_string(res.method);
    report["delta_theta_norm"] = res.delta_theta.norm();
    report["vi_residual"] = res.vi_residual;
    report["damping_used"] = res.damping_used;
    report["stationarity_carryover"] = res.stationarity_carryover;
    report["feasibility"] = json::array();
    report["warnings"] = res.warnings;
  } else if (cfg.task == "svm") {
    const svm::Dataset data = svm::load_dataset((cfg.out_dir / "dataset.csv").string());
    svm::SupportPartition part;
    const svm::SvmModel model = svm_load_model(model_file, &part, &data);
    if (model.removed_index < 0) {
      throw std::invalid_argument("svm unlearn: model has no removal target");
    }
    svm::AuxSvmOptions opts;
    const json sj = cfg.raw.value("svm", json::object());
    opts.softplus_ratio_sigma = sj.value("softplus_ratio_sigma", false);
    opts.e1_margin_rows_equality = sj.value("e1_margin_rows_equality", true);
    const svm::SvmUnlearnOutcome out = svm::unlearn_svm(model, data, part, opts);
    svm_save_model(out.model, nullptr, cfg.out_dir / "model_unlearned.json");
    report["method"] = to_string(out.result.method);
    report["delta_theta_norm"] = out.result.delta_theta.norm();
    report["delta_wb_norm"] = out.result.delta_theta.head(data.dim() + 1).norm();
    report["vi_residual"] = out.result.vi_residual;
    report["damping_used"] = out.result.damping_used;
    // remaining hard constraints at the updated point
    json feas = json::array();
    double max_violation = 0.0;
    for (size_t slot = 0; slot < out.model.kept.size(); ++slot) {
      const int orig = out.model.kept[slot];
      const double margin_row = 1.0 - out.model.xi[static_cast<Eigen::Index>(slot)] -
                                data.y[orig] * out.model.decision(data.x.row(orig).transpose());
      const double slack_row = -out.model.xi[static_cast<Eigen::Index>(slot)];
      max_violation = std::max({max_violation, margin_row, slack_row});
    }
    report["max_hard_violation"] = max_violation;
    report["feasibility"] = feas;
  } else {
    const PinnSetup s = pinn_setup(cfg);
    const pinn::BinnedVelocityField field = pinn_field(cfg, s);
    const pinn::PinnObjective obj = pinn::build_objective(field, s.params, s.lambda_phys);
    const pinn::MlpModel model = pinn::load_model(model_file.string());
    pinn::PinnUnlearnConfig ucfg;
    const json pj = cfg.raw.value("pinn", json::object());
    ucfg.damping_rel = pj.value("damping_rel", 1e-4);
    ucfg.dense_dim_max = pj.value("dense_dim_max", 2000);
    const pinn::PinnUnlearnOutcome out = pinn::unlearn_pinn(model, obj, ucfg);
    pinn::save_model(out.model, (cfg.out_dir / "model_unlearned.json").string());
    const pinn::FieldMetrics metrics = pinn::field_metrics(out.model, obj, pinn_truth(cfg), 0.0);
    report["method"] = to_string(out.result.method);
    report["delta_theta_norm"] = out.result.delta_theta.norm();
    report["vi_residual"] = out.result.vi_residual;
    report["damping_used"] = out.result.damping_used;
    report["stationarity_carryover"] = out.result.stationarity_carryover;
    report["metrics"] = pinn_metrics_json(metrics);
    report["hessian_seconds"] = out.hessian_seconds;
    report["feasibility"] = json::array();  // no hard constraints remain (penalty form)
  }

  report["unlearn_seconds"] = now_seconds() - t0;
  // speedups are derivable when the sibling logs exist
  const fs::path train_log = cfg.out_dir / "train_log.json";
  if (fs::exists(train_log)) {
    const double ts = load_json(train_log.string()).value("train_seconds", 0.0);
    if (ts > 0.0) report["speedup_vs_train"] = ts / report["unlearn_seconds"].get<double>();
  }
  const fs::path retrain_log = cfg.out_dir / "retrain_log.json";
  if (fs::exists(retrain_log)) {
    const double rs = load_json(retrain_log.string()).value("retrain_seconds", 0.0);
    if (rs > 0.0) report["speedup"] = rs / report["unlearn_seconds"].get<double>();
  }
  write_json(report, cfg.out_dir / "unlearn_report.json");
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  json report;
  report["task"] = cfg.task;
  const double unlearn_seconds =
      load_json((cfg.out_dir / "unlearn_report.json").string()).value("unlearn_seconds", 0.0);
  const double retrain_seconds =
      load_json((cfg.out_dir / "retrain_log.json").string()).value("retrain_seconds", 0.0);
  report["timings"] = {{"unlearn_seconds", unlearn_seconds},
                       {"retrain_seconds", retrain_seconds}};
  if (unlearn_seconds > 0.0) report["speedup"] = retrain_seconds / unlearn_seconds;

  if (cfg.task == "toy") {
    auto theta_of = [&](const char* name) {
      const auto v = load_json((cfg.out_dir / name).string()).at("theta").get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    const Vector orig = theta_of("model.json");
    const Vector unl = theta_of("model_unlearned.json");
    const Vector ret = theta_of("model_retrained.json");
    report["distance_unlearned_retrained"] = (unl - ret).norm();
    report["distance_original_retrained"] = (orig - ret).norm();
    write_json(report, cfg.out_dir / "compare_report.json");
    return 0;
  }
  if (cfg.task == "svm") {
    const svm::Dataset data = svm::load_dataset((cfg.out_dir / "dataset.csv").string());
    const svm::Dataset test = svm::load_dataset((cfg.out_dir / "test.csv").string());
    const svm::SvmModel orig = svm_load_model(cfg.out_dir / "model.json", nullptr, nullptr);
    const svm::SvmModel unl = svm_load_model(cfg.out_dir / "model_unlearned.json", nullptr, nullptr);
    const svm::SvmModel ret = svm_load_model(cfg.out_dir / "model_retrained.json", nullptr, nullptr);
    auto wb = [](const svm::SvmModel& m) {
      Vector v(m.dim() + 1);
      v.head(m.dim()) = m.w;
      v[m.dim()] = m.b;
      return v;
    };
    json models;
    for (const auto& [name, model] : std::initializer_list<std::pair<const char*, const svm::SvmModel*>>{
             {"original", &orig}, {"unlearned", &unl}, {"retrained", &ret}}) {
      models[name] = {{"w", to_std(model->w)},
                      {"b", model->b},
                      {"train_accuracy", svm::predict_accuracy(*model, data)},
                      {"test_accuracy", svm::predict_accuracy(*model, test)}};
    }
    report["models"] = models;
    report["distance_unlearned_retrained"] = (wb(unl) - wb(ret)).norm();
    report["distance_original_retrained"] = (wb(orig) - wb(ret)).norm();
    report["decision_agreement_unlearned_retrained"] = svm::decision_agreement(unl, ret, data);

    // plot-ready decision values over the bounding box
    std::ofstream grid_csv(cfg.out_dir / "boundary.csv");
    grid_csv << "x,y,f_original,f_unlearned,f_retrained\n";
    grid_csv.precision(9);
    const double x_lo = data.x.col(0).minCoeff(), x_hi = data.x.col(0).maxCoeff();
    const double y_lo = data.x.col(1).minCoeff(), y_hi = data.x.col(1).maxCoeff();
    Vector p(2);
    for (int i = 0; i < 60; ++i) {
      for (int k = 0; k < 60; ++k) {
        p[0] = x_lo + (x_hi - x_lo) * (i + 0.5) / 60;
        p[1] = y_lo + (y_hi - y_lo) * (k + 0.5) / 60;
        grid_csv << p[0] << "," << p[1] << "," << orig.decision(p) << "," << unl.decision(p)
                 << "," << ret.decision(p) << "\n";
      }
    }
    write_json(report, cfg.out_dir / "compare_report.json");
    return 0;
  }

  const PinnSetup s = pinn_setup(cfg);
  const pinn::BinnedVelocityField field = pinn_field(cfg, s);
  const pinn::PinnObjective obj = pinn::build_objective(field, s.params, s.lambda_phys);
  const std::vector<double> truth = pinn_truth(cfg);
  const pinn::MlpModel orig = pinn::load_model((cfg.out_dir / "model.json").string());
  const pinn::MlpModel unl = pinn::load_model((cfg.out_dir / "model_unlearned.json").string());
  const pinn::MlpModel ret = pinn::load_model((cfg.out_dir / "model_retrained.json").string());
  json models;
  models["original"] = pinn_metrics_json(pinn::field_metrics(orig, obj, truth, 0.0));
  models["unlearned"] = pinn_metrics_json(pinn::field_metrics(unl, obj, truth, 0.0));
  models["retrained"] = pinn_metrics_json(pinn::field_metrics(ret, obj, truth, 0.0));
  report["models"] = models;
  report["distance_unlearned_retrained"] = (unl.params() - ret.params()).norm();
  report["distance_original_retrained"] = (orig.params() - ret.params()).norm();

  const std::vector<double> v_orig = pinn::predict_grid(orig, s.grid);
  const std::vector<double> v_unl = pinn::predict_grid(unl, s.grid);
  const std::vector<double> v_ret = pinn::predict_grid(ret, s.grid);
  std::ofstream diff_csv(cfg.out_dir / "field_diff.csv");
  diff_csv << "x,t,truth,v_original,v_unlearned,v_retrained,abs_diff_unlearned,abs_diff_retrained\n";
  diff_csv.precision(9);
  for (int p = 0; p < s.grid.n_points(); ++p) {
    const size_t sp = static_cast<size_t>(p);
    diff_csv << s.grid.x_center(s.grid.ix_of(p)) << "," << s.grid.t_center(s.grid.it_of(p)) << ","
             << truth[sp] << "," << v_orig[sp] << "," << v_unl[sp] << "," << v_ret[sp] << ","
             << std::abs(v_unl[sp] - v_orig[sp]) << "," << std::abs(v_ret[sp] - v_orig[sp])
             << "\n";
  }
  write_json(report, cfg.out_dir / "compare_report.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained-model unlearning driver (toy, SVM, PINN tasks)"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", model_path;
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "JSON config path")->required();
  app.add_option("--out", out_dir, "artifact directory");
  std::uint64_t seed_raw = 0;
  auto* seed_opt = app.add_option("--seed", seed_raw, "override config seed");

  auto* gen = app.add_subcommand("gen-data", "generate the task dataset");
  auto* train = app.add_subcommand("train", "train on the full dataset");
  auto* unlearn_cmd = app.add_subcommand("unlearn", "apply the removal to a trained model");
  unlearn_cmd->add_option("--model", model_path, "trained model path (default <out>/model.json)");
  auto* retrain = app.add_subcommand("retrain", "train from scratch on the remaining data");
  auto* compare = app.add_subcommand("compare", "compare original/unlearned/retrained");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (seed_opt->count() > 0) seed_override = seed_raw;
    const RunConfig cfg = parse_config(config_path, out_dir, seed_override);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (unlearn_cmd->parsed()) return cmd_unlearn(cfg, model_path);
    if (retrain->parsed()) return cmd_retrain(cfg);
    if (compare->parsed()) return cmd_compare(cfg);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config/usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
