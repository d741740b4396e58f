// prnf: data generation, training, tuning, sampling and evaluation for the
// conditional SDE surrogate. One binary, subcommand per pipeline stage.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "prnf/dataset.hpp"
#include "prnf/eval.hpp"
#include "prnf/flow.hpp"
#include "prnf/parallel.hpp"
#include "prnf/train.hpp"
#include "prnf/tune.hpp"
#include "prnf/version.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using prnf::RngStream;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kMissingInput = 2, kIoFailure = 3, kSchemaMismatch = 4 };

int g_log_level = 1;  // 0=debug 1=info 2=warn 3=error, from PRNF_LOG

void init_log_level() {
  const char* env = std::getenv("PRNF_LOG");
  if (!env) return;
  const std::string v(env);
  if (v == "debug") g_log_level = 0;
  else if (v == "info") g_log_level = 1;
  else if (v == "warn") g_log_level = 2;
  else if (v == "error") g_log_level = 3;
}

void log_info(const std::string& msg) {
  if (g_log_level <= 1) std::fprintf(stderr, "[prnf] %s\n", msg.c_str());
}
void log_debug(const std::string& msg) {
  if (g_log_level <= 0) std::fprintf(stderr, "[prnf:debug] %s\n", msg.c_str());
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- config schema ----

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw UsageError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw UsageError("unknown config key '" + where + "." + key + "'");
  }
}

void validate_config(const json& cfg) {
  check_keys(cfg, "", {"seed", "workers", "out_dir", "problem", "dataset", "model", "train",
                       "tune", "sample", "evaluate", "qoi", "hist"});
  if (cfg.contains("problem")) {
    check_keys(cfg.at("problem"), "problem", {"name", "params"});
  }
  if (cfg.contains("dataset")) {
    check_keys(cfg.at("dataset"), "dataset", {"path", "n", "dt", "csv"});
  }
  if (cfg.contains("model")) {
    check_keys(cfg.at("model"), "model", {"checkpoint", "hidden"});
  }
  if (cfg.contains("train")) {
    check_keys(cfg.at("train"), "train",
               {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "eps", "lambda",
                "report"});
  }
  if (cfg.contains("tune")) {
    check_keys(cfg.at("tune"), "tune", {"lambdas", "kde_samples", "joint", "report", "epochs"});
  }
  if (cfg.contains("sample")) {
    check_keys(cfg.at("sample"), "sample", {"x0", "initial", "n", "out"});
  }
  if (cfg.contains("evaluate")) {
    check_keys(cfg.at("evaluate"), "evaluate",
               {"kind", "initial", "n", "grid_points", "report", "dataset"});
  }
  if (cfg.contains("qoi")) {
    check_keys(cfg.at("qoi"), "qoi",
               {"kind", "initial", "component", "bounds_lo", "bounds_hi", "n", "mc", "report",
                "t0_list", "p_star", "grid_nx", "grid_nz", "region_x", "region_z"});
  }
  if (cfg.contains("hist")) {
    check_keys(cfg.at("hist"), "hist", {"input", "bins", "dims", "out"});
  }
  if (cfg.contains("evaluate") && cfg.at("evaluate").contains("initial")) {
    check_keys(cfg.at("evaluate").at("initial"), "evaluate.initial",
               {"kind", "at", "a", "b", "L", "center", "width", "T0", "widths"});
  }
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInput("config file not found: " + path);
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const std::exception& e) {
    throw UsageError(std::string("config parse error: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

struct Common {
  json cfg;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string provenance;  // "prnf <version> config=<hash>"
};

Common make_common(const json& cfg, std::optional<std::uint64_t> seed_flag,
                   const std::string& out_flag) {
  Common c;
  c.cfg = cfg;
  c.seed = cfg.value("seed", 0ULL);
  if (seed_flag) c.seed = *seed_flag;
  c.out_dir = cfg.value("out_dir", std::string("."));
  if (!out_flag.empty()) c.out_dir = out_flag;
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  json stamped = cfg;
  stamped["seed"] = c.seed;
  c.provenance = std::string("prnf ") + prnf::kVersion +
                 " config=" + prnf::hex_u64(prnf::fnv1a(stamped.dump()));
  return c;
}

std::string in_out_dir(const Common& c, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(c.out_dir) / p).string();
}

double jnum(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::map<std::string, double> problem_params(const json& cfg) {
  std::map<std::string, double> params;
  if (cfg.contains("problem") && cfg.at("problem").contains("params")) {
    for (const auto& [key, value] : cfg.at("problem").at("params").items()) {
      params[key] = value.get<double>();
    }
  }
  return params;
}

prnf::sde::SdeProblem require_problem(const json& cfg) {
  if (!cfg.contains("problem") || !cfg.at("problem").contains("name")) {
    throw UsageError("config needs problem.name");
  }
  return prnf::sde::problem_catalog(cfg.at("problem").at("name").get<std::string>(),
                                    problem_params(cfg));
}

prnf::sde::PairDataset require_dataset(const Common& c) {
  if (!c.cfg.contains("dataset") || !c.cfg.at("dataset").contains("path")) {
    throw UsageError("config needs dataset.path");
  }
  const std::string path = in_out_dir(c, c.cfg.at("dataset").at("path").get<std::string>());
  if (!fs::exists(path)) throw MissingInput("dataset file not found: " + path);
  return prnf::sde::load_dataset(path);
}

prnf::flow::PrnfModel require_model(const Common& c) {
  if (!c.cfg.contains("model") || !c.cfg.at("model").contains("checkpoint")) {
    throw UsageError("config needs model.checkpoint");
  }
  const std::string path = in_out_dir(c, c.cfg.at("model").at("checkpoint").get<std::string>());
  if (!fs::exists(path)) throw MissingInput("model checkpoint not found: " + path);
  return prnf::flow::load_model(path);
}

void check_model_matches(const prnf::flow::PrnfModel& model, const std::string& problem_name,
                         int d) {
  if (model.d != d) {
    throw SchemaMismatch("model dimension " + std::to_string(model.d) +
                         " does not match expected " + std::to_string(d));
  }
  if (!problem_name.empty() && !model.problem.empty() && model.problem != problem_name) {
    throw SchemaMismatch("model was trained on problem '" + model.problem +
                         "', config asks for '" + problem_name + "'");
  }
}

prnf::eval::InitialDistribution parse_initial(const json& spec,
                                              const prnf::sde::SdeProblem* problem) {
  using prnf::eval::InitialDistribution;
  const std::string kind = spec.value("kind", std::string("uniform"));
  if (kind == "delta") {
    const auto at = spec.at("at").get<std::vector<double>>();
    Eigen::VectorXd x(static_cast<Eigen::Index>(at.size()));
    for (std::size_t i = 0; i < at.size(); ++i) x(i) = at[i];
    return InitialDistribution::delta(x);
  }
  if (kind == "bar") return InitialDistribution::bar(jnum(spec, "a", 1.5), jnum(spec, "b", 3.5));
  if (kind == "sin2") return InitialDistribution::sin2(jnum(spec, "L", 5.0));
  if (kind == "ricker") {
    return InitialDistribution::ricker(jnum(spec, "center", 2.5), jnum(spec, "width", 0.8));
  }
  if (kind == "maxwellian") {
    if (!problem) throw UsageError("maxwellian initial distribution needs a problem context");
    return InitialDistribution::maxwellian(jnum(spec, "T0", 10.0), 3.0, problem->domain.lo(0),
                                           problem->domain.hi(0));
  }
  if (kind == "gaussian_cloud") {
    if (!problem) throw UsageError("gaussian_cloud needs a problem context");
    const auto cv = spec.at("center").get<std::vector<double>>();
    Eigen::VectorXd center(static_cast<Eigen::Index>(cv.size()));
    for (std::size_t i = 0; i < cv.size(); ++i) center(i) = cv[i];
    Eigen::VectorXd widths(3);
    widths << M_PI / 3.0, M_PI / 5.0, M_PI / 4.0;
    if (spec.contains("widths")) {
      const auto wv = spec.at("widths").get<std::vector<double>>();
      for (std::size_t i = 0; i < wv.size() && i < 3; ++i) widths(i) = wv[i];
    }
    return InitialDistribution::gaussian_cloud(center, widths, problem->domain);
  }
  if (kind == "uniform") {
    if (!problem) throw UsageError("uniform initial distribution needs a problem context");
    return InitialDistribution::uniform(problem->domain);
  }
  throw UsageError("unknown initial distribution kind '" + kind + "'");
}

std::string model_sidecar(const Common& c, const prnf::flow::PrnfModel& model,
                          double offline_seconds) {
  json meta;
  meta["tool"] = std::string("prnf ") + prnf::kVersion;
  meta["provenance"] = c.provenance;
  meta["problem"] = model.problem;
  meta["d"] = model.d;
  meta["lambda"] = model.lambda;
  meta["offline_seconds"] = offline_seconds;
  meta["h1_widths"] = model.h1.widths;
  meta["g1_widths"] = model.g1.widths;
  return meta.dump(2);
}

// ---- subcommands ----

int cmd_simulate(const Common& c) {
  const auto problem = require_problem(c.cfg);
  if (!c.cfg.contains("dataset")) throw UsageError("simulate needs a dataset section");
  const json& dcfg = c.cfg.at("dataset");
  const auto n = static_cast<std::int64_t>(jnum(dcfg, "n", 0));
  if (n < 1) throw UsageError("dataset.n must be >= 1");
  prnf::sde::IntegratorConfig icfg;
  icfg.dt = jnum(dcfg, "dt", problem.default_dt);
  icfg.rng_seed = RngStream::derive(c.seed, 0x5157ULL);

  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = prnf::sde::generate_pairs(problem, n, icfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string path = in_out_dir(c, dcfg.at("path").get<std::string>());
  json meta;
  meta["provenance"] = c.provenance;
  meta["problem"] = problem.name;
  meta["n"] = n;
  meta["dt"] = icfg.dt;
  meta["t_final"] = ds.t_final;
  meta["simulate_seconds"] = secs;
  prnf::sde::save_dataset(ds, path, meta.dump(2));
  if (dcfg.contains("csv") && !dcfg.at("csv").get<std::string>().empty()) {
    prnf::sde::export_dataset_csv(ds, in_out_dir(c, dcfg.at("csv").get<std::string>()),
                                  c.provenance);
  }
  std::printf("simulate: problem=%s n=%lld dt=%g wallclock_s=%.3f -> %s\n", problem.name.c_str(),
              static_cast<long long>(n), icfg.dt, secs, path.c_str());
  return kOk;
}

prnf::train::TrainConfig train_config_from(const json& cfg, std::uint64_t seed) {
  prnf::train::TrainConfig tc;
  const json t = cfg.contains("train") ? cfg.at("train") : json::object();
  tc.epochs = static_cast<int>(jnum(t, "epochs", 2000));
  tc.batch_size = static_cast<int>(jnum(t, "batch_size", 1000));
  tc.learning_rate = jnum(t, "learning_rate", 1e-3);
  tc.adam_beta1 = jnum(t, "beta1", 0.9);
  tc.adam_beta2 = jnum(t, "beta2", 0.999);
  tc.adam_eps = jnum(t, "eps", 1e-8);
  tc.seed = RngStream::derive(seed, 0x7261ULL);
  return tc;
}

std::vector<int> hidden_from(const json& cfg) {
  std::vector<int> hidden = {256};
  if (cfg.contains("model") && cfg.at("model").contains("hidden")) {
    hidden = cfg.at("model").at("hidden").get<std::vector<int>>();
  }
  return hidden;
}

int cmd_train(const Common& c) {
  const auto problem = require_problem(c.cfg);
  auto ds = require_dataset(c);
  if (ds.d != problem.d) {
    throw SchemaMismatch("dataset dimension " + std::to_string(ds.d) +
                         " does not match problem dimension " + std::to_string(problem.d));
  }
  const auto tc = train_config_from(c.cfg, c.seed);
  const double lambda = jnum(c.cfg.contains("train") ? c.cfg.at("train") : json::object(),
                             "lambda", 50.0);

  auto model = prnf::flow::make_model(ds.d, hidden_from(c.cfg), tc.seed,
                                      prnf::flow::Standardizer::fit(ds));
  model.problem = problem.name;
  model.lambda = lambda;
  json snapshot;
  snapshot["epochs"] = tc.epochs;
  snapshot["batch_size"] = tc.batch_size;
  snapshot["learning_rate"] = tc.learning_rate;
  snapshot["lambda"] = lambda;
  snapshot["seed"] = tc.seed;
  model.train_config_json = snapshot.dump();

  log_info("training " + problem.name + " (lambda=" + std::to_string(lambda) + ", epochs=" +
           std::to_string(tc.epochs) + ")");
  const auto report = prnf::train::train(model, ds, {lambda}, tc);
  if (report.aborted) {
    std::fprintf(stderr, "training aborted: %s\n", report.abort_reason.c_str());
  }

  const std::string ckpt = in_out_dir(
      c, c.cfg.contains("model") && c.cfg.at("model").contains("checkpoint")
             ? c.cfg.at("model").at("checkpoint").get<std::string>()
             : std::string("model.prnm"));
  prnf::flow::save_model(model, ckpt, model_sidecar(c, model, report.wall_seconds));
  if (c.cfg.contains("train") && c.cfg.at("train").contains("report")) {
    prnf::train::save_report_csv(
        report, in_out_dir(c, c.cfg.at("train").at("report").get<std::string>()), c.provenance);
  }
  std::printf("train: problem=%s epochs=%d final_L=%.6f offline_s=%.1f -> %s\n",
              problem.name.c_str(), report.epochs_run,
              report.L.empty() ? 0.0 : report.L.back(), report.wall_seconds, ckpt.c_str());
  return report.aborted ? kIoFailure : kOk;
}

int cmd_tune(const Common& c) {
  const auto problem = require_problem(c.cfg);
  auto ds = require_dataset(c);
  if (ds.d != problem.d) throw SchemaMismatch("dataset does not match problem dimension");
  if (!c.cfg.contains("tune") || !c.cfg.at("tune").contains("lambdas")) {
    throw UsageError("tune needs tune.lambdas");
  }
  const json& t = c.cfg.at("tune");
  prnf::tune::GridSearchConfig gcfg;
  gcfg.hidden = hidden_from(c.cfg);
  gcfg.train = train_config_from(c.cfg, c.seed);
  if (t.contains("epochs") && t.at("epochs").get<int>() > 0) {
    gcfg.train.epochs = t.at("epochs").get<int>();
  }
  gcfg.kde_samples = static_cast<std::int64_t>(jnum(t, "kde_samples", 100000));
  gcfg.joint_kde = t.value("joint", true);

  const auto lambdas = t.at("lambdas").get<std::vector<double>>();
  auto result = prnf::tune::grid_search(problem, ds, lambdas, gcfg);

  if (t.contains("report")) {
    result.save_csv(in_out_dir(c, t.at("report").get<std::string>()), c.provenance);
  }
  auto& best = result.models[static_cast<std::size_t>(result.selected_index)];
  best.problem = problem.name;
  json snapshot = json::parse(best.train_config_json.empty() ? "{}" : best.train_config_json);
  snapshot["lambda"] = result.selected_lambda;
  snapshot["epochs"] = gcfg.train.epochs;
  best.train_config_json = snapshot.dump();
  const std::string ckpt = in_out_dir(
      c, c.cfg.contains("model") && c.cfg.at("model").contains("checkpoint")
             ? c.cfg.at("model").at("checkpoint").get<std::string>()
             : std::string("model.prnm"));
  prnf::flow::save_model(
      best, ckpt,
      model_sidecar(c, best, result.train_seconds[static_cast<std::size_t>(result.selected_index)]));
  std::printf("tune: selected lambda=%g (H=%.6f) -> %s\n", result.selected_lambda,
              result.H[static_cast<std::size_t>(result.selected_index)], ckpt.c_str());
  for (std::size_t j = 0; j < result.lambdas.size(); ++j) {
    std::printf("  lambda=%-8g H=%s%.6f train_s=%.1f\n", result.lambdas[j],
                result.failed[j] ? "aborted " : "", result.H[j], result.train_seconds[j]);
  }
  return kOk;
}

int cmd_sample(const Common& c) {
  auto model = require_model(c);
  if (!c.cfg.contains("sample")) throw UsageError("sample needs a sample section");
  const json& s = c.cfg.at("sample");
  const auto n = static_cast<std::int64_t>(jnum(s, "n", 0));
  if (n < 1) throw UsageError("sample.n must be >= 1");
  const std::string out = in_out_dir(c, s.value("out", std::string("samples.csv")));
  const std::uint64_t seed = RngStream::derive(c.seed, 0x73616DULL);

  Eigen::MatrixXd x0s, xts;
  if (s.contains("x0")) {
    const auto v = s.at("x0").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != model.d) {
      throw SchemaMismatch("sample.x0 dimension does not match model");
    }
    Eigen::VectorXd x0(model.d);
    for (int i = 0; i < model.d; ++i) x0(i) = v[static_cast<std::size_t>(i)];
    xts = prnf::flow::sample_conditional(model, x0, n, seed);
    x0s = x0.replicate(1, n);
  } else if (s.contains("initial")) {
    const prnf::sde::SdeProblem problem =
        c.cfg.contains("problem") ? require_problem(c.cfg) : prnf::sde::SdeProblem{};
    const auto p0 = parse_initial(s.at("initial"), c.cfg.contains("problem") ? &problem : nullptr);
    check_model_matches(model, "", p0.d);
    std::tie(x0s, xts) = prnf::flow::sample_joint(model, p0, n, seed);
  } else {
    throw UsageError("sample needs either sample.x0 or sample.initial");
  }

  std::FILE* f = std::fopen(out.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + out + " for writing");
  std::fprintf(f, "# %s\n", c.provenance.c_str());
  for (int j = 0; j < model.d; ++j) std::fprintf(f, "%sx0_%d", j ? "," : "", j);
  for (int j = 0; j < model.d; ++j) std::fprintf(f, ",xt_%d", j);
  std::fprintf(f, "\n");
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < model.d; ++j) std::fprintf(f, "%s%.17g", j ? "," : "", x0s(j, i));
    for (int j = 0; j < model.d; ++j) std::fprintf(f, ",%.17g", xts(j, i));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
  std::printf("sample: n=%lld -> %s\n", static_cast<long long>(n), out.c_str());
  return kOk;
}

int cmd_evaluate(const Common& c) {
  auto model = require_model(c);
  if (!c.cfg.contains("evaluate")) throw UsageError("evaluate needs an evaluate section");
  const json& e = c.cfg.at("evaluate");
  const std::string kind = e.value("kind", std::string(""));
  const auto n = static_cast<std::int64_t>(jnum(e, "n", 100000));
  const std::uint64_t seed = RngStream::derive(c.seed, 0x6576ULL);

  if (kind == "sqrt1d_kl") {
    check_model_matches(model, "sqrt1d", 1);
    const auto problem = prnf::sde::problem_catalog("sqrt1d", problem_params(c.cfg));
    const auto p0 = parse_initial(e.contains("initial") ? e.at("initial")
                                                        : json{{"kind", "delta"}, {"at", {2.5}}},
                                  &problem);
    const auto [x0s, xts] = prnf::flow::sample_joint(model, p0, n, seed);
    std::vector<double> samples(xts.data(), xts.data() + xts.cols());
    const int grid_points = static_cast<int>(jnum(e, "grid_points", 512));
    const auto grid = prnf::eval::linspace(1e-4, 12.0, grid_points);
    const double t = problem.horizon;
    const double kl = prnf::eval::kl_divergence_1d(
        [&](double x) { return prnf::eval::sqrt1d_terminal_density(x, p0, t); }, samples, grid);
    std::printf("evaluate sqrt1d_kl: initial=%s KL=%.5f\n", p0.tag.c_str(), kl);
    if (e.contains("report")) {
      std::FILE* f = std::fopen(in_out_dir(c, e.at("report").get<std::string>()).c_str(), "w");
      if (!f) throw std::runtime_error("cannot write evaluate report");
      std::fprintf(f, "# %s\ninitial,kl\n%s,%.8f\n", c.provenance.c_str(), p0.tag.c_str(), kl);
      std::fclose(f);
    }
    return kOk;
  }

  if (kind == "linear10d_marginals") {
    check_model_matches(model, "linear10d", 10);
    const auto problem = prnf::sde::problem_catalog("linear10d");
    const auto p0 = parse_initial(
        e.contains("initial") ? e.at("initial") : json{{"kind", "uniform"}}, &problem);
    const auto [fx0, fxt] = prnf::flow::sample_joint(model, p0, n, seed);
    Eigen::MatrixXd ext(10, n);
    prnf::parallel_chunks(n, 4096, [&](std::int64_t b, std::int64_t en, int) {
      for (std::int64_t i = b; i < en; ++i) {
        RngStream rng(seed, static_cast<std::uint64_t>(i) + 0x10000000ULL);
        const double w = rng.normal() * std::sqrt(problem.horizon);
        ext.col(i) = prnf::sde::analytic_solution_10d(fx0.col(i), w, problem.horizon);
      }
    });
    std::vector<int> dims(10);
    for (int i = 0; i < 10; ++i) dims[static_cast<std::size_t>(i)] = i;
    const auto kls = prnf::eval::marginal_kl(ext, fxt, dims);
    std::printf("evaluate linear10d_marginals: max=%.5f\n", kls.maxCoeff());
    for (int i = 0; i < 10; ++i) std::printf("  dim %d KL=%.5f\n", i, kls(i));
    return kOk;
  }

  if (kind == "pushforward") {
    auto ds = require_dataset(c);
    check_model_matches(model, "", ds.d);
    Eigen::MatrixXd zt(ds.d, ds.rows());
    for (std::int64_t i = 0; i < ds.rows(); ++i) {
      zt.col(i) = prnf::flow::map_forward(model, ds.x0.col(i), ds.xt.col(i)).zt;
    }
    for (int j = 0; j < ds.d; ++j) {
      const double mean = zt.row(j).mean();
      const double var = (zt.row(j).array() - mean).square().sum() / (zt.cols() - 1.0);
      std::printf("pushforward dim %d: mean=%.4f var=%.4f\n", j, mean, var);
    }
    return kOk;
  }

  throw UsageError("unknown evaluate.kind '" + kind +
                   "' (sqrt1d_kl, linear10d_marginals, pushforward)");
}

int cmd_qoi(const Common& c) {
  auto model = require_model(c);
  if (!c.cfg.contains("qoi")) throw UsageError("qoi needs a qoi section");
  const json& q = c.cfg.at("qoi");
  const std::string kind = q.value("kind", std::string("mean"));
  const auto n = static_cast<std::int64_t>(jnum(q, "n", 10000));
  const bool with_mc = q.value("mc", false);
  const std::uint64_t seed = RngStream::derive(c.seed, 0x716FULL);

  double offline_seconds = 0.0;
  if (!model.train_config_json.empty()) {
    // offline cost recorded in the sidecar is authoritative; the snapshot may
    // carry it as well
    try {
      const json snap = json::parse(model.train_config_json);
      offline_seconds = snap.value("offline_seconds", 0.0);
    } catch (...) {
    }
  }

  if (kind == "runaway_sweep") {
    check_model_matches(model, "runaway2d", 2);
    const auto problem = prnf::sde::problem_catalog("runaway2d", problem_params(c.cfg));
    std::vector<double> t0_list = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    if (q.contains("t0_list")) t0_list = q.at("t0_list").get<std::vector<double>>();
    const double p_star = jnum(q, "p_star", 1.75);

    std::vector<double> flow_vals(t0_list.size()), mc_vals(t0_list.size(), 0.0);
    const auto t_flow0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < t0_list.size(); ++k) {
      flow_vals[k] = prnf::eval::runaway_fraction(model, t0_list[k], p_star, n, seed);
    }
    const double online_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_flow0).count();
    double mc_s = 0.0;
    if (with_mc) {
      const auto t_mc0 = std::chrono::steady_clock::now();
      for (std::size_t k = 0; k < t0_list.size(); ++k) {
        mc_vals[k] = prnf::eval::runaway_fraction_mc(problem, t0_list[k], p_star, n, seed);
      }
      mc_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_mc0).count();
    }
    std::printf("qoi runaway_sweep: n=%lld p*=%g\n", static_cast<long long>(n), p_star);
    const std::string mc_note = with_mc ? " C_MC=" + std::to_string(mc_s) + "s" : std::string();
    std::printf("  C_offline=%.1fs C_online=%.2fs%s\n", offline_seconds, online_s,
                mc_note.c_str());
    for (std::size_t k = 0; k < t0_list.size(); ++k) {
      if (with_mc) {
        std::printf("  T0=%-4g n_RE(flow)=%.4f n_RE(MC)=%.4f\n", t0_list[k], flow_vals[k],
                    mc_vals[k]);
      } else {
        std::printf("  T0=%-4g n_RE(flow)=%.4f\n", t0_list[k], flow_vals[k]);
      }
    }
    if (q.contains("report")) {
      std::FILE* f = std::fopen(in_out_dir(c, q.at("report").get<std::string>()).c_str(), "w");
      if (!f) throw std::runtime_error("cannot write qoi report");
      std::fprintf(f, "# %s C_offline=%.1f C_online=%.2f C_MC=%.2f\n", c.provenance.c_str(),
                   offline_seconds, online_s, mc_s);
      std::fprintf(f, "T0,n_re_flow%s\n", with_mc ? ",n_re_mc" : "");
      for (std::size_t k = 0; k < t0_list.size(); ++k) {
        if (with_mc) {
          std::fprintf(f, "%g,%.6f,%.6f\n", t0_list[k], flow_vals[k], mc_vals[k]);
        } else {
          std::fprintf(f, "%g,%.6f\n", t0_list[k], flow_vals[k]);
        }
      }
      std::fclose(f);
    }
    return kOk;
  }

  if (kind == "target_grid") {
    check_model_matches(model, "abc3d", 3);
    const auto problem = prnf::sde::problem_catalog("abc3d", problem_params(c.cfg));
    const int nx = static_cast<int>(jnum(q, "grid_nx", 7));
    const int nz = static_cast<int>(jnum(q, "grid_nz", 7));
    std::array<double, 2> rx = {0.0, M_PI}, rz = {2.0 * M_PI, 3.0 * M_PI};
    if (q.contains("region_x")) {
      const auto v = q.at("region_x").get<std::vector<double>>();
      rx = {v[0], v[1]};
    }
    if (q.contains("region_z")) {
      const auto v = q.at("region_z").get<std::vector<double>>();
      rz = {v[0], v[1]};
    }
    const double two_pi = 2.0 * M_PI;
    std::FILE* f = nullptr;
    if (q.contains("report")) {
      f = std::fopen(in_out_dir(c, q.at("report").get<std::string>()).c_str(), "w");
      if (!f) throw std::runtime_error("cannot write qoi report");
      std::fprintf(f, "# %s\nx,y,value%s\n", c.provenance.c_str(), with_mc ? ",value_mc" : "");
    }
    const auto t_flow0 = std::chrono::steady_clock::now();
    double max_abs_diff = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      for (int iz = 0; iz < nz; ++iz) {
        const double xc = two_pi * ix / (nx - 1.0);
        const double zc = two_pi * iz / (nz - 1.0);
        const double v = prnf::eval::target_density(model, xc, zc, rx, rz, n, seed);
        double vmc = 0.0;
        if (with_mc) {
          vmc = prnf::eval::target_density_mc(problem, xc, zc, rx, rz, n, seed);
          max_abs_diff = std::max(max_abs_diff, std::abs(v - vmc));
        }
        if (f) {
          if (with_mc) {
            std::fprintf(f, "%.6f,%.6f,%.6f,%.6f\n", xc, zc, v, vmc);
          } else {
            std::fprintf(f, "%.6f,%.6f,%.6f\n", xc, zc, v);
          }
        }
      }
    }
    const double total_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_flow0).count();
    if (f) std::fclose(f);
    std::printf("qoi target_grid: %dx%d grid, n=%lld, wallclock_s=%.1f C_offline=%.1f\n", nx, nz,
                static_cast<long long>(n), total_s, offline_seconds);
    if (with_mc) std::printf("  max |flow - MC| = %.4f\n", max_abs_diff);
    return kOk;
  }

  // generic estimators: mean of a component or box-indicator probability
  prnf::eval::QoiSpec spec;
  spec.m_init = n;
  spec.n_cond = static_cast<std::int64_t>(jnum(q, "n_cond", 1));
  if (kind == "mean") {
    const int comp = static_cast<int>(jnum(q, "component", 0));
    spec.integrand = [comp](const Eigen::VectorXd& x) { return x(comp); };
  } else if (kind == "indicator") {
    const auto lo = q.at("bounds_lo").get<std::vector<double>>();
    const auto hi = q.at("bounds_hi").get<std::vector<double>>();
    spec.integrand = [lo, hi](const Eigen::VectorXd& x) {
      for (std::size_t i = 0; i < lo.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        if (x(idx) < lo[i] || x(idx) > hi[i]) return 0.0;
      }
      return 1.0;
    };
  } else {
    throw UsageError("unknown qoi.kind '" + kind + "'");
  }
  const prnf::sde::SdeProblem problem = require_problem(c.cfg);
  check_model_matches(model, problem.name, problem.d);
  const auto p0 = parse_initial(q.contains("initial") ? q.at("initial") : json{{"kind", "uniform"}},
                                &problem);
  const auto t0 = std::chrono::steady_clock::now();
  const auto est = prnf::eval::qoi_estimate(model, p0, spec, seed);
  const double online_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("qoi %s: value=%.6f std_error=%.6f C_offline=%.1fs C_online=%.3fs\n", kind.c_str(),
              est.value, est.std_error, offline_seconds, online_s);
  if (with_mc) {
    prnf::sde::IntegratorConfig icfg;
    icfg.dt = problem.default_dt;
    icfg.rng_seed = seed;
    const auto t1 = std::chrono::steady_clock::now();
    const auto mc = prnf::eval::mc_reference(problem, p0, spec, icfg);
    const double mc_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    std::printf("qoi %s (MC): value=%.6f std_error=%.6f C_MC=%.3fs\n", kind.c_str(), mc.value,
                mc.std_error, mc_s);
  }
  return kOk;
}

int cmd_export_hist(const Common& c) {
  if (!c.cfg.contains("hist")) throw UsageError("export-hist needs a hist section");
  const json& h = c.cfg.at("hist");
  const std::string input = in_out_dir(c, h.at("input").get<std::string>());
  if (!fs::exists(input)) throw MissingInput("input file not found: " + input);
  const int bins = static_cast<int>(jnum(h, "bins", 50));
  std::vector<int> dims = {0};
  if (h.contains("dims")) dims = h.at("dims").get<std::vector<int>>();
  const std::string out = in_out_dir(c, h.value("out", std::string("hist.csv")));

  // samples CSV: header + comment lines starting with '#'
  std::ifstream is(input);
  std::string line;
  std::vector<std::vector<double>> rows;
  int n_cols = -1;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.find_first_not_of("-+0123456789.eE, \t") != std::string::npos) continue;  // header
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? line.size() - pos
                                                                           : comma - pos);
      if (!cell.empty()) row.push_back(std::atof(cell.c_str()));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (n_cols < 0) n_cols = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) == n_cols) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw MissingInput("no numeric rows in " + input);
  for (int dim : dims) {
    if (dim < 0 || dim >= n_cols) throw UsageError("hist.dims out of range");
  }

  if (dims.size() == 1) {
    std::vector<double> samples(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      samples[i] = rows[i][static_cast<std::size_t>(dims[0])];
    }
    prnf::eval::export_histogram_1d(samples, bins, out, c.provenance);
  } else if (dims.size() == 2) {
    Eigen::MatrixXd m(n_cols, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < n_cols; ++j) m(j, static_cast<Eigen::Index>(i)) = rows[i][j];
    }
    prnf::eval::export_histogram_2d(m, dims[0], dims[1], bins, out, c.provenance);
  } else {
    throw UsageError("hist.dims must list one or two columns");
  }
  std::printf("export-hist: %zu rows -> %s\n", rows.size(), out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  init_log_level();
  CLI::App app{"pseudo-reversible normalizing-flow surrogate for SDE final states"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir_flag;
  std::optional<std::uint64_t> seed_flag;
  int workers = 0;

  app.add_option("--config", config_path, "JSON run configuration")->required(false);
  app.add_option("--seed", seed_flag, "master seed override");
  app.add_option("--workers", workers, "worker thread cap (default: all cores)");
  app.add_option("--out", out_dir_flag, "output directory override");

  auto* sc_simulate = app.add_subcommand("simulate", "generate a training dataset");
  auto* sc_train = app.add_subcommand("train", "train the flow on a dataset");
  auto* sc_tune = app.add_subcommand("tune", "lambda grid search by cross-entropy");
  auto* sc_sample = app.add_subcommand("sample", "draw conditional or joint samples");
  auto* sc_evaluate = app.add_subcommand("evaluate", "accuracy metrics against references");
  auto* sc_qoi = app.add_subcommand("qoi", "quantity-of-interest estimates and timing");
  auto* sc_hist = app.add_subcommand("export-hist", "histogram CSV from a samples file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (config_path.empty()) throw UsageError("--config is required");
    if (workers > 0) prnf::set_default_workers(workers);
    const json cfg = load_config(config_path);
    const Common common = make_common(cfg, seed_flag, out_dir_flag);
    log_debug("config hash " + common.provenance);

    if (sc_simulate->parsed()) return cmd_simulate(common);
    if (sc_train->parsed()) return cmd_train(common);
    if (sc_tune->parsed()) return cmd_tune(common);
    if (sc_sample->parsed()) return cmd_sample(common);
    if (sc_evaluate->parsed()) return cmd_evaluate(common);
    if (sc_qoi->parsed()) return cmd_qoi(common);
    if (sc_hist->parsed()) return cmd_export_hist(common);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return kMissingInput;
  } catch (const SchemaMismatch& e) {
    std::fprintf(stderr, "schema mismatch: %s\n", e.what());
    return kSchemaMismatch;
  } catch (const prnf::sde::IntegrationError& e) {
    std::fprintf(stderr, "integration failure: %s\n", e.what());
    return kMissingInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoFailure;
  }
}
