// Python bindings for the core pipeline: dataset generation, training,
// tuning, sampling and density evaluation. Arrays are numpy row-per-sample;
// the core stores column-per-sample, so the boundary transposes.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prnf/dataset.hpp"
#include "prnf/eval.hpp"
#include "prnf/flow.hpp"
#include "prnf/parallel.hpp"
#include "prnf/train.hpp"
#include "prnf/tune.hpp"
#include "prnf/version.hpp"

namespace py = pybind11;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

prnf::sde::PairDataset dataset_from_rows(const MatrixXd& x0, const MatrixXd& xt, double t_final) {
  if (x0.rows() != xt.rows() || x0.cols() != xt.cols()) {
    throw std::invalid_argument("x0 and xt must have the same shape");
  }
  prnf::sde::PairDataset ds;
  ds.d = static_cast<int>(x0.cols());
  ds.t_final = t_final;
  ds.x0 = x0.transpose();
  ds.xt = xt.transpose();
  ds.validate();
  return ds;
}

prnf::train::TrainConfig make_train_config(int epochs, int batch_size, double learning_rate,
                                           std::uint64_t seed) {
  prnf::train::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.learning_rate = learning_rate;
  tc.seed = seed;
  return tc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "conditional normalizing-flow surrogate for SDE final states";
  m.attr("__version__") = prnf::kVersion;

  py::class_<prnf::flow::PrnfModel>(m, "Model")
      .def_readonly("d", &prnf::flow::PrnfModel::d)
      .def_readonly("problem", &prnf::flow::PrnfModel::problem)
      .def_readonly("lambda_", &prnf::flow::PrnfModel::lambda)
      .def("log_density",
           [](const prnf::flow::PrnfModel& model, const MatrixXd& x0, const MatrixXd& xt) {
             return prnf::flow::log_density_batch(model, x0.transpose(), xt.transpose());
           },
           py::arg("x0"), py::arg("xt"))
      .def("sample_conditional",
           [](const prnf::flow::PrnfModel& model, const VectorXd& x0, std::int64_t n,
              std::uint64_t seed) {
             return MatrixXd(prnf::flow::sample_conditional(model, x0, n, seed).transpose());
           },
           py::arg("x0"), py::arg("n"), py::arg("seed") = 0)
      .def("map_forward",
           [](const prnf::flow::PrnfModel& model, const VectorXd& x0, const VectorXd& xt) {
             const auto z = prnf::flow::map_forward(model, x0, xt);
             return py::make_tuple(z.z0, z.zt);
           })
      .def("map_inverse",
           [](const prnf::flow::PrnfModel& model, const VectorXd& z0, const VectorXd& zt) {
             const auto [x0, xt] = prnf::flow::map_inverse(model, z0, zt);
             return py::make_tuple(x0, xt);
           })
      .def("save", [](const prnf::flow::PrnfModel& model, const std::string& path) {
        prnf::flow::save_model(model, path);
      });

  m.def("load_model", &prnf::flow::load_model, py::arg("path"));

  m.def(
      "generate_pairs",
      [](const std::string& name, const std::map<std::string, double>& params, std::int64_t n,
         double dt, std::uint64_t seed) {
        const auto problem = prnf::sde::problem_catalog(name, params);
        prnf::sde::IntegratorConfig cfg;
        cfg.dt = dt > 0.0 ? dt : problem.default_dt;
        cfg.rng_seed = seed;
        const auto ds = prnf::sde::generate_pairs(problem, n, cfg);
        return py::make_tuple(MatrixXd(ds.x0.transpose()), MatrixXd(ds.xt.transpose()),
                              ds.t_final);
      },
      py::arg("problem"), py::arg("params") = std::map<std::string, double>{}, py::arg("n") = 1000,
      py::arg("dt") = 0.0, py::arg("seed") = 0);

  m.def("save_dataset",
        [](const std::string& path, const MatrixXd& x0, const MatrixXd& xt, double t_final) {
          prnf::sde::save_dataset(dataset_from_rows(x0, xt, t_final), path);
        },
        py::arg("path"), py::arg("x0"), py::arg("xt"), py::arg("t_final"));

  m.def("load_dataset", [](const std::string& path) {
    const auto ds = prnf::sde::load_dataset(path);
    return py::make_tuple(MatrixXd(ds.x0.transpose()), MatrixXd(ds.xt.transpose()), ds.t_final);
  });

  m.def("analytic_pdf_1d", &prnf::sde::analytic_pdf_1d, py::arg("x"), py::arg("x0"), py::arg("t"));
  m.def("analytic_solution_10d", &prnf::sde::analytic_solution_10d, py::arg("x0"), py::arg("w_t"),
        py::arg("t"));

  m.def(
      "train",
      [](const MatrixXd& x0, const MatrixXd& xt, double t_final, const std::vector<int>& hidden,
         double lam, int epochs, int batch_size, double learning_rate, std::uint64_t seed,
         const std::string& problem) {
        const auto ds = dataset_from_rows(x0, xt, t_final);
        auto model = prnf::flow::make_model(ds.d, hidden, seed, prnf::flow::Standardizer::fit(ds));
        model.problem = problem;
        model.lambda = lam;
        const auto tc = make_train_config(epochs, batch_size, learning_rate, seed);
        const auto report = prnf::train::train(model, ds, {lam}, tc);
        py::dict rep;
        rep["L"] = report.L;
        rep["L1"] = report.L1;
        rep["L2"] = report.L2;
        rep["wall_seconds"] = report.wall_seconds;
        rep["aborted"] = report.aborted;
        return py::make_tuple(model, rep);
      },
      py::arg("x0"), py::arg("xt"), py::arg("t_final"), py::arg("hidden") = std::vector<int>{256},
      py::arg("lam") = 50.0, py::arg("epochs") = 1000, py::arg("batch_size") = 1000,
      py::arg("learning_rate") = 1e-3, py::arg("seed") = 0, py::arg("problem") = "");

  m.def(
      "grid_search",
      [](const std::string& name, const std::map<std::string, double>& params, const MatrixXd& x0,
         const MatrixXd& xt, double t_final, const std::vector<double>& lambdas,
         const std::vector<int>& hidden, int epochs, int batch_size, double learning_rate,
         std::uint64_t seed, std::int64_t kde_samples, bool joint) {
        const auto problem = prnf::sde::problem_catalog(name, params);
        const auto ds = dataset_from_rows(x0, xt, t_final);
        prnf::tune::GridSearchConfig cfg;
        cfg.hidden = hidden;
        cfg.train = make_train_config(epochs, batch_size, learning_rate, seed);
        cfg.kde_samples = kde_samples;
        cfg.joint_kde = joint;
        auto result = prnf::tune::grid_search(problem, ds, lambdas, cfg);
        py::dict out;
        out["selected_lambda"] = result.selected_lambda;
        out["lambdas"] = result.lambdas;
        out["H"] = result.H;
        out["model"] = result.models[static_cast<std::size_t>(result.selected_index)];
        return out;
      },
      py::arg("problem"), py::arg("params"), py::arg("x0"), py::arg("xt"), py::arg("t_final"),
      py::arg("lambdas"), py::arg("hidden") = std::vector<int>{256}, py::arg("epochs") = 500,
      py::arg("batch_size") = 1000, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0,
      py::arg("kde_samples") = 10000, py::arg("joint") = true);

  m.def(
      "cross_entropy",
      [](const prnf::flow::PrnfModel& model, const MatrixXd& x0, const MatrixXd& xt,
         double t_final, const VectorXd& lo, const VectorXd& hi, std::int64_t m_samples,
         std::uint64_t seed, bool joint) {
        const auto ds = dataset_from_rows(x0, xt, t_final);
        prnf::sde::Box box{lo, hi};
        return prnf::tune::cross_entropy(model, ds, box, m_samples, seed, joint).H;
      },
      py::arg("model"), py::arg("x0"), py::arg("xt"), py::arg("t_final"), py::arg("lo"),
      py::arg("hi"), py::arg("m_samples") = 10000, py::arg("seed") = 0, py::arg("joint") = true);

  m.def(
      "kl_divergence_1d",
      [](const std::function<double(double)>& exact, const std::vector<double>& samples,
         const VectorXd& grid) { return prnf::eval::kl_divergence_1d(exact, samples, grid); },
      py::arg("exact"), py::arg("samples"), py::arg("grid"));

  m.def("runaway_fraction", &prnf::eval::runaway_fraction, py::arg("model"), py::arg("T0_hat"),
        py::arg("p_star") = 1.75, py::arg("n") = 10000, py::arg("seed") = 0,
        py::arg("T_tilde") = 3.0, py::arg("p_min") = 0.5, py::arg("p_max") = 5.0);

  m.def("set_workers", &prnf::set_default_workers, py::arg("workers"));
}
