// pybind11 module mlkan._core. Configs and summaries cross the boundary as
// JSON text; the Python package turns them into dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <sstream>
#include <stdexcept>

#include "mlkan/analysis.hpp"
#include "mlkan/basis.hpp"
#include "mlkan/experiment.hpp"
#include "mlkan/model.hpp"
#include "mlkan/multilevel.hpp"

namespace py = pybind11;
using namespace mlkan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> dense_cob(const basis::KnotVector& k, bool scaled) {
  const auto cob = basis::build_cob(k, scaled);
  const auto m = static_cast<py::ssize_t>(cob.dim());
  py::array_t<double> out({m, m});
  auto v = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < m; ++i)
    for (py::ssize_t j = 0; j < m; ++j) v(i, j) = cob.matrix.at(i, j);
  return out;
}

py::array_t<double> eval_basis(int r, int n, double a, double b, const Array& x, bool relu) {
  const auto k = basis::make_uniform_knots(a, b, n, r);
  const auto xs = x.unchecked<1>();
  const py::ssize_t count = xs.shape(0), dim = k.dim();
  py::array_t<double> out({count, dim});
  auto v = out.mutable_unchecked<2>();
  for (py::ssize_t s = 0; s < count; ++s)
    for (py::ssize_t i = 0; i < dim; ++i) {
      const int idx = static_cast<int>(i) + k.first_index();
      v(s, i) = relu ? basis::eval_relu_power(k, idx, xs(s)) : basis::eval_bspline(k, idx, xs(s));
    }
  return out;
}

std::vector<std::vector<double>> rows_of(const Array& x, int width) {
  if (x.ndim() != 2 || x.shape(1) != width)
    throw std::invalid_argument("expected an array of shape (N, " + std::to_string(width) + ")");
  const auto v = x.unchecked<2>();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(v.shape(0)), std::vector<double>(width));
  for (py::ssize_t s = 0; s < v.shape(0); ++s)
    for (int j = 0; j < width; ++j) rows[s][j] = v(s, j);
  return rows;
}

py::array_t<double> to_array(const std::vector<std::vector<double>>& rows, int width) {
  py::array_t<double> out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(width)});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t s = 0; s < rows.size(); ++s)
    for (int j = 0; j < width; ++j) v(s, j) = rows[s][j];
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multilevel spline KAN core";

  m.def("uniform_knots", [](double a, double b, int n, int r) { return basis::make_uniform_knots(a, b, n, r).values(); },
        py::arg("a"), py::arg("b"), py::arg("n"), py::arg("r"));
  m.def(
      "cob_matrix",
      [](int r, int n, double a, double b, bool scaled) { return dense_cob(basis::make_uniform_knots(a, b, n, r), scaled); },
      py::arg("r"), py::arg("n"), py::arg("a") = -1.0, py::arg("b") = 1.0, py::arg("scaled") = false,
      "Dense change-of-basis matrix A with B_spline = A B_relu on uniform knots.");
  m.def(
      "bspline_basis",
      [](int r, int n, const Array& x, double a, double b) { return eval_basis(r, n, a, b, x, false); },
      py::arg("r"), py::arg("n"), py::arg("x"), py::arg("a") = -1.0, py::arg("b") = 1.0);
  m.def(
      "relu_basis", [](int r, int n, const Array& x, double a, double b) { return eval_basis(r, n, a, b, x, true); },
      py::arg("r"), py::arg("n"), py::arg("x"), py::arg("a") = -1.0, py::arg("b") = 1.0);
  m.def("mask_constant", &multilevel::dyadic_mask_constant, py::arg("r"));
  m.def(
      "eigen_report",
      [](int r, int n) {
        const auto e = analysis::eigen_report(r, n);
        py::dict d;
        d["eigenvalues"] = e.eigenvalues;
        d["sign_changes"] = e.sign_changes;
        d["ratio"] = e.ratio;
        d["spearman"] = e.spearman;
        return d;
      },
      py::arg("r"), py::arg("n"));

  py::class_<model::Network>(m, "Network")
      .def_static(
          "kan",
          [](std::vector<int> widths, int order, int intervals, std::string basis, double init_scale,
             std::uint64_t seed) {
            model::KanSpec s;
            s.widths = std::move(widths);
            s.order = order;
            s.intervals = intervals;
            s.mode = model::parse_basis_mode(basis);
            s.init_scale = init_scale;
            std::mt19937_64 rng(seed);
            return model::make_kan(s, rng);
          },
          py::arg("widths"), py::arg("order") = 4, py::arg("intervals") = 4, py::arg("basis") = "spline",
          py::arg("init_scale") = 0.1, py::arg("seed") = 1234)
      .def_static(
          "mlp",
          [](std::vector<int> widths, std::string activation, std::uint64_t seed) {
            model::MlpSpec s;
            s.widths = std::move(widths);
            s.act = model::parse_activation(activation);
            std::mt19937_64 rng(seed);
            return model::make_mlp(s, rng);
          },
          py::arg("widths"), py::arg("activation") = "tanh", py::arg("seed") = 1234)
      .def_property_readonly("widths", &model::Network::widths)
      .def_property_readonly("basis",
                             [](const model::Network& n) {
                               if (n.kind == model::NetKind::Mlp) return std::string("mlp");
                               return model::to_string(n.kan.front().mode);
                             })
      .def_property_readonly("param_count", [](const model::Network& n) { return model::param_count(n); })
      .def("get_params", [](const model::Network& n) {
        const auto p = model::get_params(n);
        return py::array_t<double>(static_cast<py::ssize_t>(p.size()), p.data());
      })
      .def("set_params", [](model::Network& n, const Array& p) {
        if (p.ndim() != 1 || static_cast<std::size_t>(p.shape(0)) != model::param_count(n))
          throw std::invalid_argument("parameter vector has the wrong length");
        model::set_params(n, std::span<const double>(p.data(), static_cast<std::size_t>(p.shape(0))));
      })
      .def(
          "forward",
          [](const model::Network& n, const Array& x) {
            return to_array(model::network_forward(n, rows_of(x, n.raw_inputs())).value, n.outputs());
          },
          py::arg("x"), "Evaluates the network on an (N, inputs) array.")
      .def(
          "convert",
          [](const model::Network& n, const std::string& basis) {
            auto out = n;
            model::convert_network(out, model::parse_basis_mode(basis));
            return out;
          },
          py::arg("basis"), "Copy of the network in the other basis; the function is unchanged.")
      .def(
          "refine",
          [](const model::Network& n, const std::string& kind) {
            return multilevel::refine_network(n, multilevel::parse_prolong_kind(kind)).net;
          },
          py::arg("kind") = "dyadic", "Copy on bisected knots representing the same function.")
      .def("save", [](const model::Network& n) {
        std::ostringstream os;
        model::save_weights(n, os);
        return os.str();
      })
      .def("load", [](model::Network& n, const std::string& text) {
        std::istringstream is(text);
        model::load_weights(n, is);
      });

  m.def("default_config", [](const std::string& e) { return experiment::default_config(e).dump(); });
  m.def("resolve_config", [](const std::string& cfg) { return experiment::resolve_config(experiment::json::parse(cfg)).dump(); });
  m.def(
      "run_experiment",
      [](const std::string& cfg, const std::string& out_dir) {
        experiment::RunOptions ro;
        ro.out_dir = out_dir;
        const auto c = experiment::resolve_config(experiment::json::parse(cfg));
        py::gil_scoped_release release;
        return experiment::run_experiment(c, ro).summary.dump();
      },
      py::arg("config"), py::arg("out_dir") = "");
  m.def(
      "run_analyze",
      [](std::vector<int> orders, std::vector<int> sizes, const std::string& out_dir, std::uint64_t seed) {
        experiment::AnalyzeOptions a;
        a.orders = std::move(orders);
        a.sizes = std::move(sizes);
        a.out_dir = out_dir;
        a.seed = seed;
        py::gil_scoped_release release;
        return experiment::run_analyze(a).dump();
      },
      py::arg("orders"), py::arg("sizes"), py::arg("out_dir") = "", py::arg("seed") = 1234);
  m.def(
      "bench",
      [](std::vector<int> orders, std::vector<int> sizes, int reps, int batch, int width, int layers) {
        experiment::BenchOptions b;
        b.orders = std::move(orders);
        b.sizes = std::move(sizes);
        b.reps = reps;
        b.batch = batch;
        b.width = width;
        b.layers = layers;
        std::vector<experiment::BenchRow> rows;
        {
          py::gil_scoped_release release;
          rows = experiment::bench_forward(b);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["r"] = r.r;
          d["n"] = r.n;
          d["fast_mean_ms"] = r.fast_mean_ms;
          d["coxdeboor_mean_ms"] = r.slow_mean_ms;
          d["speedup"] = r.speedup;
          d["flop_model"] = r.flop_model;
          out.append(d);
        }
        return out;
      },
      py::arg("orders"), py::arg("sizes"), py::arg("reps") = 5, py::arg("batch") = 128, py::arg("width") = 64,
      py::arg("layers") = 3);
}
