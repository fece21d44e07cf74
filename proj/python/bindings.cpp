#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "cftree/engine.hpp"
#include "cftree/error.hpp"
#include "cftree/fixtures.hpp"
#include "cftree/program.hpp"
#include "cftree/tree_model.hpp"

namespace py = pybind11;
using json = nlohmann::json;
using namespace cftree;

namespace {

// Documents cross the boundary as JSON text; the Python side wraps them in dicts.
using TreePtr = std::shared_ptr<TreeModel>;

// Plain sequences rather than numpy arrays, so the module does not depend on numpy's ABI.
Vector to_vector(const TreeModel& t, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != t.dim()) throw Error(ErrorCode::DimensionMismatch, "instance has the wrong dimension");
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

TreePtr load(const std::string& doc) { return std::make_shared<TreeModel>(parse_tree(json::parse(doc))); }

std::string explain_doc(const TreePtr& tree, const std::string& request, bool timing) {
  const Query q = query_from_json(tree, json::parse(request));
  py::gil_scoped_release release;
  return result_to_json(explain(q), tree->schema(), timing).dump();
}

std::string margin_doc(const TreePtr& tree, const std::string& request, const std::vector<double>& schedule,
                       bool timing) {
  const Query q = query_from_json(tree, json::parse(request));
  json runs = json::array();
  {
    py::gil_scoped_release release;
    for (const auto& [eps, r] : explain_margin(q, schedule))
      runs.push_back({{"epsilon", eps}, {"result", result_to_json(r, tree->schema(), timing)}});
  }
  return runs.dump();
}

std::string search_doc(const TreePtr& tree, const std::string& request, const std::string& dataset, bool timing) {
  const Query q = query_from_json(tree, json::parse(request));
  const auto data = dataset_from_json(json::parse(dataset));
  CandidatePool pool{data.rows, data.labels};
  return result_to_json(dataset_search(q, pool), tree->schema(), timing).dump();
}

}  // namespace

PYBIND11_MODULE(_cftree, m) {
  m.doc() = "Exact counterfactual explanations for axis-aligned and oblique decision trees.";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  py::class_<TreeModel, TreePtr>(m, "Tree")
      .def(py::init(&load), py::arg("document"))
      .def_property_readonly("dim", &TreeModel::dim)
      .def_property_readonly("class_count", &TreeModel::class_count)
      .def_property_readonly("oblique", [](const TreeModel& t) { return t.kind() == TreeKind::Oblique; })
      .def_property_readonly("leaves", &TreeModel::leaves)
      .def("leaf_label", [](const TreeModel& t, NodeId leaf) { return t.node(leaf).label; })
      .def("predict", [](const TreeModel& t, const std::vector<double>& x) { return predict(t, to_vector(t, x)); })
      .def("route", [](const TreeModel& t, const std::vector<double>& x) { return t.route(to_vector(t, x)); })
      .def("encode", [](const TreeModel& t, const std::string& instance) {
        const Vector x = instance_from_json(t.schema(), json::parse(instance));
        return std::vector<double>(x.data(), x.data() + x.size());
      })
      .def("to_json", [](const TreeModel& t) { return serialize_tree(t).dump(); });

  m.def("explain", &explain_doc, py::arg("tree"), py::arg("request"), py::arg("include_timing") = true);
  m.def("explain_margin", &margin_doc, py::arg("tree"), py::arg("request"), py::arg("schedule"),
        py::arg("include_timing") = true);
  m.def("search_baseline", &search_doc, py::arg("tree"), py::arg("request"), py::arg("dataset"),
        py::arg("include_timing") = true);

  m.def("gen_random_oblique", [](int dim, int depth, int classes, std::uint64_t seed) {
    return serialize_tree(gen_random_oblique(dim, depth, classes, seed)).dump();
  }, py::arg("dim"), py::arg("depth"), py::arg("classes"), py::arg("seed"));
  m.def("make_blobs", [](int dim, int classes, int per_class, double spread, std::uint64_t seed) {
    return dataset_to_json(make_blobs(dim, classes, per_class, spread, seed)).dump();
  }, py::arg("dim"), py::arg("classes"), py::arg("per_class"), py::arg("spread"), py::arg("seed"));
  m.def("train_axis_aligned", [](const std::string& dataset, int max_depth) {
    return serialize_tree(train_axis_aligned(dataset_from_json(json::parse(dataset)), max_depth)).dump();
  }, py::arg("dataset"), py::arg("max_depth"));

  m.def("check_kkt", [](const std::string& program, const std::string& outcome, double tol) {
    const auto rep = check_kkt(program_from_json(json::parse(program)), outcome_from_json(json::parse(outcome)), tol);
    return py::dict(py::arg("passed") = rep.passed, py::arg("residual") = rep.residual,
                    py::arg("stationarity") = rep.stationarity, py::arg("primal") = rep.primal,
                    py::arg("dual") = rep.dual, py::arg("complementarity") = rep.complementarity);
  }, py::arg("program"), py::arg("outcome"), py::arg("tolerance") = kKktTolerance);
}
