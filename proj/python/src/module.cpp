// Python bindings for the core operations: trees, the DDT prior, simulation,
// fitting and posterior summaries.
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "treelcm/chain_io.hpp"
#include "treelcm/ddt_prior.hpp"
#include "treelcm/error.hpp"
#include "treelcm/lcm_model.hpp"
#include "treelcm/posterior_summary.hpp"
#include "treelcm/sampler.hpp"
#include "treelcm/tree.hpp"

namespace py = pybind11;
using namespace treelcm;

namespace {

using Responses = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ResponseMatrix to_responses(const Responses& array) {
  if (array.ndim() != 2) throw Error("dimension_mismatch", "responses must be a 2-D array");
  const auto* data = array.data();
  std::vector<std::uint8_t> values(data, data + array.size());
  return ResponseMatrix(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)), std::move(values));
}

Responses from_responses(const ResponseMatrix& m) {
  Responses out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

ItemGrouping grouping_or_single(std::optional<std::vector<int>> groups, int items) {
  return ItemGrouping(groups ? *groups : std::vector<int>(items, 0));
}

py::dict snapshot_dict(const Snapshot& s) {
  py::dict d;
  d["iteration"] = s.iteration;
  d["tree"] = s.tree;
  d["theta"] = s.theta;
  d["pi"] = s.pi;
  d["sigma2"] = s.sigma2;
  d["c"] = s.c;
  d["z"] = s.z;
  d["log_posterior"] = s.log_posterior;
  d["topology_accepted"] = s.topology_accepted;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tree-structured latent class models with a Dirichlet diffusion tree prior";

  // Library errors surface as TreelcmError (a ValueError) with "[code] message".
  static PyObject* error = PyErr_NewException("treelcm._core.TreelcmError", PyExc_ValueError, nullptr);
  m.add_object("TreelcmError", py::handle(error));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error, ("[" + e.code() + "] " + e.what()).c_str());
    }
  });

  py::class_<DdtTree>(m, "Tree")
      .def_static("parse", [](const std::string& text) { return parse_newick(text); }, py::arg("newick"))
      .def("to_newick", [](const DdtTree& t) { return to_newick(t); })
      .def_property_readonly("leaf_count", &DdtTree::leaf_count)
      .def_property_readonly("size", &DdtTree::size)
      .def("shared_length",
           [](const DdtTree& t, const std::string& a, const std::string& b) { return path_shared_length(t, a, b); },
           py::arg("leaf_a"), py::arg("leaf_b"))
      .def("approx_equal", [](const DdtTree& a, const DdtTree& b, double tol) { return approx_equal(a, b, tol); },
           py::arg("other"), py::arg("tol") = 1e-9)
      .def("__eq__", [](const DdtTree& a, const DdtTree& b) { return a == b; })
      .def("__repr__", [](const DdtTree& t) { return "Tree('" + to_newick(t) + "')"; });

  m.def(
      "sample_ddt_tree",
      [](int leaves, double c, std::uint64_t seed) { return sample_ddt_tree(leaves, DivergenceFunction(c), seed); },
      py::arg("leaves"), py::arg("c"), py::arg("seed"), "Draw a tree from the DDT prior with a(t) = c / (1 - t).");
  m.def(
      "log_tree_density", [](const DdtTree& t, double c) { return log_tree_density(t, DivergenceFunction(c)); },
      py::arg("tree"), py::arg("c"));

  m.def(
      "simulate",
      [](const DdtTree& tree, int rows, const Eigen::VectorXd& pi, const Eigen::VectorXd& sigma2,
         std::optional<std::vector<int>> groups, std::optional<Eigen::VectorXd> root_location, int items,
         std::uint64_t seed_parameter, std::uint64_t seed_response) {
        const ItemGrouping grouping = grouping_or_single(groups, items);
        const Eigen::VectorXd root = root_location ? *root_location : Eigen::VectorXd::Zero(grouping.item_count());
        const auto sim =
            simulate_lcm_given_tree(tree, rows, pi, grouping, sigma2, root, seed_parameter, seed_response);
        py::dict d;
        d["responses"] = from_responses(sim.responses);
        d["memberships"] = sim.memberships;
        d["theta"] = sim.theta;
        d["pi"] = sim.pi;
        d["leaf_locations"] = leaf_locations(sim.tree, sim.locations);
        return d;
      },
      py::arg("tree"), py::arg("rows"), py::arg("pi"), py::arg("sigma2"), py::arg("groups") = py::none(),
      py::arg("root_location") = py::none(), py::arg("items") = 0, py::arg("seed_parameter") = 1,
      py::arg("seed_response") = 2,
      "Simulate responses given a tree. Without `groups`, `items` items share one variance group.");

  py::class_<PosteriorChain>(m, "Chain")
      .def_property_readonly("snapshots",
                             [](const PosteriorChain& c) {
                               py::list out;
                               for (const auto& s : c.snapshots) out.append(snapshot_dict(s));
                               return out;
                             })
      .def("__len__", [](const PosteriorChain& c) { return c.snapshots.size(); })
      .def("save", [](const PosteriorChain& c, const std::string& dir) { write_chain(dir, c); }, py::arg("directory"))
      .def_static("load", [](const std::string& dir) { return read_chain(dir); }, py::arg("directory"));

  m.def(
      "fit",
      [](const Responses& responses, int K, std::optional<std::vector<int>> groups, int iterations,
         std::uint64_t seed, bool fix_c, int topology_moves) {
        const ResponseMatrix data = to_responses(responses);
        const ItemGrouping grouping = grouping_or_single(groups, data.cols());
        SamplerConfig config;
        config.K = K;
        config.total_iters = iterations;
        config.seed = seed;
        config.fix_c = fix_c;
        config.topology_moves = topology_moves;
        py::gil_scoped_release release;
        return ddtlcm_fit(data, grouping, config);
      },
      py::arg("responses"), py::arg("K"), py::arg("groups") = py::none(), py::arg("iterations") = 100,
      py::arg("seed") = 1, py::arg("fix_c") = false, py::arg("topology_moves") = 1,
      "Run the MCMC sampler and return every iteration's snapshot.");

  m.def(
      "summarize_json",
      [](const PosteriorChain& chain, int burnin, bool relabel, double level) {
        SummaryConfig config;
        config.burnin = burnin;
        config.relabel = relabel;
        config.level = level;
        return summary_to_json(summarize(chain, config)).dump();
      },
      py::arg("chain"), py::arg("burnin") = 0, py::arg("relabel") = true, py::arg("level") = 0.95);
  m.def(
      "format_summary",
      [](const PosteriorChain& chain, int burnin, bool relabel, double level) {
        SummaryConfig config;
        config.burnin = burnin;
        config.relabel = relabel;
        config.level = level;
        return format_summary(summarize(chain, config));
      },
      py::arg("chain"), py::arg("burnin") = 0, py::arg("relabel") = true, py::arg("level") = 0.95);
}
