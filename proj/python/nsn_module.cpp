#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nsn/analysis.hpp"
#include "nsn/model.hpp"
#include "nsn/surgery.hpp"

namespace py = pybind11;

namespace {

nsn::Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw nsn::DimensionError("expected a 2-D array");
  nsn::Matrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
  std::copy(arr.data(), arr.data() + arr.size(), m.data().begin());
  return m;
}

py::array_t<double> to_array(const nsn::Matrix& m) {
  py::array_t<double> arr({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), arr.mutable_data());
  return arr;
}

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Nested subspace network core operations";

  mod.def(
      "svd",
      [](const Array& m) {
        nsn::SvdResult r = nsn::svd(to_matrix(m));
        return py::make_tuple(to_array(r.U), r.singular_values, to_array(r.Vt));
      },
      py::arg("m"), "Thin SVD (U, singular_values, Vt) with deterministic signs.");

  mod.def(
      "nsn_forward",
      [](const Array& a, const Array& b, const std::vector<double>& bias, const Array& x,
         std::size_t rank) {
        nsn::Layer layer{nsn::NsnLayer{to_matrix(a), to_matrix(b), bias,
                                       static_cast<std::size_t>(to_matrix(a).rows())},
                         nsn::Activation::kIdentity};
        nsn::Model model{{layer}};
        nsn::validate_model(model);
        return to_array(nsn::forward(model, to_matrix(x), nsn::RankSpec::at(rank)));
      },
      py::arg("a"), py::arg("b"), py::arg("bias"), py::arg("x"), py::arg("rank"),
      "Batched single-layer forward pass at the given rank (x is batch x d_in).");

  mod.def(
      "effective_weight",
      [](const Array& a, const Array& b, std::size_t rank) {
        nsn::NsnLayer layer{to_matrix(a), to_matrix(b), std::vector<double>(to_matrix(b).rows(), 0.0),
                            static_cast<std::size_t>(to_matrix(a).rows())};
        return to_array(nsn::effective_weight(layer, nsn::RankSpec::at(rank)));
      },
      py::arg("a"), py::arg("b"), py::arg("rank"), "W_r = B_r A_r.");

  mod.def(
      "svd_init",
      [](const Array& w, std::size_t rank) {
        nsn::SvdInitResult r = nsn::svd_init(to_matrix(w), rank);
        return py::make_tuple(to_array(r.A), to_array(r.B), r.singular_values);
      },
      py::arg("w"), py::arg("rank"),
      "Factor W into (A, B, singular_values) with B = U sqrt(S), A = sqrt(S) V^T.");

  mod.def(
      "containment_score",
      [](const Array& w_small, const Array& w_large, std::size_t r_small, std::size_t r_large) {
        return nsn::containment_score(to_matrix(w_small), to_matrix(w_large), r_small, r_large);
      },
      py::arg("w_small"), py::arg("w_large"), py::arg("r_small"), py::arg("r_large"),
      "Subspace containment of the rank-r_small basis inside the rank-r_large basis.");

  mod.def("flops_factored", &nsn::flops_factored, py::arg("d_in"), py::arg("d_out"), py::arg("rank"),
          "2 r (d_in + d_out)");
  mod.def("flops_dense", &nsn::flops_dense, py::arg("d_in"), py::arg("d_out"), "2 d_in d_out");
  mod.def("break_even_rank", &nsn::break_even_rank, py::arg("d_in"), py::arg("d_out"),
          "floor(d_in d_out / (d_in + d_out))");
}
