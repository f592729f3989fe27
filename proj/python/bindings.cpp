// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lowrank/checkpoint.hpp"
#include "lowrank/compression.hpp"
#include "lowrank/decoding.hpp"
#include "lowrank/error.hpp"
#include "lowrank/eval.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/pipeline.hpp"

namespace py = pybind11;
using namespace lowrank;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return DenseMatrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const DenseMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <typename Model>
void add_common(py::class_<Model>& cls) {
  cls.def_property_readonly("config", [](const Model& m) { return nlohmann::json(m.config()).dump(); })
      .def(
          "forward",
          [](const Model& m, const std::vector<Token>& tokens) { return to_array(m.forward(tokens)); },
          py::arg("tokens"), "Logits, one row per input token.")
      .def(
          "perplexity",
          [](const Model& m, const std::string& text, std::size_t seq_len) { return perplexity(m, text, seq_len); },
          py::arg("text"), py::arg("seq_len") = kEvalSeqLen, py::call_guard<py::gil_scoped_release>())
      .def(
          "generate",
          [](const Model& m, const std::string& prompt, std::size_t n) {
            std::string text;
            {
              py::gil_scoped_release release;
              text = tokenizer::decode(greedy_generate(m, tokenizer::encode(prompt), n));
            }
            PyObject* s = PyUnicode_DecodeUTF8(text.data(), static_cast<py::ssize_t>(text.size()), "replace");
            if (!s) throw py::error_already_set();
            return py::reinterpret_steal<py::str>(s);
          },
          py::arg("prompt"), py::arg("n_tokens"),
          "Greedy continuation of `prompt` (BOS prepended).");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Low-rank compression of a tiny byte-level language model.";

  static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
  static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(validation.ptr(), e.what());
    } catch (const NumericalError& e) {
      PyErr_SetString(numerical.ptr(), e.what());
    }
  });

  m.def(
      "svd",
      [](const Array& a) {
        const linalg::SvdResult s = linalg::svd(to_matrix(a));
        return py::make_tuple(to_array(s.u), to_array(s.singular_values), to_array(s.vt));
      },
      py::arg("a"), "Thin SVD (u, s, vt) with descending singular values.");

  m.def(
      "factorize",
      [](const Array& w, std::size_t rank) {
        const FactorizedProjection f = factorize(to_matrix(w), rank);
        return py::make_tuple(to_array(f.a()), to_array(f.b()), to_array(f.singular_values()));
      },
      py::arg("w"), py::arg("rank"), "Rank-r factors (a, b, sigma) with w ~= a @ b.");

  m.def(
      "proportional_ranks",
      [](const std::vector<double>& alpha, std::size_t budget, std::size_t floor, const std::vector<std::size_t>& caps) {
        return proportional_ranks(alpha, budget, floor, caps);
      },
      py::arg("alpha"), py::arg("budget"), py::arg("floor"), py::arg("caps"));

  m.def(
      "rouge_l",
      [](const std::string& hyp, const std::string& ref) {
        const RougeScore s = rouge_l(hyp, ref);
        return py::dict(py::arg("precision") = s.precision, py::arg("recall") = s.recall, py::arg("f") = s.f);
      },
      py::arg("hypothesis"), py::arg("reference"));

  py::class_<TinyLM> tiny(m, "TinyLM");
  tiny.def_static(
          "initialize",
          [](const std::string& config_json) { return TinyLM::initialize(nlohmann::json::parse(config_json)); },
          py::arg("config_json"))
      .def_static(
          "load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"))
      .def(
          "save", [](const TinyLM& t, const std::string& path) { save_checkpoint(t, path); }, py::arg("path"));
  add_common(tiny);

  py::class_<CompressedLM> comp(m, "CompressedLM");
  comp.def_static(
          "load", [](const std::string& path) { return load_compressed(path); }, py::arg("path"))
      .def_property_readonly("full_ranks", &CompressedLM::full_ranks)
      .def_property_readonly("active_ranks", &CompressedLM::active_ranks)
      .def(
          "set_active_ranks",
          [](CompressedLM& c, const std::vector<std::size_t>& r) { c.set_active_ranks(r); }, py::arg("ranks"))
      .def_property_readonly("active_projection_params", &CompressedLM::active_projection_params);
  add_common(comp);

  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& config_json) {
        const PipelineConfig c = nlohmann::json::parse(config_json).get<PipelineConfig>();
        namespace p = pipeline;
        nlohmann::json out;
        if (stage == "train") out = p::train(c);
        else if (stage == "calibrate") out = p::calibrate(c);
        else if (stage == "allocate") out = p::allocate(c);
        else if (stage == "compress") out = p::compress(c);
        else if (stage == "schedule-search") out = p::schedule_search(c);
        else if (stage == "generate") out = p::generate(c);
        else if (stage == "eval") out = p::eval(c);
        else if (stage == "bench") out = p::bench(c);
        else if (stage == "ablate") out = p::ablate(c);
        else throw ValidationError("unknown stage \"" + stage + "\"");
        return out.dump();
      },
      py::arg("stage"), py::arg("config_json"), py::call_guard<py::gil_scoped_release>());
}
