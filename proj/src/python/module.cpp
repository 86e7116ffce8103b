#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sharekd/config.hpp"
#include "sharekd/distill.hpp"
#include "sharekd/numkit/ops.hpp"
#include "sharekd/pipeline.hpp"
#include "sharekd/ptp.hpp"
#include "sharekd/report.hpp"
#include "sharekd/sps.hpp"

namespace py = pybind11;
using namespace sharekd;

namespace {

using Matrix = std::vector<std::vector<double>>;

nk::Tensor to_tensor(const Matrix& rows) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("expected a non-empty matrix");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows[0].size()) throw std::invalid_argument("ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return nk::Tensor::matrix(rows.size(), rows[0].size(), std::move(flat));
}

Matrix to_rows(const nk::Tensor& t) {
  const std::size_t cols = t.shape()[1];
  Matrix out(t.shape()[0], std::vector<double>(cols));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i][j] = t.data()[i * cols + j];
  return out;
}

ForwardOutput as_output(const Matrix& logits, const std::vector<Matrix>& hidden) {
  ForwardOutput out;
  out.logits = to_tensor(logits);
  for (const auto& h : hidden) out.hidden_states.push_back(to_tensor(h));
  return out;
}

}  // namespace

PYBIND11_MODULE(_sharekd, m) {
  m.doc() = "Bindings for the sharekd distillation toolkit.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("softmax", [](const Matrix& z) {
    nk::Tape tape(false);
    return to_rows(nk::softmax_rows(tape, to_tensor(z)));
  });
  m.def("temperature_softmax", [](const Matrix& z, double temperature) {
    nk::Tape tape(false);
    return to_rows(temperature_softmax(tape, to_tensor(z), temperature));
  }, py::arg("z"), py::arg("temperature"));

  m.def(
      "kd_loss",
      [](const Matrix& student_logits, const Matrix& teacher_logits, const std::vector<std::size_t>& labels,
         double alpha, double beta, double temperature, const std::vector<Matrix>& student_hidden,
         const std::vector<Matrix>& teacher_hidden) {
        KDConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.temperature = temperature;
        std::vector<LayerPair> pairs;
        for (std::size_t i = 0; i < student_hidden.size(); ++i) pairs.push_back({i + 1, i + 1});
        nk::Tape tape(false);
        const auto r = kd_loss(tape, as_output(student_logits, student_hidden),
                               as_output(teacher_logits, teacher_hidden), labels, cfg, pairs);
        return py::dict(py::arg("total") = r.terms.total, py::arg("ce") = r.terms.ce,
                        py::arg("kl") = r.terms.kl, py::arg("mse") = r.terms.mse);
      },
      py::arg("student_logits"), py::arg("teacher_logits"), py::arg("labels"), py::arg("alpha") = 0.5,
      py::arg("beta") = 0.0, py::arg("temperature") = 2.0, py::arg("student_hidden") = std::vector<Matrix>{},
      py::arg("teacher_hidden") = std::vector<Matrix>{});

  m.def(
      "assign_ptp_label",
      [](bool correct, double confidence, double t, const std::string& scheme) {
        const auto s = parse_ptp_scheme(scheme);
        return std::string(ptp_label_name(s, assign_ptp_label(correct, confidence, t, s)));
      },
      py::arg("correct"), py::arg("confidence"), py::arg("t"), py::arg("scheme") = "Full4");

  m.def(
      "sharing_plan",
      [](std::size_t n, const std::string& mode) {
        std::vector<std::pair<std::size_t, std::string>> out;
        const SharingPlan plan = build_sharing_plan(n, parse_sharing_mode(mode));
        for (const auto& e : plan.entries())
          out.emplace_back(e.param_set, std::string(to_string(e.role)));
        return out;
      },
      py::arg("n"), py::arg("mode"));

  m.def(
      "count_parameters",
      [](std::size_t n, const std::string& mode, std::size_t hidden_dim, std::size_t num_heads,
         std::size_t ff_dim) {
        const auto plan = build_sharing_plan(n, parse_sharing_mode(mode));
        EncoderConfig cfg{.vocab_size = 4, .max_seq_len = 2, .hidden_dim = hidden_dim,
                          .num_heads = num_heads, .ff_dim = ff_dim,
                          .num_physical_layers = plan.size(), .num_classes = 2};
        return count_parameters(init_model(cfg, plan, 0, 0.02).store, false);
      },
      py::arg("n"), py::arg("mode"), py::arg("hidden_dim"), py::arg("num_heads"), py::arg("ff_dim"));

  m.def("normalize_config", [](const std::string& text) {
    const RunConfig cfg = parse_run_config(text);
    cfg.validate();
    return serialize_run_config(cfg);
  });
  m.def("run_pipeline", [](const std::string& config_text) {
    const RunConfig cfg = parse_run_config(config_text);
    py::gil_scoped_release release;
    run_pipeline(cfg);
  });
  m.def(
      "report",
      [](const std::vector<std::filesystem::path>& dirs, bool as_json) {
        const auto table = report(dirs);
        return as_json ? render_json(table) : render_markdown(table);
      },
      py::arg("run_dirs"), py::arg("as_json") = false);
}
