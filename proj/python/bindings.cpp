#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "equivae/commands.hpp"
#include "equivae/idx.hpp"
#include "equivae/logging.hpp"
#include "equivae/objectives.hpp"

namespace py = pybind11;
using namespace equivae;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                         bool requires_grad) {
    Shape shape(a.ndim());
    for (py::ssize_t d = 0; d < a.ndim(); ++d) {
        shape[static_cast<size_t>(d)] = a.shape(d);
    }
    std::vector<double> values(a.data(), a.data() + a.size());
    return Tensor::from_values(shape, std::move(values), requires_grad);
}

py::array_t<double> array_from_values(const Shape& shape, const std::vector<double>& values) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    py::array_t<double> out(dims);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

RunConfig config_from_json_text(const std::string& text) {
    return parse_run_config(nlohmann::json::parse(text));
}

py::dict json_to_dict(const nlohmann::json& j) {
    py::object loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "EquiVAE core: tensors with reverse-mode autodiff, the two-latent "
              "generative model, and the training/evaluation entry points";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<DomainError>(m, "DomainError");
    py::register_exception<ContractError>(m, "ContractError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<NonFiniteError>(m, "NonFiniteError");
    py::register_exception<IoError>(m, "IoError");

    py::class_<Tensor>(m, "Tensor")
        .def(py::init([](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                         bool requires_grad) {
                 return tensor_from_array(a, requires_grad);
             }),
             py::arg("values"), py::arg("requires_grad") = false)
        .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
        .def_property_readonly("requires_grad", &Tensor::requires_grad)
        .def("numpy", [](const Tensor& t) { return array_from_values(t.shape(), t.values()); })
        .def("grad",
             [](const Tensor& t) -> py::object {
                 if (!t.has_grad()) {
                     return py::none();
                 }
                 return array_from_values(t.shape(), t.grad());
             })
        .def("item", &Tensor::item)
        .def("clear_grad", &Tensor::clear_grad);

    m.def("tensor",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             bool requires_grad) { return tensor_from_array(a, requires_grad); },
          py::arg("values"), py::arg("requires_grad") = false);

    m.def("matmul", &equivae::matmul);
    m.def("add", &equivae::add);
    m.def("sub", &equivae::sub);
    m.def("mul", &equivae::mul);
    m.def("div", &equivae::div);
    m.def("exp", &equivae::exp);
    m.def("log", &equivae::log);
    m.def("log_guarded", &log_guarded);
    m.def("relu", &relu);
    m.def("sigmoid", &sigmoid);
    m.def("square", &square);
    m.def("negate", &negate);
    m.def("softmax_rows", &softmax_rows);
    m.def("stop_gradient", &stop_gradient);
    m.def("sum", &reduce_sum, py::arg("a"), py::arg("axes"));
    m.def("mean", &reduce_mean, py::arg("a"), py::arg("axes"));
    m.def("sum_all", &sum_all);
    m.def("conv2d", &conv2d, py::arg("input"), py::arg("kernel"), py::arg("bias"),
          py::arg("stride"));
    m.def("conv2d_transpose", &conv2d_transpose, py::arg("input"), py::arg("kernel"),
          py::arg("bias"), py::arg("stride"), py::arg("out_h") = -1, py::arg("out_w") = -1);
    m.def("backward", &backward);

    m.def(
        "train",
        [](const std::string& config_json) {
            TrainResult result = cmd_train(config_from_json_text(config_json));
            py::dict out;
            out["checkpoint"] = result.checkpoint_path;
            out["metrics"] = result.metrics_path;
            out["config_snapshot"] = result.snapshot_path;
            out["epochs"] = result.records.size();
            if (!result.records.empty()) {
                const auto& last = result.records.back();
                out["final_elbo_per_example"] = last.means.total;
                out["final_kl_v_per_example"] = last.means.kl_v;
                if (last.validation_accuracy) {
                    out["final_validation_accuracy"] = *last.validation_accuracy;
                }
            }
            return out;
        },
        py::arg("config_json"), "Run a full training job from a run-config JSON string.");

    m.def(
        "evaluate",
        [](const std::string& config_json, const std::string& checkpoint,
           const std::string& report_path) {
            return json_to_dict(
                cmd_eval(config_from_json_text(config_json), checkpoint, report_path));
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("report_path") = "");

    m.def(
        "generate",
        [](const std::string& config_json, const std::string& checkpoint,
           const std::string& probe, const std::string& out_dir) {
            return cmd_generate(config_from_json_text(config_json), checkpoint, probe, out_dir);
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("probe"), py::arg("out_dir"));

    m.def(
        "embed",
        [](const std::string& config_json, const std::string& checkpoint,
           const std::string& split, const std::string& out_path) {
            return cmd_embed(config_from_json_text(config_json), checkpoint, split, out_path);
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("split"), py::arg("out_path"));

    m.def(
        "load_idx",
        [](const std::string& images_path, const std::string& labels_path) {
            const IdxImages imgs = parse_idx_images(read_maybe_gzip(images_path));
            const auto labels = parse_idx_labels(read_maybe_gzip(labels_path));
            if (static_cast<int64_t>(labels.size()) != imgs.count) {
                throw CountMismatchError("image/label count mismatch");
            }
            py::array_t<double> images({imgs.count, imgs.rows, imgs.cols});
            double* out = images.mutable_data();
            for (size_t i = 0; i < imgs.pixels.size(); ++i) {
                out[i] = static_cast<double>(imgs.pixels[i]) / 255.0;
            }
            py::array_t<int64_t> y(static_cast<py::ssize_t>(labels.size()));
            for (size_t i = 0; i < labels.size(); ++i) {
                y.mutable_data()[i] = labels[i];
            }
            return py::make_tuple(images, y);
        },
        py::arg("images_path"), py::arg("labels_path"),
        "IDX pair -> (images [N,H,W] scaled to [0,1], labels [N]).");

    m.def("set_debug_checks", &set_debug_checks);
    m.attr("__version__") = "0.1.0";
}
