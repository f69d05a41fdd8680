#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "affssl/eval/probe.hpp"
#include "affssl/exp/runner.hpp"
#include "affssl/geometry/warp.hpp"
#include "affssl/nn/losses.hpp"
#include "affssl/train/engine.hpp"

namespace py = pybind11;
using namespace affssl;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

ImageBatch batch_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 4) throw py::value_error("expected an (n, c, h, w) array");
    ImageBatch b(a.shape(0), a.shape(1), a.shape(2), a.shape(3));
    std::copy(a.data(), a.data() + a.size(), b.data.data());
    return b;
}

AffineMatrix matrix_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 3)
        throw py::value_error("expected a 3x3 matrix");
    AffineMatrix m;
    std::copy(a.data(), a.data() + 9, m.m.begin());
    return m;
}

py::array_t<double> array_from_matrix(const AffineMatrix& m) {
    py::array_t<double> a({3, 3});
    std::copy(m.m.begin(), m.m.end(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_affssl, mod) {
    mod.doc() = "core operations: affine geometry, SSL losses, schedules, experiment running";

    py::register_exception<ConfigError>(mod, "ConfigError");
    py::register_exception<ContractError>(mod, "ContractError");
    py::register_exception<NumericError>(mod, "NumericError");
    py::register_exception<IngestionError>(mod, "IngestionError");

    py::class_<AffineParams>(mod, "AffineParams")
        .def(py::init<>())
        .def_readwrite("theta", &AffineParams::theta)
        .def_readwrite("tx", &AffineParams::tx)
        .def_readwrite("ty", &AffineParams::ty)
        .def_readwrite("sigma", &AffineParams::sigma)
        .def_readwrite("sx", &AffineParams::sx)
        .def_readwrite("sy", &AffineParams::sy)
        .def("as_array", [](const AffineParams& p) {
            py::array_t<double> a(6);
            const auto arr = p.as_array();
            std::copy(arr.begin(), arr.end(), a.mutable_data());
            return a;
        });

    mod.def(
        "build_matrix",
        [](const AffineParams& p, int width, int height) {
            return array_from_matrix(build_matrix(p, width, height));
        },
        py::arg("params"), py::arg("width"), py::arg("height"));
    mod.def(
        "invert",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& m) {
            return array_from_matrix(invert(matrix_from_array(m)));
        },
        py::arg("matrix"));
    mod.def(
        "sample_affine_params",
        [](uint64_t seed) {
            Rng rng = make_rng({seed, stream::kAffine});
            return sample_affine_params(rng, ComponentMask::all(), AffineRanges::paper());
        },
        py::arg("seed"));
    mod.def(
        "warp_image",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& m) {
            return array_from_tensor(warp_image(batch_from_array(img), matrix_from_array(m)).data);
        },
        py::arg("images"), py::arg("matrix"));
    mod.def(
        "max_inscribed_rect",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& m, int width,
           int height) {
            const BoundedCropRect r =
                max_inscribed_rect(footprint_polygon(matrix_from_array(m), width, height));
            return py::make_tuple(r.x0, r.y0, r.x1, r.y1);
        },
        py::arg("matrix"), py::arg("width"), py::arg("height"));

    using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;
    auto as_tuple = [](const nn::LossResult& r) {
        return py::make_tuple(r.value, array_from_tensor(r.g1), array_from_tensor(r.g2));
    };
    mod.def(
        "ntxent_loss",
        [as_tuple](const Arr& z1, const Arr& z2, double temperature) {
            return as_tuple(nn::ntxent_loss(tensor_from_array(z1), tensor_from_array(z2),
                                            temperature));
        },
        py::arg("z1"), py::arg("z2"), py::arg("temperature") = 0.5,
        "returns (loss, grad_z1, grad_z2)");
    mod.def(
        "byol_loss",
        [as_tuple](const Arr& p, const Arr& z_target) {
            return as_tuple(nn::byol_loss(tensor_from_array(p), tensor_from_array(z_target)));
        },
        py::arg("p"), py::arg("z_target"), "returns (loss, grad_p, zero)");
    mod.def(
        "barlow_twins_loss",
        [as_tuple](const Arr& z1, const Arr& z2, double lambda_offdiag) {
            return as_tuple(nn::barlow_twins_loss(tensor_from_array(z1), tensor_from_array(z2),
                                                  lambda_offdiag));
        },
        py::arg("z1"), py::arg("z2"), py::arg("lambda_offdiag") = 5e-3,
        "returns (loss, grad_z1, grad_z2)");

    mod.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("total_steps"), py::arg("base_lr"));
    mod.def("student_t_ci_half_width", &student_t_ci_half_width, py::arg("values"));

    mod.def("load_experiment_config",
            [](const std::string& path) { return canonical_json(load_experiment_config(path)).dump(2); },
            py::arg("path"), "parse + validate, returns the canonical JSON text");
    mod.def(
        "config_hash",
        [](const std::string& path) { return config_hash(load_experiment_config(path)); },
        py::arg("path"));
    mod.def(
        "run_experiment",
        [](const std::string& config_path, bool resume) {
            const ExperimentConfig cfg = load_experiment_config(config_path);
            py::list out;
            for (uint64_t seed : cfg.seeds) {
                GridCell cell;
                cell.config = cfg;
                cell.config.seeds = {seed};
                cell.seed = seed;
                cell.label = variant_label(cfg);
                cell.dir = cfg.output_dir + "/" + cell_dir_name(cell.config, seed);
                const RunOutcome o = run_cell(cell, resume);
                out.append(py::dict(py::arg("dir") = o.dir, py::arg("label") = o.label,
                                    py::arg("seed") = o.seed, py::arg("skipped") = o.skipped,
                                    py::arg("failed") = o.failed, py::arg("error") = o.error));
            }
            return out;
        },
        py::arg("config_path"), py::arg("resume") = false);
    mod.def("render_tables", &render_tables, py::arg("output_dir"));
    mod.def("render_curves", &render_curves, py::arg("output_dir"));
}
