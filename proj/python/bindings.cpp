// Python bindings for the fusion toolkit. Images cross the boundary as
// float32 numpy arrays shaped [C,H,W]; the heavy lifting stays in C++.

#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fusionnet/image_io.hpp"
#include "fusionnet/synthgen.hpp"
#include "fusionnet/trainer.hpp"

namespace py = pybind11;
using namespace fusionnet;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    Shape shape(arr.ndim());
    for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[static_cast<size_t>(d)] = arr.shape(d);
    std::vector<float> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy_n(t.data(), t.numel(), out.mutable_data());
    return out;
}

AnnotationSet boxes_from_list(const std::vector<BoundingBox>& boxes) {
    AnnotationSet set;
    set.boxes = boxes;
    return set;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Infrared/visible image fusion: model, losses, metrics, trainer";

    py::register_exception<shape_error>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<contract_error>(m, "ContractError", PyExc_ValueError);
    py::register_exception<numeric_error>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<io_error>(m, "IoError", PyExc_IOError);
    py::register_exception<format_error>(m, "FormatError", PyExc_ValueError);
    py::register_exception<parse_error>(m, "AnnotationParseError", PyExc_ValueError);
    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);

    py::class_<BoundingBox>(m, "BoundingBox")
        .def(py::init([](int64_t xmin, int64_t ymin, int64_t xmax, int64_t ymax,
                         const std::string& label) {
                 return BoundingBox{xmin, ymin, xmax, ymax, label};
             }),
             py::arg("xmin"), py::arg("ymin"), py::arg("xmax"), py::arg("ymax"),
             py::arg("label") = "")
        .def_readwrite("xmin", &BoundingBox::xmin)
        .def_readwrite("ymin", &BoundingBox::ymin)
        .def_readwrite("xmax", &BoundingBox::xmax)
        .def_readwrite("ymax", &BoundingBox::ymax)
        .def_readwrite("label", &BoundingBox::label)
        .def("__repr__", [](const BoundingBox& b) {
            return "BoundingBox(" + std::to_string(b.xmin) + ", " + std::to_string(b.ymin) + ", " +
                   std::to_string(b.xmax) + ", " + std::to_string(b.ymax) + ", '" + b.label + "')";
        });

    py::class_<AnnotationSet>(m, "AnnotationSet")
        .def(py::init<>())
        .def_readwrite("id", &AnnotationSet::id)
        .def_readwrite("boxes", &AnnotationSet::boxes)
        .def_readonly("skipped", &AnnotationSet::skipped);

    py::class_<LossWeights>(m, "LossWeights")
        .def(py::init<>())
        .def(py::init([](double l1, double l2, double l3) {
                 return LossWeights{l1, l2, l3};
             }),
             py::arg("lambda1"), py::arg("lambda2"), py::arg("lambda3"))
        .def_readwrite("lambda1", &LossWeights::lambda1)
        .def_readwrite("lambda2", &LossWeights::lambda2)
        .def_readwrite("lambda3", &LossWeights::lambda3);

    py::class_<LossBreakdown>(m, "LossBreakdown")
        .def_readonly("mse", &LossBreakdown::mse)
        .def_readonly("grad", &LossBreakdown::grad)
        .def_readonly("entropy", &LossBreakdown::entropy)
        .def_readonly("roi", &LossBreakdown::roi)
        .def_readonly("total", &LossBreakdown::total)
        .def("__repr__", [](const LossBreakdown& b) {
            return "LossBreakdown(mse=" + std::to_string(b.mse) + ", grad=" + std::to_string(b.grad) +
                   ", entropy=" + std::to_string(b.entropy) + ", roi=" + std::to_string(b.roi) +
                   ", total=" + std::to_string(b.total) + ")";
        });

    py::class_<FusionNetParams>(m, "FusionNetParams")
        .def_property_readonly("channels", [](const FusionNetParams& p) { return p.channels; })
        .def("parameter_count", &FusionNetParams::parameter_count)
        .def("tensors", [](FusionNetParams& p) {
            py::dict out;
            for (auto& [name, tensor] : p.named_tensors())
                out[py::str(name)] = array_from_tensor(*tensor);
            return out;
        });

    m.def(
        "init_params",
        [](uint64_t seed, const std::string& scheme, int64_t channels) {
            const InitScheme s = scheme == "zeros" ? InitScheme::zeros : InitScheme::he_xavier;
            return init_params<float>(seed, s, channels);
        },
        py::arg("seed"), py::arg("scheme") = "he_xavier", py::arg("channels") = 64);

    m.def(
        "forward",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& ir,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& vis,
           const FusionNetParams& params) {
            const Tensor ir_t = tensor_from_array(ir);
            const Tensor vis_t = tensor_from_array(vis);
            const Tensor vis_y = rgb_to_luminance(vis_t);
            auto artifacts = forward(ir_t, vis_t, vis_y, params);
            py::dict out;
            out["f_ir"] = array_from_tensor(artifacts.f_ir);
            out["f_vis"] = array_from_tensor(artifacts.f_vis);
            out["attention"] = array_from_tensor(artifacts.attn_mask);
            out["f_attn"] = array_from_tensor(artifacts.f_attn);
            out["alpha"] = array_from_tensor(artifacts.alpha);
            out["fused"] = array_from_tensor(artifacts.fused);
            return out;
        },
        py::arg("ir"), py::arg("vis"), py::arg("params"),
        "Run the fusion forward pass; ir is [1,H,W], vis is [3,H,W], both in [0,1].");

    m.def(
        "loss_total",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& fused,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& ir,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& vis_y,
           const std::vector<BoundingBox>& boxes, const LossWeights& weights,
           const std::string& grad_target, int64_t entropy_bins) {
            return loss_total(tensor_from_array(fused), tensor_from_array(ir),
                              tensor_from_array(vis_y), boxes_from_list(boxes), weights,
                              grad_target_from_string(grad_target), entropy_bins);
        },
        py::arg("fused"), py::arg("ir"), py::arg("vis_y"),
        py::arg("boxes") = std::vector<BoundingBox>{}, py::arg("weights") = LossWeights{},
        py::arg("grad_target") = "max", py::arg("entropy_bins") = kDefaultEntropyBins);

    m.def("ssim", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
                     const py::array_t<float, py::array::c_style | py::array::forcecast>& y) {
        return ssim(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("mse", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
                    const py::array_t<float, py::array::c_style | py::array::forcecast>& y) {
        return mse_metric(tensor_from_array(x), tensor_from_array(y));
    });
    m.def("entropy", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
        return entropy_metric(tensor_from_array(x));
    });
    m.def(
        "roi_ssim",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& fused,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& ir,
           const std::vector<BoundingBox>& boxes) -> std::optional<double> {
            return roi_ssim(tensor_from_array(fused), tensor_from_array(ir), boxes_from_list(boxes))
                .value;
        },
        py::arg("fused"), py::arg("ir"), py::arg("boxes"),
        "Mean SSIM over boxes at least 11x11; None when no box qualifies.");

    m.def("load_image", [](const std::filesystem::path& path) {
        return array_from_tensor(load_image(path));
    });
    m.def("save_image",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img,
             const std::filesystem::path& path) { save_image(tensor_from_array(img), path); });
    m.def("rgb_to_luminance",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& vis) {
              return array_from_tensor(rgb_to_luminance(tensor_from_array(vis)));
          });
    m.def("resize_bilinear",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img, int64_t h,
             int64_t w) { return array_from_tensor(resize_bilinear(tensor_from_array(img), h, w)); });
    m.def("parse_annotations", &parse_annotations, py::arg("xml_text"));

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("seed", &SynthSpec::seed)
        .def_readwrite("height", &SynthSpec::height)
        .def_readwrite("width", &SynthSpec::width)
        .def_readwrite("n_targets", &SynthSpec::n_targets)
        .def_readwrite("radius_min", &SynthSpec::radius_min)
        .def_readwrite("radius_max", &SynthSpec::radius_max)
        .def_readwrite("texture_freq", &SynthSpec::texture_freq)
        .def_readwrite("noise_amp", &SynthSpec::noise_amp);

    m.def(
        "gen_pair",
        [](const SynthSpec& spec) {
            SynthPair pair = gen_pair(spec);
            py::dict out;
            out["ir"] = array_from_tensor(pair.pair.ir);
            out["vis"] = array_from_tensor(pair.pair.vis);
            out["vis_y"] = array_from_tensor(pair.pair.vis_y);
            out["boxes"] = pair.annotations.boxes;
            return out;
        },
        py::arg("spec"));
    m.def(
        "write_dataset",
        [](const SynthSpec& spec, const std::filesystem::path& root, int64_t count) {
            return write_dataset(spec, root, count).ids;
        },
        py::arg("spec"), py::arg("root"), py::arg("count"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("batch", &TrainConfig::batch)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("channels", &TrainConfig::channels)
        .def_readwrite("lambda1", &TrainConfig::lambda1)
        .def_readwrite("lambda2", &TrainConfig::lambda2)
        .def_readwrite("lambda3", &TrainConfig::lambda3)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("height", &TrainConfig::height)
        .def_readwrite("width", &TrainConfig::width)
        .def_readwrite("entropy_bins", &TrainConfig::entropy_bins)
        .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
        .def_readwrite("out_dir", &TrainConfig::out_dir)
        .def_property(
            "grad_target", [](const TrainConfig& c) { return to_string(c.grad_target); },
            [](TrainConfig& c, const std::string& s) { c.grad_target = grad_target_from_string(s); });

    m.def(
        "train",
        [](const TrainConfig& config, const std::filesystem::path& data_root) {
            DatasetManifest manifest = build_manifest(data_root);
            TrainResult result = train(config, manifest);
            py::list log;
            for (const auto& row : result.log) {
                py::dict item;
                item["step"] = row.step;
                item["epoch"] = row.epoch;
                item["id"] = row.id;
                item["loss"] = row.loss;
                log.append(item);
            }
            py::dict out;
            out["log"] = log;
            out["steps"] = result.checkpoint.step;
            out["parameter_count"] = result.checkpoint.params.parameter_count();
            return out;
        },
        py::arg("config"), py::arg("data_root"),
        "Train on root/{ir,vis,ann}; writes checkpoints and the loss CSV to config.out_dir.");

    m.def(
        "evaluate",
        [](const std::filesystem::path& ckpt_path, const std::filesystem::path& data_root) {
            Checkpoint ckpt = load_checkpoint(ckpt_path);
            MetricReport report = evaluate(ckpt, build_manifest(data_root));
            py::list rows;
            for (const auto& row : report.rows) {
                py::dict item;
                item["id"] = row.id;
                item["ssim"] = row.ssim;
                item["mse"] = row.mse;
                item["entropy"] = row.entropy;
                item["roi_ssim"] = row.roi_ssim ? py::cast(*row.roi_ssim) : py::none();
                rows.append(item);
            }
            py::dict out;
            out["rows"] = rows;
            out["mean_ssim"] = report.mean_ssim;
            out["mean_mse"] = report.mean_mse;
            out["mean_entropy"] = report.mean_entropy;
            out["mean_roi_ssim"] =
                report.mean_roi_ssim ? py::cast(*report.mean_roi_ssim) : py::none();
            return out;
        },
        py::arg("checkpoint"), py::arg("data_root"));

    m.def(
        "fuse_file",
        [](const std::filesystem::path& ckpt_path, const std::filesystem::path& ir,
           const std::filesystem::path& vis) {
            Checkpoint ckpt = load_checkpoint(ckpt_path);
            Tensor ir_t = load_image(ir);
            if (ir_t.extent(0) == 3) ir_t = rgb_to_luminance(ir_t);
            Tensor vis_t = load_image(vis);
            if (vis_t.extent(0) == 1) {
                Tensor rgb({3, vis_t.extent(1), vis_t.extent(2)});
                for (int64_t c = 0; c < 3; ++c)
                    std::copy_n(vis_t.data(), vis_t.numel(), rgb.data() + c * vis_t.numel());
                vis_t = std::move(rgb);
            }
            auto artifacts = forward(ir_t, vis_t, rgb_to_luminance(vis_t), ckpt.params);
            py::dict out;
            out["fused"] = array_from_tensor(artifacts.fused);
            out["alpha"] = array_from_tensor(artifacts.alpha);
            return out;
        },
        py::arg("checkpoint"), py::arg("ir"), py::arg("vis"),
        "Fuse one IR/VIS image pair from disk with a trained checkpoint.");
}
