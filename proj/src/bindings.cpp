#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pan/analysis.hpp"
#include "pan/image.hpp"
#include "pan/train.hpp"

namespace py = pybind11;
using namespace pan;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorPtr tensor_from_chw(const Array& arr) {
    if (arr.ndim() != 3) throw ShapeError("expected a (c, h, w) float array");
    auto t = make_tensor<float>({1, int(arr.shape(0)), int(arr.shape(1)), int(arr.shape(2))});
    std::copy_n(arr.data(), t->data.size(), t->data.begin());
    return t;
}

py::array_t<float> chw_from_tensor(const Tensor& t) {
    py::array_t<float> out({t.shape.c, t.shape.h, t.shape.w});
    std::copy_n(t.data.data(), t.data.size(), out.mutable_data());
    return out;
}

ImageBuffer y_image_from(const Array& arr) {
    if (arr.ndim() != 2) throw ShapeError("expected a (h, w) float array");
    ImageBuffer img = ImageBuffer::make_f32(int(arr.shape(1)), int(arr.shape(0)), ColorSpace::Y);
    std::copy_n(arr.data(), img.f32.size(), img.f32.begin());
    return img;
}

ImageBuffer rgb_image_from(const Array& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3) throw ShapeError("expected a (h, w, 3) float array");
    ImageBuffer img = ImageBuffer::make_f32(int(arr.shape(1)), int(arr.shape(0)), ColorSpace::RGB);
    std::copy_n(arr.data(), img.f32.size(), img.f32.begin());
    return img;
}

py::array_t<float> hwc_from_image(const ImageBuffer& img) {
    const ImageBuffer f = to_f32(img);
    py::array_t<float> out({f.height, f.width, f.channels()});
    std::copy_n(f.f32.data(), f.f32.size(), out.mutable_data());
    return out;
}

class Model {
  public:
    Model(int scale, const std::string& block_type, int num_blocks, int nf, int unf,
          bool pa_in_scpa, bool pa_in_upa, std::uint64_t seed) {
        ModelConfig cfg;
        cfg.scale = scale;
        cfg.block_type = block_type_from_string(block_type);
        cfg.num_blocks = num_blocks >= 0 ? num_blocks
                                         : (cfg.block_type == BlockType::SCPA ? 16 : 8);
        cfg.nf = nf;
        cfg.unf = unf;
        cfg.pa_in_scpa = pa_in_scpa;
        cfg.pa_in_upa = pa_in_upa;
        model_ = build_pan<float>(cfg, seed);
    }

    std::int64_t param_count() const { return model_.param_count(); }

    std::int64_t mult_adds(int hr_w, int hr_h) const {
        return count_mult_adds(model_.structure(), hr_w, hr_h);
    }

    std::string summary() const { return model_summary(model_.structure()); }

    py::array_t<float> forward(const Array& chw) {
        Tape tape;
        tape.set_recording(false);
        return chw_from_tensor(*model_.forward(tape, tensor_from_chw(chw)));
    }

    py::array_t<float> get_param(const std::string& name) const {
        const auto& p = model_.param(name);
        py::array_t<float> out({p.weight->shape.n, p.weight->shape.c, p.weight->shape.h,
                                p.weight->shape.w});
        std::copy_n(p.weight->data.data(), p.weight->data.size(), out.mutable_data());
        return out;
    }

    void zero_layer(const std::string& name) { model_.zero_layer(name); }

    std::vector<std::string> layer_names() const {
        std::vector<std::string> names;
        for (const auto& p : model_.params()) names.push_back(p.name);
        return names;
    }

    void save(const std::string& path) const {
        auto adam = AdamState::zeros_like(model_);
        TrainConfig tc;
        save_checkpoint(path,
                        snapshot(model_, adam, 0, "", config_echo_text(model_.config(), tc)));
    }

    static Model load(const std::string& path) {
        const Checkpoint ck = load_checkpoint(path);
        ModelConfig mc;
        TrainConfig tc;
        parse_config_echo(ck.config_echo, mc, tc);
        Model m(mc.scale, to_string(mc.block_type), mc.num_blocks, mc.nf, mc.unf, mc.pa_in_scpa,
                mc.pa_in_upa, 0);
        auto adam = AdamState::zeros_like(m.model_);
        restore(ck, m.model_, adam);
        return m;
    }

  private:
    PanModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pixel-attention super-resolution: model zoo, cost accounting and Y-channel metrics";

    py::register_exception<ShapeError>(m, "PanShapeError", PyExc_ValueError);
    py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_ValueError);
    py::register_exception<DataError>(m, "PanDataError", PyExc_IOError);

    py::class_<Model>(m, "Model")
        .def(py::init<int, const std::string&, int, int, int, bool, bool, std::uint64_t>(),
             py::arg("scale") = 4, py::arg("block_type") = "scpa", py::arg("num_blocks") = -1,
             py::arg("nf") = 40, py::arg("unf") = 24, py::arg("pa_in_scpa") = true,
             py::arg("pa_in_upa") = true, py::arg("seed") = 0)
        .def("param_count", &Model::param_count)
        .def("mult_adds", &Model::mult_adds, py::arg("hr_w"), py::arg("hr_h"))
        .def("summary", &Model::summary)
        .def("forward", &Model::forward, py::arg("chw"),
             "Super-resolve a (3, h, w) float32 array in [0, 1]")
        .def("get_param", &Model::get_param, py::arg("name"))
        .def("zero_layer", &Model::zero_layer, py::arg("name"))
        .def("layer_names", &Model::layer_names)
        .def("save", &Model::save, py::arg("path"))
        .def_static("load", &Model::load, py::arg("path"));

    m.def(
        "psnr",
        [](const Array& a, const Array& b, int shave) {
            return psnr(y_image_from(a), y_image_from(b), shave);
        },
        py::arg("a"), py::arg("b"), py::arg("shave") = 0,
        "PSNR in dB between two (h, w) unit-range arrays");
    m.def(
        "ssim",
        [](const Array& a, const Array& b, int shave) {
            return ssim(y_image_from(a), y_image_from(b), shave);
        },
        py::arg("a"), py::arg("b"), py::arg("shave") = 0);
    m.def(
        "rgb_to_y",
        [](const Array& rgb) {
            const ImageBuffer y = rgb_to_y(rgb_image_from(rgb));
            py::array_t<float> out({y.height, y.width});
            std::copy_n(y.f32.data(), y.f32.size(), out.mutable_data());
            return out;
        },
        py::arg("rgb"), "BT.601 studio-swing luma of a (h, w, 3) unit-range array");
    m.def(
        "bicubic_resize",
        [](const Array& hwc, int num, int den, bool antialias) {
            return hwc_from_image(bicubic_resize(rgb_image_from(hwc), num, den, antialias));
        },
        py::arg("hwc"), py::arg("num"), py::arg("den"), py::arg("antialias") = true);
    m.def(
        "resize_bilinear",
        [](const Array& chw, int factor) {
            Tape tape;
            tape.set_recording(false);
            return chw_from_tensor(*resize_bilinear<float>(tape, tensor_from_chw(chw), factor));
        },
        py::arg("chw"), py::arg("factor"));
    m.def(
        "cosine_lr",
        [](std::int64_t iter, double max_lr, double min_lr, std::int64_t period) {
            TrainConfig cfg;
            cfg.max_lr = max_lr;
            cfg.min_lr = min_lr;
            cfg.cosine_period = period;
            return cosine_lr(iter, cfg);
        },
        py::arg("iter"), py::arg("max_lr") = 1e-3, py::arg("min_lr") = 1e-7,
        py::arg("period") = 250000);
}
