#include "pan/image.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "pan/io_util.hpp"

namespace pan {

namespace {

void check_same_geometry(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
    check_shape(a.width == b.width && a.height == b.height && a.channels() == b.channels(),
                std::string(op) + ": image geometry mismatch");
}

double sample_as_double(const ImageBuffer& img, std::int64_t i) {
    return img.depth == Depth::U8 ? img.u8[std::size_t(i)] / 255.0 : double(img.f32[std::size_t(i)]);
}

}  // namespace

ImageBuffer to_f32(const ImageBuffer& img) {
    if (img.depth == Depth::F32) return img;
    ImageBuffer out = ImageBuffer::make_f32(img.width, img.height, img.color);
    for (std::int64_t i = 0; i < img.sample_count(); ++i)
        out.f32[std::size_t(i)] = float(img.u8[std::size_t(i)]) / 255.0f;
    return out;
}

ImageBuffer to_u8(const ImageBuffer& img) {
    if (img.depth == Depth::U8) return img;
    ImageBuffer out = ImageBuffer::make_u8(img.width, img.height, img.color);
    for (std::int64_t i = 0; i < img.sample_count(); ++i) {
        const double v = std::clamp(double(img.f32[std::size_t(i)]), 0.0, 1.0);
        out.u8[std::size_t(i)] = std::uint8_t(std::lround(v * 255.0));
    }
    return out;
}

ImageBuffer rgb_to_y(const ImageBuffer& img) {
    check_shape(img.color == ColorSpace::RGB, "rgb_to_y: input must be RGB");
    ImageBuffer out = ImageBuffer::make_f32(img.width, img.height, ColorSpace::Y);
    for (std::int64_t i = 0; i < img.pixel_count(); ++i) {
        const double r = sample_as_double(img, 3 * i);
        const double g = sample_as_double(img, 3 * i + 1);
        const double b = sample_as_double(img, 3 * i + 2);
        out.f32[std::size_t(i)] = float((16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    }
    return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, int shave) {
    check_same_geometry(a, b, "psnr");
    check_shape(shave >= 0 && 2 * shave < a.width && 2 * shave < a.height,
                "psnr: shave leaves no pixels");
    const int c = a.channels();
    double se = 0.0;
    std::int64_t count = 0;
    for (int y = shave; y < a.height - shave; ++y)
        for (int x = shave; x < a.width - shave; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const std::int64_t i = (std::int64_t(y) * a.width + x) * c + ch;
                const double d = sample_as_double(a, i) - sample_as_double(b, i);
                se += d * d;
                ++count;
            }
    const double mse = se / double(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double mid = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - mid;
        w[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += w[std::size_t(i)];
    }
    for (auto& v : w) v /= total;
    return w;
}

// Valid-mode separable filter: out is (h - win + 1) x (w - win + 1).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::vector<double>& win) {
    const int k = int(win.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> rows(std::size_t(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += win[std::size_t(i)] * img[std::size_t(y) * w + x + i];
            rows[std::size_t(y) * ow + x] = acc;
        }
    std::vector<double> out(std::size_t(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += win[std::size_t(i)] * rows[std::size_t(y + i) * ow + x];
            out[std::size_t(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, int shave, const SsimParams& p) {
    check_same_geometry(a, b, "ssim");
    check_shape(a.channels() == 1, "ssim: inputs must be single channel");
    const int w = a.width - 2 * shave;
    const int h = a.height - 2 * shave;
    check_shape(w >= p.window && h >= p.window, "ssim: image smaller than the window");

    std::vector<double> xa(std::size_t(w) * h), xb(std::size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::int64_t i = std::int64_t(y + shave) * a.width + (x + shave);
            xa[std::size_t(y) * w + x] = sample_as_double(a, i);
            xb[std::size_t(y) * w + x] = sample_as_double(b, i);
        }

    std::vector<double> aa(xa.size()), bb(xa.size()), ab(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) {
        aa[i] = xa[i] * xa[i];
        bb[i] = xb[i] * xb[i];
        ab[i] = xa[i] * xb[i];
    }

    const auto win = gaussian_window(p.window, p.sigma);
    const auto mu_a = filter_valid(xa, w, h, win);
    const auto mu_b = filter_valid(xb, w, h, win);
    const auto e_aa = filter_valid(aa, w, h, win);
    const auto e_bb = filter_valid(bb, w, h, win);
    const auto e_ab = filter_valid(ab, w, h, win);

    const double c1 = (p.k1 * p.luminance_range) * (p.k1 * p.luminance_range);
    const double c2 = (p.k2 * p.luminance_range) * (p.k2 * p.luminance_range);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / double(mu_a.size());
}

namespace {

double cubic_kernel(double x) {
    // Keys cubic, a = -0.5.
    const double ax = std::abs(x);
    if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
    if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
    return 0.0;
}

struct ResampleTap {
    int start = 0;
    std::vector<double> weights;
};

// Per-output-pixel taps along one axis. Downscale with antialias widens the
// kernel by the inverse scale; indices clamp at the borders and weights are
// renormalized to sum to 1.
std::vector<ResampleTap> resample_axis(int in_size, int out_size, bool antialias) {
    const double scale = double(out_size) / in_size;
    const double kscale = (antialias && scale < 1.0) ? scale : 1.0;
    const double support = 2.0 / kscale;
    std::vector<ResampleTap> taps(static_cast<std::size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) / scale - 0.5;
        const int lo = int(std::ceil(center - support - 1e-9));
        const int hi = int(std::floor(center + support + 1e-9));
        ResampleTap tap;
        tap.start = std::clamp(lo, 0, in_size - 1);
        const int end = std::clamp(hi, 0, in_size - 1);
        tap.weights.assign(std::size_t(end - tap.start + 1), 0.0);
        double total = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double wv = kscale * cubic_kernel(kscale * (center - j));
            const int jc = std::clamp(j, 0, in_size - 1);
            tap.weights[std::size_t(jc - tap.start)] += wv;
            total += wv;
        }
        for (auto& wv : tap.weights) wv /= total;
        taps[std::size_t(o)] = std::move(tap);
    }
    return taps;
}

}  // namespace

ImageBuffer bicubic_resize(const ImageBuffer& img, int num, int den, bool antialias) {
    const bool down = num == 1 && (den == 2 || den == 3 || den == 4);
    const bool up = den == 1 && (num >= 1 && num <= 4);
    check_supported(down || up, "bicubic_resize: unsupported factor " + std::to_string(num) + "/" +
                                    std::to_string(den));
    if (down)
        check_supported(img.width % den == 0 && img.height % den == 0,
                        "bicubic_resize: dimensions not divisible by " + std::to_string(den));
    const int ow = img.width * num / den;
    const int oh = img.height * num / den;
    check_shape(ow >= 1 && oh >= 1, "bicubic_resize: output would be empty");

    const int c = img.channels();
    const auto fx = resample_axis(img.width, ow, antialias);
    const auto fy = resample_axis(img.height, oh, antialias);

    // Horizontal pass, then vertical, accumulating in double.
    std::vector<double> mid(std::size_t(ow) * img.height * c, 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < ow; ++x) {
            const auto& tap = fx[std::size_t(x)];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t j = 0; j < tap.weights.size(); ++j)
                    acc += tap.weights[j] *
                           sample_as_double(img, (std::int64_t(y) * img.width + tap.start + std::int64_t(j)) * c + ch);
                mid[(std::size_t(y) * ow + std::size_t(x)) * c + std::size_t(ch)] = acc;
            }
        }

    ImageBuffer out = ImageBuffer::make_f32(ow, oh, img.color);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const auto& tap = fy[std::size_t(y)];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t j = 0; j < tap.weights.size(); ++j)
                    acc += tap.weights[j] *
                           mid[(std::size_t(tap.start + std::int64_t(j)) * ow + std::size_t(x)) * c + std::size_t(ch)];
                out.f32[(std::size_t(y) * ow + std::size_t(x)) * c + std::size_t(ch)] = float(acc);
            }
        }
    if (img.depth == Depth::U8) return to_u8(out);
    return out;
}

ImageBuffer load_rawf32(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    if (raw.size() < 12) throw DataError("rawf32: truncated header in '" + path.string() + "'");
    std::uint32_t w32, h32, c32;
    std::memcpy(&w32, raw.data(), 4);
    std::memcpy(&h32, raw.data() + 4, 4);
    std::memcpy(&c32, raw.data() + 8, 4);
    if (c32 != 1 && c32 != 3) throw DataError("rawf32: unsupported channel count");
    const std::size_t expect = 12 + std::size_t(w32) * h32 * c32 * 4;
    if (raw.size() != expect) throw DataError("rawf32: size mismatch in '" + path.string() + "'");
    ImageBuffer img = ImageBuffer::make_f32(int(w32), int(h32),
                                            c32 == 3 ? ColorSpace::RGB : ColorSpace::Y);
    std::memcpy(img.f32.data(), raw.data() + 12, raw.size() - 12);
    return img;
}

void save_rawf32(const std::filesystem::path& path, const ImageBuffer& img) {
    const ImageBuffer f = to_f32(img);
    std::string raw(12 + f.f32.size() * 4, '\0');
    const std::uint32_t w32 = std::uint32_t(f.width), h32 = std::uint32_t(f.height),
                        c32 = std::uint32_t(f.channels());
    std::memcpy(raw.data(), &w32, 4);
    std::memcpy(raw.data() + 4, &h32, 4);
    std::memcpy(raw.data() + 8, &c32, 4);
    std::memcpy(raw.data() + 12, f.f32.data(), f.f32.size() * 4);
    write_file_atomic(path, raw);
}

TensorPtr image_to_tensor(const ImageBuffer& img) {
    const ImageBuffer f = to_f32(img);
    const int c = f.channels();
    auto t = make_tensor<float>({1, c, f.height, f.width});
    for (int ch = 0; ch < c; ++ch) {
        float* plane = t->plane(0, ch);
        for (std::int64_t i = 0; i < f.pixel_count(); ++i) plane[i] = f.f32[std::size_t(i * c + ch)];
    }
    return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
    check_shape(t.shape.n == 1 && (t.shape.c == 1 || t.shape.c == 3),
                "tensor_to_image: need (1,1|3,h,w), got " + to_string(t.shape));
    ImageBuffer img = ImageBuffer::make_f32(t.shape.w, t.shape.h,
                                            t.shape.c == 3 ? ColorSpace::RGB : ColorSpace::Y);
    const int c = t.shape.c;
    for (int ch = 0; ch < c; ++ch) {
        const float* plane = t.plane(0, ch);
        for (std::int64_t i = 0; i < img.pixel_count(); ++i)
            img.f32[std::size_t(i * c + ch)] = std::clamp(plane[i], 0.0f, 1.0f);
    }
    return img;
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h) {
    check_shape(x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= img.width && y0 + h <= img.height,
                "crop: region out of bounds");
    const int c = img.channels();
    ImageBuffer out;
    out.width = w;
    out.height = h;
    out.color = img.color;
    out.depth = img.depth;
    if (img.depth == Depth::U8)
        out.u8.resize(std::size_t(out.sample_count()));
    else
        out.f32.resize(std::size_t(out.sample_count()));
    for (int y = 0; y < h; ++y) {
        const std::int64_t src = (std::int64_t(y0 + y) * img.width + x0) * c;
        const std::int64_t dst = std::int64_t(y) * w * c;
        if (img.depth == Depth::U8)
            std::copy_n(img.u8.begin() + src, std::int64_t(w) * c, out.u8.begin() + dst);
        else
            std::copy_n(img.f32.begin() + src, std::int64_t(w) * c, out.f32.begin() + dst);
    }
    return out;
}

}  // namespace pan
