#pragma once

#include <filesystem>

#include "pan/tensor.hpp"

namespace pan {

enum class ColorSpace { RGB, Y };
enum class Depth { U8, F32 };

/// Interleaved row-major raster. f32 payloads live in [0,1] and are clamped
/// on export to u8.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    ColorSpace color = ColorSpace::RGB;
    Depth depth = Depth::U8;
    std::vector<std::uint8_t> u8;
    std::vector<float> f32;

    int channels() const { return color == ColorSpace::RGB ? 3 : 1; }
    std::int64_t pixel_count() const { return std::int64_t(width) * height; }
    std::int64_t sample_count() const { return pixel_count() * channels(); }

    static ImageBuffer make_u8(int w, int h, ColorSpace c = ColorSpace::RGB) {
        ImageBuffer img;
        img.width = w;
        img.height = h;
        img.color = c;
        img.depth = Depth::U8;
        img.u8.assign(std::size_t(img.sample_count()), 0);
        return img;
    }
    static ImageBuffer make_f32(int w, int h, ColorSpace c = ColorSpace::RGB) {
        ImageBuffer img;
        img.width = w;
        img.height = h;
        img.color = c;
        img.depth = Depth::F32;
        img.f32.assign(std::size_t(img.sample_count()), 0.0f);
        return img;
    }
};

ImageBuffer to_f32(const ImageBuffer& img);
ImageBuffer to_u8(const ImageBuffer& img);

/// BT.601 studio-swing luma on unit-range RGB:
/// Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255.
ImageBuffer rgb_to_y(const ImageBuffer& img);

/// 10*log10(1/MSE) on unit range, computed in double. `shave` pixels are
/// cropped from every border first. Identical inputs return +infinity.
double psnr(const ImageBuffer& a, const ImageBuffer& b, int shave);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double luminance_range = 1.0;
};

/// Mean local SSIM over valid (fully interior) windows; single-channel inputs.
double ssim(const ImageBuffer& a, const ImageBuffer& b, int shave, const SsimParams& p = {});

/// Separable cubic resampler (a = -0.5). Supported factors: num/den with
/// num=1, den in {2,3,4} (downscale; dims must divide) or den=1, num in
/// {1,2,3,4}. Antialiased downscale widens the kernel support by the inverse
/// factor.
ImageBuffer bicubic_resize(const ImageBuffer& img, int num, int den, bool antialias);

ImageBuffer load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImageBuffer& img);

/// Raw float container: header of width, height, channels as little-endian
/// u32, then little-endian f32 samples.
ImageBuffer load_rawf32(const std::filesystem::path& path);
void save_rawf32(const std::filesystem::path& path, const ImageBuffer& img);

/// (1, c, h, w) float tensor from an image; values in [0,1].
TensorPtr image_to_tensor(const ImageBuffer& img);
/// Image from a (1, c, h, w) tensor with c in {1,3}; clamps to [0,1].
ImageBuffer tensor_to_image(const Tensor& t);

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h);

}  // namespace pan
