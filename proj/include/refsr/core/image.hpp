#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "refsr/core/tensor.hpp"

namespace refsr {

// Images are [C,H,W] tensors with C in {1,3}, RGB, values in [0,1].
// 8-bit integers exist only at the I/O boundary.
using Image = Tensor;

inline void check_image(const Tensor& img, const char* ctx) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3) || img.dim(1) < 1 || img.dim(2) < 1)
        throw contract_error(std::string(ctx) + ": not an image tensor " +
                             Tensor::shape_str(img.shape()));
}

inline Image clamp01(Image img) {
    for (std::int64_t i = 0; i < img.size(); ++i) {
        if (img[i] < 0.0)
            img[i] = 0.0;
        else if (img[i] > 1.0)
            img[i] = 1.0;
    }
    return img;
}

// Round-half-up quantization to the 8-bit domain.
inline int quantize_u8(double v) {
    const int q = static_cast<int>(std::floor(v * 255.0 + 0.5));
    return q < 0 ? 0 : (q > 255 ? 255 : q);
}

// [C,H,W] in [0,1] -> [C,H,W] of quantized values in 0..255 (still double).
inline Tensor quantize_image(const Image& img) {
    Tensor out = img;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = quantize_u8(img[i]);
    return out;
}

// Interleaved HWC bytes.
inline std::vector<std::uint8_t> to_u8_interleaved(const Image& img) {
    check_image(img, "to_u8_interleaved");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<std::uint8_t> out(static_cast<size_t>(h) * w * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<size_t>(y) * w + x) * c + ch] =
                    static_cast<std::uint8_t>(quantize_u8(img.at(ch, y, x)));
    return out;
}

inline Image from_u8_interleaved(const std::uint8_t* data, int h, int w, int c) {
    Image img({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                img.at(ch, y, x) = data[(static_cast<size_t>(y) * w + x) * c + ch] / 255.0;
    return img;
}

// BT.601 full-swing luma from 0..255 RGB values.
inline double luma_bt601(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Quantized image (0..255 domain) -> Y plane in the 0..255 domain.
inline Tensor y_channel(const Tensor& quantized) {
    const int c = quantized.dim(0), h = quantized.dim(1), w = quantized.dim(2);
    Tensor y({1, h, w});
    if (c == 1) {
        for (int i = 0; i < h * w; ++i) y[i] = quantized[i];
        return y;
    }
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            y.at(0, yy, xx) = luma_bt601(quantized.at(0, yy, xx), quantized.at(1, yy, xx),
                                         quantized.at(2, yy, xx));
    return y;
}

inline Image gray_to_rgb(const Image& img) {
    if (img.dim(0) == 3) return img;
    const int h = img.dim(1), w = img.dim(2);
    Image out({3, h, w});
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < h * w; ++i) out[static_cast<std::int64_t>(ch) * h * w + i] = img[i];
    return out;
}

inline Image crop(const Image& img, int y0, int x0, int ch_, int cw) {
    const int c = img.dim(0);
    if (y0 < 0 || x0 < 0 || y0 + ch_ > img.dim(1) || x0 + cw > img.dim(2))
        throw contract_error("crop out of bounds");
    Image out({c, ch_, cw});
    for (int chn = 0; chn < c; ++chn)
        for (int y = 0; y < ch_; ++y)
            for (int x = 0; x < cw; ++x) out.at(chn, y, x) = img.at(chn, y0 + y, x0 + x);
    return out;
}

}  // namespace refsr
