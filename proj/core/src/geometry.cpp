#include "evcnn/geometry.hpp"

#include <algorithm>

#include "evcnn/errors.hpp"

namespace evcnn {

Padding parse_padding(const std::string& name) {
    if (name == "same" || name == "same_zero") return Padding::same_zero;
    if (name == "valid") return Padding::valid;
    throw ConfigError("unknown padding '" + name + "'");
}

std::string to_string(Padding padding) { return padding == Padding::same_zero ? "same" : "valid"; }

WindowGeometry WindowGeometry::make(int in_h, int in_w, int kernel_h, int kernel_w, int stride,
                                    Padding padding) {
    if (kernel_h < 1 || kernel_w < 1) throw DimensionMismatch("kernel dimensions must be >= 1");
    if (stride < 1) throw DimensionMismatch("stride must be >= 1");
    if (in_h < 1 || in_w < 1) throw DimensionMismatch("input dimensions must be >= 1");

    WindowGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.kernel_h = kernel_h;
    g.kernel_w = kernel_w;
    g.stride = stride;
    if (padding == Padding::valid) {
        if (in_h < kernel_h || in_w < kernel_w) {
            throw DimensionMismatch("window " + std::to_string(kernel_h) + "x" +
                                    std::to_string(kernel_w) + " larger than input " +
                                    std::to_string(in_h) + "x" + std::to_string(in_w));
        }
        g.out_h = (in_h - kernel_h) / stride + 1;
        g.out_w = (in_w - kernel_w) / stride + 1;
    } else {
        g.out_h = (in_h + stride - 1) / stride;
        g.out_w = (in_w + stride - 1) / stride;
        const int total_h = std::max((g.out_h - 1) * stride + kernel_h - in_h, 0);
        const int total_w = std::max((g.out_w - 1) * stride + kernel_w - in_w, 0);
        g.pad_top = total_h / 2;
        g.pad_left = total_w / 2;
    }
    return g;
}

void WindowGeometry::affected(const CoordSet& in, CoordSet& out) const {
    const int w = in.width();
    for (int i : in.indices()) {
        int y0, y1, x0, x1;
        rows_covering(i / w, y0, y1);
        cols_covering(i % w, x0, x1);
        for (int oy = y0; oy <= y1; ++oy)
            for (int ox = x0; ox <= x1; ++ox) out.insert(oy, ox);
    }
}

}  // namespace evcnn
