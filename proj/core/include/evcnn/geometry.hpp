#pragma once

#include <string>

#include "evcnn/tensor.hpp"

namespace evcnn {

enum class Padding { same_zero, valid };

Padding parse_padding(const std::string& name);
std::string to_string(Padding padding);

/// Sliding-window placement shared by convolution and pooling: output
/// position (oy, ox) reads input rows oy * stride - pad_top + [0, kernel_h).
struct WindowGeometry {
    int in_h = 0, in_w = 0;
    int kernel_h = 1, kernel_w = 1;
    int stride = 1;
    int pad_top = 0, pad_left = 0;
    int out_h = 0, out_w = 0;

    /// Throws DimensionMismatch when the window does not fit.
    static WindowGeometry make(int in_h, int in_w, int kernel_h, int kernel_w, int stride,
                               Padding padding);

    int row_origin(int oy) const { return oy * stride - pad_top; }
    int col_origin(int ox) const { return ox * stride - pad_left; }

    /// Inclusive range of output rows whose window covers input row `iy`;
    /// empty when first > last.
    void rows_covering(int iy, int& first, int& last) const {
        covering(iy + pad_top, kernel_h, out_h, first, last);
    }
    void cols_covering(int ix, int& first, int& last) const {
        covering(ix + pad_left, kernel_w, out_w, first, last);
    }

    /// Marks in `out` every output position whose window covers a position of `in`.
    void affected(const CoordSet& in, CoordSet& out) const;

private:
    void covering(int shifted, int k, int n, int& first, int& last) const {
        // o * stride <= shifted <= o * stride + k - 1
        const int lo = shifted - k + 1;
        first = lo <= 0 ? 0 : (lo + stride - 1) / stride;
        last = shifted < 0 ? -1 : shifted / stride;
        if (last > n - 1) last = n - 1;
    }
};

}  // namespace evcnn
