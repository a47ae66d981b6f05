#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "equivae/errors.hpp"

namespace equivae {

/// A grid of equally sized image tiles, grayscale or RGB. Pixels live in
/// interleaved row-major order and are clamped to [0,1] when written out.
struct ImageGrid {
    int64_t rows = 0;
    int64_t cols = 0;
    int64_t tile_h = 0;
    int64_t tile_w = 0;
    int64_t channels = 1;
    std::vector<double> pixels;  // height() * width() * channels

    static ImageGrid create(int64_t rows, int64_t cols, int64_t tile_h, int64_t tile_w,
                            int64_t channels);

    int64_t height() const { return rows * tile_h; }
    int64_t width() const { return cols * tile_w; }

    /// tile is C*H*W planar, the tensor image layout.
    void set_tile(int64_t row, int64_t col, const std::vector<double>& tile);
    /// The C*H*W planar content of one tile, for tests and probes.
    std::vector<double> tile_at(int64_t row, int64_t col) const;
};

/// 8-bit binary PGM (1 channel) or PPM (3 channels), picked from the grid.
void write_image(const ImageGrid& grid, const std::string& path);

}  // namespace equivae
