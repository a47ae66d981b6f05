#include "equivae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace equivae {

ImageGrid ImageGrid::create(int64_t rows, int64_t cols, int64_t tile_h, int64_t tile_w,
                            int64_t channels) {
    if (rows < 1 || cols < 1 || tile_h < 1 || tile_w < 1) {
        throw ContractError("image grid dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw ContractError("image grid supports 1 or 3 channels");
    }
    ImageGrid grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.tile_h = tile_h;
    grid.tile_w = tile_w;
    grid.channels = channels;
    grid.pixels.assign(static_cast<size_t>(rows * tile_h * cols * tile_w * channels), 0.0);
    return grid;
}

void ImageGrid::set_tile(int64_t row, int64_t col, const std::vector<double>& tile) {
    if (row < 0 || row >= rows || col < 0 || col >= cols) {
        throw ContractError("tile position out of range");
    }
    if (static_cast<int64_t>(tile.size()) != channels * tile_h * tile_w) {
        throw ShapeError("tile size mismatch");
    }
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t y = 0; y < tile_h; ++y) {
            for (int64_t x = 0; x < tile_w; ++x) {
                const int64_t gy = row * tile_h + y;
                const int64_t gx = col * tile_w + x;
                pixels[static_cast<size_t>((gy * width() + gx) * channels + c)] =
                    tile[static_cast<size_t>((c * tile_h + y) * tile_w + x)];
            }
        }
    }
}

std::vector<double> ImageGrid::tile_at(int64_t row, int64_t col) const {
    if (row < 0 || row >= rows || col < 0 || col >= cols) {
        throw ContractError("tile position out of range");
    }
    std::vector<double> tile(static_cast<size_t>(channels * tile_h * tile_w));
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t y = 0; y < tile_h; ++y) {
            for (int64_t x = 0; x < tile_w; ++x) {
                const int64_t gy = row * tile_h + y;
                const int64_t gx = col * tile_w + x;
                tile[static_cast<size_t>((c * tile_h + y) * tile_w + x)] =
                    pixels[static_cast<size_t>((gy * width() + gx) * channels + c)];
            }
        }
    }
    return tile;
}

void write_image(const ImageGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << (grid.channels == 1 ? "P5" : "P6") << "\n"
        << grid.width() << " " << grid.height() << "\n255\n";
    std::vector<uint8_t> bytes(grid.pixels.size());
    for (size_t i = 0; i < grid.pixels.size(); ++i) {
        bytes[i] = static_cast<uint8_t>(
            std::lround(std::clamp(grid.pixels[i], 0.0, 1.0) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

}  // namespace equivae
