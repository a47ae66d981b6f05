#pragma once

#include <string>
#include <vector>

#include "equivae/data.hpp"

namespace equivae {

struct IdxDataset {
    std::vector<LabelledExample> examples;
    int64_t rows = 0;
    int64_t cols = 0;
};

/// Reads an IDX image/label file pair into labelled examples with pixel
/// values scaled to [0,1]. Both files may be gzip-compressed (detected by
/// the 0x1f 0x8b magic). Ids are assigned 0..n-1 in file order.
std::vector<LabelledExample> load_idx(const std::string& images_path,
                                      const std::string& labels_path);
IdxDataset load_idx_with_dims(const std::string& images_path,
                              const std::string& labels_path);

/// Raw file parse helpers, exposed for tests and tooling.
std::vector<uint8_t> read_maybe_gzip(const std::string& path);

struct IdxImages {
    int64_t count = 0;
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<uint8_t> pixels;
};

IdxImages parse_idx_images(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes);

}  // namespace equivae
