#include "equivae/idx.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace equivae {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& compressed) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    // 15 + 16 selects gzip decoding.
    if (inflateInit2(&zs, 15 + 16) != Z_OK) {
        throw IoError("zlib init failed");
    }
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());

    std::vector<uint8_t> out;
    uint8_t buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw TruncatedFileError("gzip stream damaged or truncated");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

uint32_t read_be32(const std::vector<uint8_t>& bytes, size_t offset, const char* what) {
    if (offset + 4 > bytes.size()) {
        throw TruncatedFileError(std::string("file too short while reading ") + what);
    }
    return (static_cast<uint32_t>(bytes[offset]) << 24) |
           (static_cast<uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<uint32_t>(bytes[offset + 3]);
}

}  // namespace

std::vector<uint8_t> read_maybe_gzip(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        return gunzip(bytes);
    }
    return bytes;
}

IdxImages parse_idx_images(const std::vector<uint8_t>& bytes) {
    const uint32_t magic = read_be32(bytes, 0, "image magic");
    if (magic != kImagesMagic) {
        throw BadMagicError("bad image magic " + std::to_string(magic));
    }
    IdxImages imgs;
    imgs.count = read_be32(bytes, 4, "image count");
    imgs.rows = read_be32(bytes, 8, "image rows");
    imgs.cols = read_be32(bytes, 12, "image cols");
    const size_t want = 16 + static_cast<size_t>(imgs.count * imgs.rows * imgs.cols);
    if (bytes.size() < want) {
        throw TruncatedFileError("image file truncated: have " + std::to_string(bytes.size()) +
                                 " bytes, need " + std::to_string(want));
    }
    imgs.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<int64_t>(want));
    return imgs;
}

std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes) {
    const uint32_t magic = read_be32(bytes, 0, "label magic");
    if (magic != kLabelsMagic) {
        throw BadMagicError("bad label magic " + std::to_string(magic));
    }
    const uint32_t count = read_be32(bytes, 4, "label count");
    const size_t want = 8 + count;
    if (bytes.size() < want) {
        throw TruncatedFileError("label file truncated");
    }
    return std::vector<uint8_t>(bytes.begin() + 8, bytes.begin() + static_cast<int64_t>(want));
}

IdxDataset load_idx_with_dims(const std::string& images_path,
                              const std::string& labels_path) {
    const IdxImages imgs = parse_idx_images(read_maybe_gzip(images_path));
    const auto labels = parse_idx_labels(read_maybe_gzip(labels_path));
    if (static_cast<int64_t>(labels.size()) != imgs.count) {
        throw CountMismatchError("image count " + std::to_string(imgs.count) +
                                 " != label count " + std::to_string(labels.size()));
    }
    IdxDataset out;
    out.rows = imgs.rows;
    out.cols = imgs.cols;
    out.examples.reserve(static_cast<size_t>(imgs.count));
    const int64_t px = imgs.rows * imgs.cols;
    for (int64_t i = 0; i < imgs.count; ++i) {
        LabelledExample ex;
        ex.id = i;
        ex.label = labels[static_cast<size_t>(i)];
        ex.pixels.resize(static_cast<size_t>(px));
        for (int64_t j = 0; j < px; ++j) {
            ex.pixels[static_cast<size_t>(j)] =
                static_cast<double>(imgs.pixels[static_cast<size_t>(i * px + j)]) / 255.0;
        }
        out.examples.push_back(std::move(ex));
    }
    return out;
}

std::vector<LabelledExample> load_idx(const std::string& images_path,
                                      const std::string& labels_path) {
    return load_idx_with_dims(images_path, labels_path).examples;
}

}  // namespace equivae
