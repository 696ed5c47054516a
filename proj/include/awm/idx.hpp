#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "awm/checkpoint.hpp"  // detail::read_file / write_file
#include "awm/tensor.hpp"

namespace awm {

// IDX binary format (big-endian): u32 magic, u32 dims..., raw payload bytes.
// Images use magic 2051 with dims [N,28,28]; labels use 2049 with dims [N].
namespace idx {

constexpr uint32_t kImageMagic = 2051;
constexpr uint32_t kLabelMagic = 2049;

inline uint32_t read_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void write_be32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace idx

// Decodes an IDX image payload into a [N,1,28,28] tensor with pixels
// mapped to [0,1] by dividing by 255.
inline Tensor parse_idx_images(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 16) throw DataError("idx images: truncated header");
    const uint32_t magic = idx::read_be32(bytes.data());
    if (magic != idx::kImageMagic)
        throw DataError("idx images: bad magic " + std::to_string(magic) + " (want 2051)");
    const uint32_t n = idx::read_be32(bytes.data() + 4);
    const uint32_t rows = idx::read_be32(bytes.data() + 8);
    const uint32_t cols = idx::read_be32(bytes.data() + 12);
    if (rows != 28 || cols != 28)
        throw DataError("idx images: dim mismatch " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " (want 28x28)");
    const size_t want = 16 + static_cast<size_t>(n) * rows * cols;
    if (bytes.size() < want) throw DataError("idx images: truncated payload");
    if (bytes.size() > want) throw DataError("idx images: trailing bytes");
    Tensor t({static_cast<int>(n), 1, 28, 28});
    const uint8_t* src = bytes.data() + 16;
    for (size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(src[i]) * (1.0f / 255.0f);
    return t;
}

inline std::vector<int> parse_idx_labels(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8) throw DataError("idx labels: truncated header");
    const uint32_t magic = idx::read_be32(bytes.data());
    if (magic != idx::kLabelMagic)
        throw DataError("idx labels: bad magic " + std::to_string(magic) + " (want 2049)");
    const uint32_t n = idx::read_be32(bytes.data() + 4);
    const size_t want = 8 + static_cast<size_t>(n);
    if (bytes.size() < want) throw DataError("idx labels: truncated payload");
    if (bytes.size() > want) throw DataError("idx labels: trailing bytes");
    std::vector<int> labels(n);
    for (uint32_t i = 0; i < n; ++i) {
        const uint8_t v = bytes[8 + i];
        if (v > 9) throw DataError("idx labels: label out of range: " + std::to_string(v));
        labels[i] = v;
    }
    return labels;
}

// Inverse of parse_idx_images; parse -> serialize reproduces the input bytes.
inline std::string serialize_idx_images(const Tensor& images) {
    if (images.shape.size() != 4 || images.dim(1) != 1 || images.dim(2) != 28 || images.dim(3) != 28)
        throw DataError("idx images: tensor must be [N,1,28,28]");
    std::string out;
    out.reserve(16 + images.size());
    idx::write_be32(out, idx::kImageMagic);
    idx::write_be32(out, static_cast<uint32_t>(images.dim(0)));
    idx::write_be32(out, 28);
    idx::write_be32(out, 28);
    for (float v : images.data) {
        const int b = static_cast<int>(std::lround(v * 255.0f));
        out.push_back(static_cast<char>(std::clamp(b, 0, 255)));
    }
    return out;
}

inline std::string serialize_idx_labels(const std::vector<int>& labels) {
    std::string out;
    out.reserve(8 + labels.size());
    idx::write_be32(out, idx::kLabelMagic);
    idx::write_be32(out, static_cast<uint32_t>(labels.size()));
    for (int v : labels) {
        if (v < 0 || v > 9) throw DataError("idx labels: label out of range: " + std::to_string(v));
        out.push_back(static_cast<char>(v));
    }
    return out;
}

}  // namespace awm
