#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "awm/dataset.hpp"

namespace awm {

// ---------------------------------------------------------------------------
// Synthetic stand-in datasets, written in the exact IDX layout the loader
// expects. "mnist" becomes stroke-rendered digits with handwriting-style
// jitter; "fmnist" becomes textured shape classes with a clearly different
// pixel-mass distribution, so the pair still works as an OOD counterpart.
// Generation is fully seeded; a SYNTHETIC.txt marker is written next to the
// files so tools can report the data provenance.
// ---------------------------------------------------------------------------

struct SynthSpec {
    int train_count = 25000;
    int test_count = 5000;
    uint64_t seed = 1;
};

// Bumped whenever the renderers change; stale stand-ins regenerate.
constexpr int kSynthGeneratorVersion = 2;

namespace synth {

struct Pt {
    float x, y;
};

using Stroke = std::vector<Pt>;
using Glyph = std::vector<Stroke>;

inline Stroke ellipse(float cx, float cy, float rx, float ry, int npts = 14) {
    Stroke s;
    for (int i = 0; i <= npts; ++i) {
        const float a = 2.0f * 3.14159265f * static_cast<float>(i) / npts;
        s.push_back({cx + rx * std::sin(a), cy - ry * std::cos(a)});
    }
    return s;
}

// Digit skeletons in [-1,1]^2 (y grows downward).
inline const std::array<Glyph, 10>& digit_glyphs() {
    static const std::array<Glyph, 10> glyphs = [] {
        std::array<Glyph, 10> g;
        g[0] = {ellipse(0.0f, 0.0f, 0.62f, 0.92f)};
        g[1] = {{{-0.38f, -0.52f}, {0.05f, -0.95f}, {0.05f, 1.0f}}};
        g[2] = {{{-0.62f, -0.42f},
                 {-0.30f, -0.88f},
                 {0.22f, -0.98f},
                 {0.62f, -0.55f},
                 {0.55f, -0.18f},
                 {-0.65f, 0.98f},
                 {0.70f, 0.98f}}};
        g[3] = {{{-0.60f, -0.92f},
                 {0.30f, -1.00f},
                 {0.66f, -0.58f},
                 {0.25f, -0.12f},
                 {-0.15f, -0.06f},
                 {0.33f, 0.02f},
                 {0.70f, 0.45f},
                 {0.30f, 0.94f},
                 {-0.62f, 0.86f}}};
        g[4] = {{{0.28f, -1.0f}, {-0.62f, 0.28f}, {0.68f, 0.28f}}, {{0.30f, -0.42f}, {0.30f, 1.0f}}};
        g[5] = {{{0.62f, -0.98f},
                 {-0.55f, -0.98f},
                 {-0.58f, -0.10f},
                 {0.08f, -0.22f},
                 {0.58f, 0.10f},
                 {0.56f, 0.62f},
                 {0.02f, 0.95f},
                 {-0.60f, 0.72f}}};
        g[6] = {{{0.52f, -0.95f},
                 {-0.10f, -0.72f},
                 {-0.54f, -0.10f},
                 {-0.55f, 0.48f},
                 {-0.10f, 0.95f},
                 {0.44f, 0.80f},
                 {0.58f, 0.28f},
                 {0.12f, -0.02f},
                 {-0.50f, 0.20f}}};
        g[7] = {{{-0.66f, -0.98f}, {0.66f, -0.98f}, {0.02f, 1.0f}}};
        g[8] = {ellipse(0.0f, -0.50f, 0.50f, 0.46f), ellipse(0.0f, 0.52f, 0.58f, 0.47f)};
        g[9] = {ellipse(0.02f, -0.45f, 0.52f, 0.50f), {{0.54f, -0.40f}, {0.48f, 0.42f}, {0.12f, 1.0f}}};
        return g;
    }();
    return glyphs;
}

inline float seg_dist(float px, float py, Pt a, Pt b) {
    const float abx = b.x - a.x, aby = b.y - a.y;
    const float apx = px - a.x, apy = py - a.y;
    const float ab2 = abx * abx + aby * aby;
    float t = ab2 > 0 ? (apx * abx + apy * aby) / ab2 : 0.0f;
    t = std::clamp(t, 0.0f, 1.0f);
    const float dx = apx - t * abx, dy = apy - t * aby;
    return std::sqrt(dx * dx + dy * dy);
}

struct Affine {
    // pixel = center + R(angle) * S(scale) * Shear * u * radius
    float m00, m01, m10, m11, tx, ty;

    Pt apply(Pt u) const { return {m00 * u.x + m01 * u.y + tx, m10 * u.x + m11 * u.y + ty}; }

    // local = inverse(pixel)
    Pt unapply(float px, float py) const {
        const float det = m00 * m11 - m01 * m10;
        const float x = px - tx, y = py - ty;
        return {(m11 * x - m01 * y) / det, (-m10 * x + m00 * y) / det};
    }
};

inline Affine random_affine(Rng& rng, float rx, float ry) {
    const float ang = rng.uniform(-0.26f, 0.26f);
    const float sx = rng.uniform(0.78f, 1.10f);
    const float sy = rng.uniform(0.78f, 1.10f);
    const float shear = rng.uniform(-0.32f, 0.32f);
    const float ca = std::cos(ang), sa = std::sin(ang);
    Affine a;
    // rotation * scale * shear, axes scaled to the glyph radius
    a.m00 = (ca * sx + (-sa) * sy * 0.0f) * rx;
    a.m01 = (ca * sx * shear - sa * sy) * ry;
    a.m10 = (sa * sx) * rx;
    a.m11 = (sa * sx * shear + ca * sy) * ry;
    a.tx = 13.5f + rng.uniform(-2.6f, 2.6f);
    a.ty = 13.5f + rng.uniform(-2.2f, 2.2f);
    return a;
}

inline void render_digit(int digit, Rng& rng, float* out784) {
    const Affine aff = random_affine(rng, 6.8f, 9.2f);
    const float thick = rng.uniform(0.78f, 1.45f);
    const float ink = rng.uniform(0.72f, 0.98f);

    // transform skeleton, with a little per-point wobble
    std::vector<Stroke> strokes;
    for (const Stroke& s : digit_glyphs()[digit]) {
        Stroke t;
        t.reserve(s.size());
        for (Pt p : s) {
            Pt q = aff.apply({p.x + rng.uniform(-0.07f, 0.07f), p.y + rng.uniform(-0.07f, 0.07f)});
            t.push_back(q);
        }
        strokes.push_back(std::move(t));
    }

    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            float d = 1e9f;
            for (const Stroke& s : strokes)
                for (size_t i = 0; i + 1 < s.size(); ++i)
                    d = std::min(d, seg_dist(static_cast<float>(x), static_cast<float>(y), s[i], s[i + 1]));
            const float v = std::clamp((thick + 0.55f - d) / 1.1f, 0.0f, 1.0f) * ink;
            out784[y * 28 + x] = std::clamp(v, 0.0f, 1.0f);
        }
}

// Shape/texture classes for the fashion stand-in. dist<=0 means inside.
inline float shape_fill(int cls, Pt v, float stripe_phase) {
    const float ax = std::fabs(v.x), ay = std::fabs(v.y);
    const float r = std::sqrt(v.x * v.x + v.y * v.y);
    auto stripes = [&](float coord, float freq) {
        return (static_cast<int>(std::floor((coord + 1.0f) * freq + stripe_phase)) & 1) ? 0.55f : 1.0f;
    };
    switch (cls) {
        case 0: return std::max(ax, ay) <= 0.78f ? 1.0f : 0.0f;                       // block
        case 1: return r <= 0.80f ? 1.0f : 0.0f;                                      // disc
        case 2:  // triangle
            return (v.y >= -0.85f && v.y <= 0.88f && ax <= (v.y + 0.95f) * 0.52f) ? 1.0f : 0.0f;
        case 3: return std::max(ax, ay) <= 0.80f ? stripes(v.y, 3.2f) : 0.0f;         // h-stripes
        case 4: return std::max(ax, ay) <= 0.80f ? stripes(v.x, 3.2f) : 0.0f;         // v-stripes
        case 5:  // checker
            return std::max(ax, ay) <= 0.82f
                       ? ((static_cast<int>(std::floor((v.x + 1.0f) * 2.1f + stripe_phase)) ^
                           static_cast<int>(std::floor((v.y + 1.0f) * 2.1f + stripe_phase))) & 1
                              ? 0.45f
                              : 1.0f)
                       : 0.0f;
        case 6: return (r <= 0.82f && r >= 0.42f) ? 1.0f : 0.0f;                      // ring
        case 7: {  // X cross
            const float d1 = std::fabs(v.x - v.y) * 0.7071f;
            const float d2 = std::fabs(v.x + v.y) * 0.7071f;
            return (std::min(d1, d2) <= 0.20f && std::max(ax, ay) <= 0.9f) ? 1.0f : 0.0f;
        }
        case 8: return (ax + ay) <= 0.98f ? 1.0f : 0.0f;                              // diamond
        default: {
            const float m = std::max(ax, ay);                                         // frame
            return (m <= 0.82f && m >= 0.46f) ? 1.0f : 0.0f;
        }
    }
}

inline void render_shape(int cls, Rng& rng, float* out784) {
    const Affine aff = random_affine(rng, 8.6f, 8.6f);
    const float base = rng.uniform(0.55f, 0.95f);
    const float stripe_phase = rng.uniform(0.0f, 2.0f);
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            const Pt v = aff.unapply(static_cast<float>(x), static_cast<float>(y));
            float fill = shape_fill(cls, v, stripe_phase);
            float val = fill * base * rng.uniform(0.78f, 1.0f);
            out784[y * 28 + x] = std::clamp(val + rng.uniform(0.0f, 0.03f), 0.0f, 1.0f);
        }
}

inline void make_split(DatasetName name, int count, uint64_t seed, Tensor& images,
                       std::vector<int>& labels) {
    images = Tensor({count, 1, 28, 28});
    labels.resize(count);
    // balanced labels in a seeded random order
    for (int i = 0; i < count; ++i) labels[i] = i % 10;
    Rng order(derive_seed(seed, "labels"));
    order.shuffle(labels);
    for (int i = 0; i < count; ++i) {
        Rng rng(splitmix64(derive_seed(seed, "item") + static_cast<uint64_t>(i)));
        float* out = images.ptr() + static_cast<size_t>(i) * 784;
        if (name == DatasetName::MNIST)
            render_digit(labels[i], rng, out);
        else
            render_shape(labels[i], rng, out);
    }
    // quantize exactly like an IDX round trip so in-memory data matches files
    for (auto& v : images.data)
        v = static_cast<float>(std::lround(v * 255.0f)) * (1.0f / 255.0f);
}

}  // namespace synth

inline void write_synthetic_dataset(const std::string& root, DatasetName name,
                                    const SynthSpec& spec) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(root) / to_string(name);
    fs::create_directories(dir);
    const uint64_t base = derive_seed(spec.seed, "synth/" + to_string(name));

    Tensor images;
    std::vector<int> labels;
    synth::make_split(name, spec.train_count, derive_seed(base, "train"), images, labels);
    detail::write_file((dir / "train-images-idx3-ubyte").string(), serialize_idx_images(images));
    detail::write_file((dir / "train-labels-idx1-ubyte").string(), serialize_idx_labels(labels));

    synth::make_split(name, spec.test_count, derive_seed(base, "test"), images, labels);
    detail::write_file((dir / "t10k-images-idx3-ubyte").string(), serialize_idx_images(images));
    detail::write_file((dir / "t10k-labels-idx1-ubyte").string(), serialize_idx_labels(labels));

    detail::write_file((dir / "SYNTHETIC.txt").string(),
                       "synthetic stand-in dataset (generator v" +
                           std::to_string(kSynthGeneratorVersion) + ", seed " +
                           std::to_string(spec.seed) + ", train " +
                           std::to_string(spec.train_count) + ", test " +
                           std::to_string(spec.test_count) + ")\n");
}

inline bool dataset_files_present(const std::string& root, DatasetName name) {
    try {
        const auto dir = dataset_dir(root, name);
        detail::find_idx_file(dir, "train-images", "idx3");
        detail::find_idx_file(dir, "train-labels", "idx1");
        detail::find_idx_file(dir, "t10k-images", "idx3");
        detail::find_idx_file(dir, "t10k-labels", "idx1");
        return true;
    } catch (const DataError&) {
        return false;
    }
}

inline bool dataset_is_synthetic(const std::string& root, DatasetName name) {
    return std::filesystem::exists(dataset_dir(root, name) / "SYNTHETIC.txt");
}

// Generates the stand-in when the real files are absent; an existing
// stand-in from an older generator is regenerated (real files are never
// touched).
inline void ensure_dataset(const std::string& root, DatasetName name, const SynthSpec& spec) {
    if (dataset_files_present(root, name)) {
        if (!dataset_is_synthetic(root, name)) return;
        const auto marker = dataset_dir(root, name) / "SYNTHETIC.txt";
        const std::vector<uint8_t> bytes = detail::read_file(marker.string());
        const std::string text(bytes.begin(), bytes.end());
        const std::string want = "generator v" + std::to_string(kSynthGeneratorVersion);
        if (text.find(want) != std::string::npos) return;
    }
    write_synthetic_dataset(root, name, spec);
}

}  // namespace awm
