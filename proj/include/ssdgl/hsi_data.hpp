#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssdgl/errors.hpp"
#include "ssdgl/tensor.hpp"

namespace ssdgl {

/// H x W x C spectral cube, stored band-major (band, then row, then column),
/// which is exactly the [C,H,W] tensor layout.
struct HsiCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<float> values;

    float at(int band, int row, int col) const {
        return values[std::size_t(((long long)band * height + row) * width + col)];
    }
    long long voxels() const { return (long long)height * width * bands; }
};

/// Sparse per-pixel class map; 0 = unlabeled background, 1..M = classes.
struct LabelRaster {
    int height = 0;
    int width = 0;
    std::vector<std::uint16_t> labels;

    std::uint16_t at(int row, int col) const {
        return labels[std::size_t((long long)row * width + col)];
    }
    int max_label() const;
    long long labeled_count() const;
};

/// M+1 RGB triples; index 0 is black. Deterministic function of M.
struct Palette {
    std::vector<std::array<std::uint8_t, 3>> colors;
    static Palette for_classes(int num_classes);
    int size() const { return int(colors.size()); }
};

// --- binary formats -------------------------------------------------------
// HSIC cube:   "HSIC", u32 version=1, H, W, C, then C*H*W f32, all little
//              endian; band-major, row-major within a band.
// HSIG raster: "HSIG", u32 version=1, H, W, then H*W u16, row-major.
// Map:         binary P6 portable pixmap, maxval 255.

HsiCube load_cube(const std::string& path);
void save_cube(const HsiCube& cube, const std::string& path);
LabelRaster load_labels(const std::string& path);
void save_labels(const LabelRaster& raster, const std::string& path);
void render_map(const LabelRaster& labels, const Palette& palette, const std::string& path);

struct PaddedCube {
    HsiCube cube;
    int orig_height = 0;
    int orig_width = 0;
};

/// Zero-pad bottom/right so both spatial dims are multiples of 16. Pixel
/// (i,j) keeps its coordinates.
PaddedCube pad_for_network(const HsiCube& cube);

/// Drop padded rows/columns again.
HsiCube crop_to(const HsiCube& cube, int height, int width);

/// Per-band standardization over all pixels; constant bands map to zero.
HsiCube normalize(const HsiCube& cube);

/// Deterministic synthetic scene: contiguous class blobs with smooth,
/// distinct spectral signatures plus noise. `class_fractions` has one entry
/// per class and sums to at most 1 (remainder stays background).
std::pair<HsiCube, LabelRaster> synth_cube(std::uint64_t seed, int height, int width, int bands,
                                           int num_classes, const std::vector<double>& class_fractions);

template <class Scalar>
Tensor<Scalar> to_tensor(const HsiCube& cube) {
    Tensor<Scalar> t = Tensor<Scalar>::zeros({cube.bands, cube.height, cube.width});
    Scalar* d = t.raw();
    for (long long i = 0; i < cube.voxels(); ++i) d[i] = Scalar(cube.values[std::size_t(i)]);
    return t;
}

}  // namespace ssdgl
