#include "ssdgl/hsi_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <numbers>

#include "ssdgl/rng.hpp"

namespace ssdgl {

namespace {

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::streamoff n = in.tellg();
    in.seekg(0);
    std::vector<char> bytes(static_cast<std::size_t>(n));
    if (n > 0) in.read(bytes.data(), n);
    if (!in) throw IoError("read failed on '" + path + "'");
    return bytes;
}

std::uint32_t get_u32(const std::vector<char>& b, std::size_t off) {
    const auto* p = reinterpret_cast<const unsigned char*>(b.data() + off);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

std::uint16_t get_u16(const std::vector<char>& b, std::size_t off) {
    const auto* p = reinterpret_cast<const unsigned char*>(b.data() + off);
    return std::uint16_t(p[0] | p[1] << 8);
}

float get_f32(const std::vector<char>& b, std::size_t off) {
    const std::uint32_t u = get_u32(b, off);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void put_u32(std::vector<char>& b, std::uint32_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char((v >> 8) & 0xff));
    b.push_back(char((v >> 16) & 0xff));
    b.push_back(char((v >> 24) & 0xff));
}

void put_u16(std::vector<char>& b, std::uint16_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char((v >> 8) & 0xff));
}

void put_f32(std::vector<char>& b, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(b, u);
}

void write_all(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed on '" + path + "'");
}

void check_magic(const std::vector<char>& b, const char* magic, const std::string& path) {
    if (b.size() < 4 || std::memcmp(b.data(), magic, 4) != 0)
        throw IoError("'" + path + "': bad magic, expected " + magic);
}

}  // namespace

int LabelRaster::max_label() const {
    int m = 0;
    for (std::uint16_t v : labels) m = std::max(m, int(v));
    return m;
}

long long LabelRaster::labeled_count() const {
    long long n = 0;
    for (std::uint16_t v : labels)
        if (v != 0) ++n;
    return n;
}

HsiCube load_cube(const std::string& path) {
    const std::vector<char> b = read_all(path);
    check_magic(b, "HSIC", path);
    if (b.size() < 20) throw IoError("'" + path + "': truncated header, got " + std::to_string(b.size()) + " bytes");
    const std::uint32_t version = get_u32(b, 4);
    if (version != 1) throw IoError("'" + path + "': unsupported HSIC version " + std::to_string(version));
    HsiCube cube;
    cube.height = int(get_u32(b, 8));
    cube.width = int(get_u32(b, 12));
    cube.bands = int(get_u32(b, 16));
    if (cube.height == 0 || cube.width == 0 || cube.bands == 0)
        throw IoError("'" + path + "': zero dimension in header (H=" + std::to_string(cube.height) +
                      " W=" + std::to_string(cube.width) + " C=" + std::to_string(cube.bands) + ")");
    const std::size_t expected = 20 + std::size_t(cube.voxels()) * 4;
    if (b.size() != expected)
        throw IoError("'" + path + "': truncated payload, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(b.size()));
    cube.values.resize(std::size_t(cube.voxels()));
    for (long long i = 0; i < cube.voxels(); ++i)
        cube.values[std::size_t(i)] = get_f32(b, 20 + std::size_t(i) * 4);
    return cube;
}

void save_cube(const HsiCube& cube, const std::string& path) {
    if (cube.height < 1 || cube.width < 1 || cube.bands < 1)
        throw IoError("save_cube: empty cube");
    std::vector<char> b;
    b.reserve(20 + std::size_t(cube.voxels()) * 4);
    b.insert(b.end(), {'H', 'S', 'I', 'C'});
    put_u32(b, 1);
    put_u32(b, std::uint32_t(cube.height));
    put_u32(b, std::uint32_t(cube.width));
    put_u32(b, std::uint32_t(cube.bands));
    for (float v : cube.values) put_f32(b, v);
    write_all(path, b);
}

LabelRaster load_labels(const std::string& path) {
    const std::vector<char> b = read_all(path);
    check_magic(b, "HSIG", path);
    if (b.size() < 16) throw IoError("'" + path + "': truncated header, got " + std::to_string(b.size()) + " bytes");
    const std::uint32_t version = get_u32(b, 4);
    if (version != 1) throw IoError("'" + path + "': unsupported HSIG version " + std::to_string(version));
    LabelRaster r;
    r.height = int(get_u32(b, 8));
    r.width = int(get_u32(b, 12));
    if (r.height == 0 || r.width == 0)
        throw IoError("'" + path + "': zero dimension in header");
    const std::size_t count = std::size_t(r.height) * std::size_t(r.width);
    const std::size_t expected = 16 + count * 2;
    if (b.size() != expected)
        throw IoError("'" + path + "': truncated payload, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(b.size()));
    r.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) r.labels[i] = get_u16(b, 16 + i * 2);
    return r;
}

void save_labels(const LabelRaster& raster, const std::string& path) {
    if (raster.height < 1 || raster.width < 1) throw IoError("save_labels: empty raster");
    std::vector<char> b;
    b.reserve(16 + raster.labels.size() * 2);
    b.insert(b.end(), {'H', 'S', 'I', 'G'});
    put_u32(b, 1);
    put_u32(b, std::uint32_t(raster.height));
    put_u32(b, std::uint32_t(raster.width));
    for (std::uint16_t v : raster.labels) put_u16(b, v);
    write_all(path, b);
}

Palette Palette::for_classes(int num_classes) {
    Palette p;
    p.colors.resize(std::size_t(num_classes) + 1, {0, 0, 0});
    for (int k = 1; k <= num_classes; ++k) {
        // hue k/M on the HSV wheel, full saturation and value
        double h = double(k) / double(num_classes);
        h -= std::floor(h);  // k == M wraps to red
        const double h6 = h * 6.0;
        const int sect = int(h6) % 6;
        const double f = h6 - std::floor(h6);
        const double q = 1.0 - f, t = f;
        double r = 0, g = 0, bl = 0;
        switch (sect) {
            case 0: r = 1; g = t; bl = 0; break;
            case 1: r = q; g = 1; bl = 0; break;
            case 2: r = 0; g = 1; bl = t; break;
            case 3: r = 0; g = q; bl = 1; break;
            case 4: r = t; g = 0; bl = 1; break;
            default: r = 1; g = 0; bl = q; break;
        }
        auto to_byte = [](double v) { return std::uint8_t(std::lround(v * 255.0)); };
        p.colors[std::size_t(k)] = {to_byte(r), to_byte(g), to_byte(bl)};
    }
    return p;
}

void render_map(const LabelRaster& labels, const Palette& palette, const std::string& path) {
    const int top = labels.max_label();
    if (top > palette.size() - 1)
        throw IoError("render_map: label " + std::to_string(top) + " outside palette of " +
                      std::to_string(palette.size()) + " entries");
    std::string header = "P6\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
    std::vector<char> b(header.begin(), header.end());
    b.reserve(b.size() + labels.labels.size() * 3);
    for (std::uint16_t v : labels.labels) {
        const auto& c = palette.colors[std::size_t(v)];
        b.push_back(char(c[0]));
        b.push_back(char(c[1]));
        b.push_back(char(c[2]));
    }
    write_all(path, b);
}

PaddedCube pad_for_network(const HsiCube& cube) {
    const int H = cube.height, W = cube.width;
    const int Hp = (H + 15) / 16 * 16;
    const int Wp = (W + 15) / 16 * 16;
    PaddedCube out;
    out.orig_height = H;
    out.orig_width = W;
    if (Hp == H && Wp == W) {
        out.cube = cube;
        return out;
    }
    out.cube.height = Hp;
    out.cube.width = Wp;
    out.cube.bands = cube.bands;
    out.cube.values.assign(std::size_t(out.cube.voxels()), 0.0f);
    for (int b = 0; b < cube.bands; ++b)
        for (int i = 0; i < H; ++i)
            std::memcpy(&out.cube.values[std::size_t(((long long)b * Hp + i) * Wp)],
                        &cube.values[std::size_t(((long long)b * H + i) * W)], std::size_t(W) * 4);
    return out;
}

HsiCube crop_to(const HsiCube& cube, int height, int width) {
    if (height > cube.height || width > cube.width)
        throw ShapeError("crop_to: target exceeds cube extent");
    HsiCube out;
    out.height = height;
    out.width = width;
    out.bands = cube.bands;
    out.values.resize(std::size_t(out.voxels()));
    for (int b = 0; b < cube.bands; ++b)
        for (int i = 0; i < height; ++i)
            std::memcpy(&out.values[std::size_t(((long long)b * height + i) * width)],
                        &cube.values[std::size_t(((long long)b * cube.height + i) * cube.width)],
                        std::size_t(width) * 4);
    return out;
}

HsiCube normalize(const HsiCube& cube) {
    HsiCube out = cube;
    const long long hw = (long long)cube.height * cube.width;
    for (int b = 0; b < cube.bands; ++b) {
        float* band = &out.values[std::size_t((long long)b * hw)];
        float lo = band[0], hi = band[0];
        double sum = 0.0;
        for (long long i = 0; i < hw; ++i) {
            lo = std::min(lo, band[i]);
            hi = std::max(hi, band[i]);
            sum += double(band[i]);
        }
        if (lo == hi) {
            std::fill(band, band + hw, 0.0f);
            continue;
        }
        const double mean = sum / double(hw);
        double var = 0.0;
        for (long long i = 0; i < hw; ++i) {
            const double d = double(band[i]) - mean;
            var += d * d;
        }
        const double inv = 1.0 / std::sqrt(var / double(hw));
        for (long long i = 0; i < hw; ++i) band[i] = float((double(band[i]) - mean) * inv);
    }
    return out;
}

std::pair<HsiCube, LabelRaster> synth_cube(std::uint64_t seed, int height, int width, int bands,
                                           int num_classes, const std::vector<double>& class_fractions) {
    if (height < 1 || width < 1 || bands < 1) throw ConfigError("synth_cube: dimensions must be positive");
    if (num_classes < 2) throw ConfigError("synth_cube: need at least 2 classes");
    if (int(class_fractions.size()) != num_classes)
        throw ConfigError("synth_cube: expected " + std::to_string(num_classes) + " fractions, got " +
                          std::to_string(class_fractions.size()));
    double total = 0.0;
    for (double f : class_fractions) {
        if (f <= 0.0) throw ConfigError("synth_cube: class fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-12) throw ConfigError("synth_cube: fractions sum to " + std::to_string(total) + " > 1");

    const long long hw = (long long)height * width;
    std::vector<long long> target(static_cast<std::size_t>(num_classes));
    long long assigned = 0;
    int largest = 0;
    for (int c = 0; c < num_classes; ++c) {
        target[std::size_t(c)] = std::max<long long>(1, llround(class_fractions[std::size_t(c)] * double(hw)));
        assigned += target[std::size_t(c)];
        if (target[std::size_t(c)] > target[std::size_t(largest)]) largest = c;
    }
    // rounding correction: full-coverage requests tile the grid exactly,
    // and the total can never exceed the grid
    if (total >= 1.0 - 1e-9 || assigned > hw) target[std::size_t(largest)] += hw - assigned;
    if (target[std::size_t(largest)] < 1) throw ConfigError("synth_cube: fractions leave no room for every class");

    Rng rng(seed);
    Rng grow_rng = rng.fork(1);
    Rng spectra_rng = rng.fork(2);
    Rng noise_rng = rng.fork(3);

    // contiguous blobs by round-robin breadth-first growth from random seeds
    std::vector<std::uint16_t> owner(std::size_t(hw), 0);
    std::vector<std::deque<long long>> frontier(std::size_t(num_classes) + 1);
    std::vector<long long> count(std::size_t(num_classes) + 1, 0);
    long long cursor = 0;

    auto claim = [&](int cls, long long p) {
        owner[std::size_t(p)] = std::uint16_t(cls);
        ++count[std::size_t(cls)];
        const long long i = p / width, j = p % width;
        if (j + 1 < width) frontier[std::size_t(cls)].push_back(p + 1);
        if (i + 1 < height) frontier[std::size_t(cls)].push_back(p + width);
        if (j > 0) frontier[std::size_t(cls)].push_back(p - 1);
        if (i > 0) frontier[std::size_t(cls)].push_back(p - width);
    };
    auto rescue_seed = [&](int cls) -> bool {
        for (long long step = 0; step < hw; ++step) {
            const long long p = (cursor + step) % hw;
            if (owner[std::size_t(p)] == 0) {
                cursor = (p + 1) % hw;
                claim(cls, p);
                return true;
            }
        }
        return false;
    };

    for (int c = 1; c <= num_classes; ++c) {
        long long p = (long long)grow_rng.next_below(std::uint64_t(hw));
        while (owner[std::size_t(p)] != 0) p = (long long)grow_rng.next_below(std::uint64_t(hw));
        claim(c, p);
    }
    bool pending = true;
    while (pending) {
        pending = false;
        for (int c = 1; c <= num_classes; ++c) {
            if (count[std::size_t(c)] >= target[std::size_t(c - 1)]) continue;
            pending = true;
            bool grew = false;
            auto& q = frontier[std::size_t(c)];
            while (!q.empty()) {
                const long long p = q.front();
                q.pop_front();
                if (owner[std::size_t(p)] != 0) continue;
                claim(c, p);
                grew = true;
                break;
            }
            if (!grew && !rescue_seed(c))
                throw ConfigError("synth_cube: grid exhausted before class targets were met");
        }
    }

    LabelRaster raster;
    raster.height = height;
    raster.width = width;
    raster.labels = std::move(owner);

    // smooth spectral signature per class (index 0 = background), with a
    // class-specific fundamental so no two signatures coincide
    std::vector<std::vector<double>> sig(std::size_t(num_classes) + 1,
                                         std::vector<double>(std::size_t(bands)));
    for (int c = 0; c <= num_classes; ++c) {
        const double dc = spectra_rng.next_uniform(-1.0, 1.0);
        double amp[3], freq[3], phase[3];
        for (int h = 0; h < 3; ++h) {
            amp[h] = spectra_rng.next_uniform(0.25, 0.9);
            freq[h] = spectra_rng.next_uniform(0.5, 2.5) * (h + 1);
            phase[h] = spectra_rng.next_uniform(0.0, 2.0 * std::numbers::pi);
        }
        for (int b = 0; b < bands; ++b) {
            const double u = double(b) / double(bands);
            double v = dc + 2.0 * std::cos(2.0 * std::numbers::pi * double(c + 1) * (u + 0.13));
            for (int h = 0; h < 3; ++h)
                v += amp[h] * std::sin(2.0 * std::numbers::pi * freq[h] * u + phase[h]);
            sig[std::size_t(c)][std::size_t(b)] = v;
        }
    }

    HsiCube cube;
    cube.height = height;
    cube.width = width;
    cube.bands = bands;
    cube.values.resize(std::size_t(cube.voxels()));
    const double noise = 0.05;
    for (int b = 0; b < bands; ++b)
        for (long long p = 0; p < hw; ++p) {
            const int cls = raster.labels[std::size_t(p)];
            cube.values[std::size_t((long long)b * hw + p)] =
                float(sig[std::size_t(cls)][std::size_t(b)] + noise * noise_rng.next_normal());
        }
    return {std::move(cube), std::move(raster)};
}

}  // namespace ssdgl
