#include "ssdgl/params.hpp"

#include <cstring>
#include <fstream>

#include "ssdgl/errors.hpp"

namespace ssdgl {

namespace {

void put_u32(std::vector<char>& b, std::uint32_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char((v >> 8) & 0xff));
    b.push_back(char((v >> 16) & 0xff));
    b.push_back(char((v >> 24) & 0xff));
}

struct Reader {
    const std::vector<char>& b;
    std::size_t off = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (off + n > b.size())
            throw IoError("'" + path + "': truncated, needed " + std::to_string(off + n) +
                          " bytes, file has " + std::to_string(b.size()));
    }
    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(b.data() + off);
        off += 4;
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
               std::uint32_t(p[3]) << 24;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(b.data() + off, n);
        off += n;
        return s;
    }
    float f32() {
        const std::uint32_t u = u32();
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }
};

}  // namespace

void save_params(const ParamStore<float>& store, const std::string& config_text,
                 const std::string& path) {
    std::vector<char> b;
    b.insert(b.end(), {'S', 'S', 'D', 'M'});
    put_u32(b, 1);
    put_u32(b, std::uint32_t(config_text.size()));
    b.insert(b.end(), config_text.begin(), config_text.end());
    put_u32(b, std::uint32_t(store.count()));
    for (const auto& [name, t] : store.items()) {
        put_u32(b, std::uint32_t(name.size()));
        b.insert(b.end(), name.begin(), name.end());
        put_u32(b, std::uint32_t(t.rank()));
        for (int d : t.shape()) put_u32(b, std::uint32_t(d));
        const float* v = t.data();
        for (long long i = 0; i < t.size(); ++i) {
            std::uint32_t u;
            std::memcpy(&u, &v[i], 4);
            put_u32(b, u);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(b.data(), std::streamsize(b.size()));
    if (!out) throw IoError("write failed on '" + path + "'");
}

LoadedParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (b.size() < 4 || std::memcmp(b.data(), "SSDM", 4) != 0)
        throw IoError("'" + path + "': bad magic, expected SSDM");
    Reader r{b, 4, path};
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("'" + path + "': unsupported SSDM version " + std::to_string(version));
    LoadedParams out;
    out.config_text = r.str(r.u32());
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = int(r.u32());
            if (shape[d] <= 0) throw IoError("'" + path + "': non-positive dimension in tensor '" + name + "'");
        }
        Tensor<float> t = Tensor<float>::zeros(shape);
        float* v = t.raw();
        for (long long e = 0; e < t.size(); ++e) v[e] = r.f32();
        out.store.add(name, std::move(t));
    }
    if (r.off != b.size())
        throw IoError("'" + path + "': " + std::to_string(b.size() - r.off) + " trailing bytes");
    return out;
}

}  // namespace ssdgl
