#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssdgl/tensor.hpp"

namespace ssdgl {

/// Named collection of learnable tensors. Iteration follows insertion
/// order, which is also the serialization order.
template <class Scalar>
class ParamStore {
public:
    void add(const std::string& name, Tensor<Scalar> t) {
        if (index_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
        index_.emplace(name, items_.size());
        items_.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const Tensor<Scalar>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
        return items_[it->second].second;
    }
    Tensor<Scalar>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
        return items_[it->second].second;
    }

    std::size_t count() const { return items_.size(); }
    long long total_elements() const {
        long long n = 0;
        for (const auto& [k, v] : items_) n += v.size();
        return n;
    }
    const std::vector<std::pair<std::string, Tensor<Scalar>>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor<Scalar>>>& items() { return items_; }

    /// Recording aliases of every parameter on `tape`; shapes and buffers
    /// are shared with this store.
    ParamStore watched(Tape<Scalar>& tape) const {
        ParamStore out;
        for (const auto& [name, t] : items_) out.add(name, tape.watch(t));
        return out;
    }

    template <class T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& [name, t] : items_) {
            Tensor<T> c = Tensor<T>::zeros(t.shape());
            const Scalar* src = t.data();
            T* dst = c.raw();
            for (long long i = 0; i < t.size(); ++i) dst[i] = T(src[i]);
            out.add(name, std::move(c));
        }
        return out;
    }

private:
    std::vector<std::pair<std::string, Tensor<Scalar>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// --- SSDM container --------------------------------------------------------
// "SSDM", u32 version=1, a leading text block (u32 length + key=value
// lines), u32 tensor count; per tensor: u32 name length, name bytes,
// u32 rank, u32 dims..., f32 little-endian payload.

void save_params(const ParamStore<float>& store, const std::string& config_text,
                 const std::string& path);

struct LoadedParams {
    ParamStore<float> store;
    std::string config_text;
};

LoadedParams load_params(const std::string& path);

}  // namespace ssdgl
