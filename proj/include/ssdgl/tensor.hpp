#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssdgl/errors.hpp"

namespace ssdgl {

/// Dimension sizes, row-major, last axis fastest. Rank 0 = scalar.
using Shape = std::vector<int>;

template <class Scalar>
using AlignedVec = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

inline long long numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline void check_positive_dims(const Shape& s, const char* who) {
    for (int d : s)
        if (d <= 0) throw ShapeError(std::string(who) + ": non-positive dimension in " + to_string(s));
}

template <class Scalar>
class Tape;

/// Dense N-dimensional array of real values.
///
/// The element buffer is shared and treated as immutable once an operation
/// has produced the tensor; `raw()` exists for construction, deserialization
/// and the trainer's parameter update, which owns its tensors exclusively.
/// A tensor may carry a node id on a Tape, in which case gradients flow
/// through it during the backward sweep.
template <class Scalar>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        check_positive_dims(shape, "Tensor");
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = std::make_shared<AlignedVec<Scalar>>(std::size_t(numel(t.shape_)), Scalar(0));
        return t;
    }

    static Tensor full(Shape shape, Scalar v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.buf_->begin(), t.buf_->end(), v);
        return t;
    }

    static Tensor from(Shape shape, const std::vector<Scalar>& vals) {
        Tensor t = zeros(std::move(shape));
        if (std::size_t(t.size()) != vals.size())
            throw ShapeError("Tensor: " + std::to_string(vals.size()) + " values for shape " +
                             to_string(t.shape_));
        std::copy(vals.begin(), vals.end(), t.buf_->begin());
        return t;
    }

    static Tensor scalar_value(Scalar v) {
        Tensor t = zeros(Shape{});
        (*t.buf_)[0] = v;
        return t;
    }

    bool defined() const { return buf_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int dim(int i) const { return shape_[std::size_t(i)]; }
    long long size() const { return buf_ ? (long long)buf_->size() : 0; }

    const Scalar* data() const { return buf_->data(); }
    Scalar* raw() { return buf_->data(); }
    const std::shared_ptr<AlignedVec<Scalar>>& buffer() const { return buf_; }

    Scalar item() const {
        if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not scalar");
        return (*buf_)[0];
    }

    Scalar at(std::initializer_list<int> idx) const {
        if (int(idx.size()) != rank()) throw ShapeError("at: index rank mismatch");
        long long off = 0;
        int axis = 0;
        for (int i : idx) {
            off = off * shape_[std::size_t(axis)] + i;
            ++axis;
        }
        return (*buf_)[std::size_t(off)];
    }

    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() {
        return {buf_->data(), (Eigen::Index)buf_->size()};
    }
    Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() const {
        return {buf_->data(), (Eigen::Index)buf_->size()};
    }

    /// Same buffer (and tape node, if any) under a new shape.
    Tensor reshaped(Shape shape) const {
        if (numel(shape) != size())
            throw ShapeError("reshape: " + to_string(shape_) + " -> " + to_string(shape) +
                             " changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<AlignedVec<Scalar>>(*buf_);
        return t;
    }

    Tape<Scalar>* tape() const { return tape_; }
    int node() const { return node_; }

private:
    Shape shape_;
    std::shared_ptr<AlignedVec<Scalar>> buf_;
    Tape<Scalar>* tape_ = nullptr;
    int node_ = -1;

    friend class Tape<Scalar>;
};

/// Result of a backward sweep: one gradient per watched tensor, with the
/// watched tensor's shape.
template <class Scalar>
class Gradients {
public:
    const Tensor<Scalar>& at(const Tensor<Scalar>& watched) const {
        auto it = by_node_.find(watched.node());
        if (it == by_node_.end())
            throw ShapeError("Gradients: tensor was not watched on the swept tape");
        return it->second;
    }
    bool contains(const Tensor<Scalar>& t) const { return by_node_.count(t.node()) > 0; }
    std::size_t count() const { return by_node_.size(); }

private:
    std::unordered_map<int, Tensor<Scalar>> by_node_;
    friend class Tape<Scalar>;
};

/// Ordered record of differentiable operations.
///
/// Operations attach a node to each output they produce under the tape and
/// push one backward step; `backward()` replays the steps in reverse,
/// accumulating gradient buffers per node. A tape can be swept exactly once.
template <class Scalar>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Mark a tensor as a parameter: its gradient is materialized by
    /// backward(). Watching the same buffer twice returns the same node.
    Tensor<Scalar> watch(const Tensor<Scalar>& t) {
        if (!t.defined()) throw ShapeError("watch: undefined tensor");
        auto it = watched_by_buf_.find(t.buffer().get());
        Tensor<Scalar> alias = t;
        if (it != watched_by_buf_.end()) {
            alias.node_ = it->second;
            alias.tape_ = this;
            return alias;
        }
        alias.node_ = new_node(t.size());
        alias.tape_ = this;
        watched_by_buf_.emplace(t.buffer().get(), alias.node_);
        watched_.push_back({alias.node_, t.shape()});
        return alias;
    }

    // --- recording interface for operation implementations ---

    /// Give `out` a fresh node on this tape.
    void attach(Tensor<Scalar>& out) {
        out.tape_ = this;
        out.node_ = new_node(out.size());
    }

    void push_step(std::function<void()> step) { steps_.push_back(std::move(step)); }

    /// Gradient of a node during the sweep; nullptr when nothing has been
    /// accumulated (treat as all-zero and skip work).
    const Scalar* grad_read(int node) const {
        const Slot& s = slots_[std::size_t(node)];
        return s.live ? s.g.data() : nullptr;
    }

    /// Accumulation buffer for a node, allocated to zeros on first use.
    AlignedVec<Scalar>& grad_accum(int node) {
        Slot& s = slots_[std::size_t(node)];
        if (!s.live) {
            s.g.assign(std::size_t(s.size), Scalar(0));
            s.live = true;
        }
        return s.g;
    }

    bool swept() const { return swept_; }

    /// Reverse sweep from a scalar loss. Rejects non-scalar losses, losses
    /// recorded elsewhere, and repeated sweeps of the same recording.
    Gradients<Scalar> backward(const Tensor<Scalar>& loss) {
        if (loss.size() != 1 || loss.rank() != 0)
            throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
        if (loss.tape() != this || loss.node() < 0)
            throw ShapeError("backward: loss was not recorded on this tape");
        if (swept_)
            throw std::logic_error("backward: tape already swept; re-record the computation");
        grad_accum(loss.node())[0] = Scalar(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        swept_ = true;

        Gradients<Scalar> out;
        for (const auto& w : watched_) {
            Tensor<Scalar> g = Tensor<Scalar>::zeros(w.shape);
            const Slot& s = slots_[std::size_t(w.node)];
            if (s.live) std::copy(s.g.begin(), s.g.end(), g.raw());
            out.by_node_.emplace(w.node, std::move(g));
        }
        return out;
    }

private:
    struct Slot {
        AlignedVec<Scalar> g;
        long long size = 0;
        bool live = false;
    };
    struct Watched {
        int node;
        Shape shape;
    };

    int new_node(long long size) {
        slots_.push_back(Slot{{}, size, false});
        return int(slots_.size()) - 1;
    }

    std::vector<Slot> slots_;
    std::vector<std::function<void()>> steps_;
    std::vector<Watched> watched_;
    std::unordered_map<const void*, int> watched_by_buf_;
    bool swept_ = false;
};

template <class Scalar>
Gradients<Scalar> backward(const Tensor<Scalar>& loss, Tape<Scalar>& tape) {
    return tape.backward(loss);
}

/// Common tape of a set of operands. All recorded operands must share one
/// tape; constants (no tape) mix freely.
template <class Scalar>
Tape<Scalar>* common_tape(std::initializer_list<const Tensor<Scalar>*> ts) {
    Tape<Scalar>* tp = nullptr;
    for (const Tensor<Scalar>* t : ts) {
        if (!t->defined() || t->tape() == nullptr) continue;
        if (tp == nullptr)
            tp = t->tape();
        else if (tp != t->tape())
            throw ShapeError("operands recorded on different tapes");
    }
    return tp;
}

}  // namespace ssdgl
