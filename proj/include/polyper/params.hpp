#pragma once

#include <map>
#include <string>
#include <vector>

#include "polyper/rng.hpp"
#include "polyper/tape.hpp"
#include "polyper/tensor.hpp"

namespace polyper {

/// Named parameter tensors in a stable registration order. The order is part
/// of the determinism contract: seeded init and checkpoint layout follow it.
template <typename T>
struct ParamStore {
    std::vector<std::string> order;
    std::map<std::string, Tensor<T>> tensors;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (tensors.count(name)) throw Error("parameter registered twice: " + name);
        order.push_back(name);
        return tensors.emplace(name, std::move(t)).first->second;
    }

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    Tensor<T>& get(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<T>& get(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }

    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& name : order) n += tensors.at(name).size();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& name : order) out.add(name, tensors.at(name).template cast<U>());
        return out;
    }
};

/// Per-forward binding of store parameters to tape leaves. Each parameter
/// becomes a leaf on first use; after backward() the leaf gradients are
/// collected back by name.
template <typename T>
class BoundParams {
public:
    BoundParams() = default;
    BoundParams(Tape<T>& tape, const ParamStore<T>& store) : tape_(&tape), store_(&store) {}

    int operator()(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        int id = tape_->param(store_->get(name));
        ids_.emplace(name, id);
        return id;
    }

    /// Sum leaf gradients into `grads` (allocating zero tensors on demand).
    void accumulate_grads(std::map<std::string, Tensor<T>>& grads) const {
        for (const auto& [name, id] : ids_) {
            const Tensor<T>& g = tape_->grad(id);
            auto it = grads.find(name);
            if (it == grads.end()) {
                grads.emplace(name, g);
            } else {
                for (std::int64_t i = 0; i < g.size(); ++i) it->second.v[i] += g.v[i];
            }
        }
    }

    const std::map<std::string, int>& ids() const { return ids_; }

private:
    Tape<T>* tape_ = nullptr;
    const ParamStore<T>* store_ = nullptr;
    std::map<std::string, int> ids_;
};

/// Glorot-uniform weight init; biases and temperatures start at zero.
template <typename T>
Tensor<T> glorot_uniform(Rng& rng, std::vector<int> shape, int fan_in, int fan_out) {
    Tensor<T> t(std::move(shape));
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : t.v) x = static_cast<T>(rng.uniform(-lim, lim));
    return t;
}

}  // namespace polyper
