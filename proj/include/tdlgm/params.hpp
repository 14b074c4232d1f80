#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdlgm/tensor.hpp"

namespace tdlgm {

// Named collection of tensors with deterministic (insertion) iteration order.
// Used both for trainable parameters and for gradients keyed by parameter name.
class ParamSet {
public:
    void add(const std::string& name, Tensor t) {
        if (index_.count(name))
            throw std::invalid_argument("param '" + name + "' already present");
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown param '" + name + "'");
        return entries_[it->second].second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown param '" + name + "'");
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::size_t coord_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.second.numel();
        return n;
    }

    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Gradients share the container: one tensor per parameter name, same shapes.
using GradientMap = ParamSet;

inline ParamSet merge_params(std::initializer_list<const ParamSet*> sets) {
    ParamSet out;
    for (const ParamSet* s : sets)
        for (const auto& [name, t] : s->entries()) out.add(name, t);
    return out;
}

inline ParamSet filter_prefix(const ParamSet& ps, const std::string& prefix) {
    ParamSet out;
    for (const auto& [name, t] : ps.entries())
        if (name.rfind(prefix, 0) == 0) out.add(name, t);
    return out;
}

}  // namespace tdlgm
