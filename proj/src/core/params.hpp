// Named parameter registry shared by models, optimizers and checkpoints.
//
// Entries keep insertion order so optimizer state, checkpoint layout and
// gradient reports stay aligned across runs. Non-trainable entries carry
// buffers such as batch-norm running statistics.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/tensor.hpp"
#include "util/error.hpp"

namespace acwm::core {

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

class ParamSet {
public:
    Tensor& add(std::string name, Tensor t, bool trainable = true) {
        ACWM_CHECK(t.defined(), invalid_argument, "ParamSet: undefined tensor for '" + name + "'");
        ACWM_CHECK(!index_.count(name), invalid_argument, "ParamSet: duplicate name '" + name + "'");
        t.set_requires_grad(trainable);
        index_.emplace(name, entries_.size());
        entries_.push_back({std::move(name), std::move(t), trainable});
        return entries_.back().tensor;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        ACWM_CHECK(it != index_.end(), not_found, "ParamSet: no parameter '" + name + "'");
        return entries_[it->second].tensor;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        ACWM_CHECK(it != index_.end(), not_found, "ParamSet: no parameter '" + name + "'");
        return entries_[it->second].tensor;
    }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    // Absorbs every entry of `other` under "<prefix><name>".
    void adopt(const ParamSet& other, const std::string& prefix) {
        for (const auto& e : other.entries()) add(prefix + e.name, e.tensor, e.trainable);
    }

    int64_t trainable_numel() const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (e.trainable) n += e.tensor.numel();
        return n;
    }
    int64_t total_numel() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_)
            if (e.trainable) e.tensor.zero_grad();
    }

    // Freezing keeps the entry (so checkpoints still carry it) but detaches it
    // from autodiff and from optimizer updates.
    void set_trainable(const std::string& name, bool trainable) {
        auto it = index_.find(name);
        ACWM_CHECK(it != index_.end(), not_found, "ParamSet: no parameter '" + name + "'");
        entries_[it->second].trainable = trainable;
        entries_[it->second].tensor.set_requires_grad(trainable);
    }
    void freeze_all() {
        for (auto& e : entries_) {
            e.trainable = false;
            e.tensor.set_requires_grad(false);
        }
    }

    std::vector<float> flatten_values() const {
        std::vector<float> out;
        out.reserve(static_cast<size_t>(total_numel()));
        for (const auto& e : entries_)
            out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
        return out;
    }
    void unflatten_values(const std::vector<float>& flat) {
        ACWM_CHECK(static_cast<int64_t>(flat.size()) == total_numel(), invalid_argument,
                   "ParamSet: flat buffer size mismatch");
        size_t off = 0;
        for (auto& e : entries_) {
            std::copy(flat.begin() + off, flat.begin() + off + e.tensor.values().size(),
                      e.tensor.values().begin());
            off += e.tensor.values().size();
        }
    }

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace acwm::core
