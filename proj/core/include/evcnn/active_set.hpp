#pragma once

#include <cstddef>
#include <vector>

namespace evcnn {

/// Unordered set of flat positions with O(1) insert/erase and dense iteration.
class ActiveSet {
public:
    ActiveSet() = default;
    explicit ActiveSet(std::size_t capacity) : slot_(capacity, kAbsent) {}

    void set(std::size_t p, bool active) {
        if (active) insert(p);
        else erase(p);
    }
    void insert(std::size_t p) {
        if (slot_[p] != kAbsent) return;
        slot_[p] = items_.size();
        items_.push_back(p);
    }
    void erase(std::size_t p) {
        const std::size_t s = slot_[p];
        if (s == kAbsent) return;
        const std::size_t last = items_.back();
        items_[s] = last;
        slot_[last] = s;
        items_.pop_back();
        slot_[p] = kAbsent;
    }
    bool contains(std::size_t p) const { return slot_[p] != kAbsent; }
    std::size_t size() const { return items_.size(); }
    const std::vector<std::size_t>& items() const { return items_; }

private:
    static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> slot_;
    std::vector<std::size_t> items_;
};

}  // namespace evcnn
