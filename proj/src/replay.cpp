#include "dispatchrl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace dispatchrl {

namespace {

std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

} // namespace

SumTree::SumTree(std::size_t capacity)
    : capacity_(next_power_of_two(std::max<std::size_t>(capacity, 1))),
      nodes_(2 * capacity_, 0.0) {}

double SumTree::leaf(std::size_t index) const {
    return nodes_[capacity_ + index];
}

void SumTree::set_leaf(std::size_t index, double value) {
    if (index >= capacity_)
        throw std::out_of_range("sum tree leaf index out of range");
    std::size_t node = capacity_ + index;
    nodes_[node] = value;
    for (node /= 2; node >= 1; node /= 2)
        nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

bool SumTree::internally_consistent() const {
    for (std::size_t node = 1; node < capacity_; ++node)
        if (nodes_[node] != nodes_[2 * node] + nodes_[2 * node + 1])
            return false;
    return true;
}

std::size_t SumTree::find_prefix(double mass) const {
    std::size_t node = 1;
    while (node < capacity_) {
        const double left = nodes_[2 * node];
        if (mass < left) {
            node = 2 * node;
        } else {
            mass -= left;
            node = 2 * node + 1;
        }
    }
    return node - capacity_;
}

ReplayMemory::ReplayMemory(const Options& options)
    : options_(options), tree_(options.capacity) {
    if (options_.capacity == 0)
        throw std::invalid_argument("replay capacity must be positive");
    storage_.resize(options_.capacity);
    priorities_.assign(options_.capacity, 0.0);
}

void ReplayMemory::push(const Transition& transition) {
    const std::size_t slot = slot_of(next_id_);
    storage_[slot] = transition;
    if (options_.prioritized) {
        priorities_[slot] = max_priority_;
        tree_.set_leaf(slot, std::pow(max_priority_, options_.alpha));
    }
    ++next_id_;
    size_ = std::min(size_ + 1, options_.capacity);
}

std::vector<Transition> ReplayMemory::sample_uniform(std::size_t batch_size,
                                                     std::mt19937_64& rng) const {
    if (batch_size == 0)
        return {};
    if (size_ == 0)
        throw std::runtime_error("cannot sample from an empty replay memory");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    const std::uint64_t oldest = next_id_ - size_;
    for (std::size_t i = 0; i < batch_size; ++i)
        batch.push_back(storage_[slot_of(oldest + pick(rng))]);
    return batch;
}

PrioritizedBatch ReplayMemory::sample_prioritized(std::size_t batch_size, double beta,
                                                  std::mt19937_64& rng) const {
    if (!options_.prioritized)
        throw std::logic_error("memory was not built in prioritized mode");
    if (size_ == 0)
        throw std::runtime_error("cannot sample from an empty replay memory");
    PrioritizedBatch batch;
    if (batch_size == 0)
        return batch;

    const double total = tree_.total();
    const double segment = total / static_cast<double>(batch_size);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    batch.transitions.reserve(batch_size);
    batch.ids.reserve(batch_size);
    batch.weights.reserve(batch_size);
    std::vector<double> probabilities;
    probabilities.reserve(batch_size);
    const std::uint64_t oldest = next_id_ - size_;
    for (std::size_t i = 0; i < batch_size; ++i) {
        // One draw per equal-mass segment (stratified).
        const double mass =
            std::min((i + unit(rng)) * segment, std::nextafter(total, 0.0));
        std::size_t slot = tree_.find_prefix(mass);
        if (slot >= options_.capacity || priorities_[slot] <= 0.0) {
            // Numerical edge at segment boundaries: fall back to the newest slot.
            slot = slot_of(next_id_ - 1);
        }
        const std::uint64_t id =
            oldest + (slot + options_.capacity - slot_of(oldest)) % options_.capacity;
        batch.transitions.push_back(storage_[slot]);
        batch.ids.push_back(id);
        probabilities.push_back(tree_.leaf(slot) / total);
    }
    double max_weight = 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) {
        const double w =
            std::pow(static_cast<double>(size_) * probabilities[i], -beta);
        batch.weights.push_back(w);
        max_weight = std::max(max_weight, w);
    }
    for (double& w : batch.weights)
        w /= max_weight;
    return batch;
}

void ReplayMemory::update_priorities(const std::vector<std::uint64_t>& ids,
                                     const std::vector<double>& td_errors) {
    if (!options_.prioritized)
        throw std::logic_error("memory was not built in prioritized mode");
    if (ids.size() != td_errors.size())
        throw std::invalid_argument("ids and td_errors must have equal length");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!resident(ids[i])) {
            ++stale_updates_;
            continue;
        }
        const double priority = std::fabs(td_errors[i]) + options_.priority_floor;
        const std::size_t slot = slot_of(ids[i]);
        priorities_[slot] = priority;
        tree_.set_leaf(slot, std::pow(priority, options_.alpha));
        max_priority_ = std::max(max_priority_, priority);
    }
}

void ReplayMemory::dump_priorities(std::ostream& out) const {
    out << "slot,id,priority\n";
    const std::uint64_t oldest = next_id_ - size_;
    for (std::uint64_t id = oldest; id < next_id_; ++id) {
        const std::size_t slot = slot_of(id);
        out << slot << "," << id << "," << priorities_[slot] << "\n";
    }
}

} // namespace dispatchrl
