#pragma once

// Transition memory: a FIFO ring buffer with uniform, bootstrap and
// prioritized (sum-tree) sampling.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "dispatchrl/environment.hpp"

namespace dispatchrl {

struct Transition {
    Observation observation;
    int action = 0;
    double reward = 0.0;
    Observation next_observation;
    bool terminal = false;
    bool truncated = false; // time-limit end; learners bootstrap through it
};

/// Binary tree of priority sums over a power-of-two leaf array. Every
/// internal node equals the sum of its children; the root is the total.
class SumTree {
public:
    explicit SumTree(std::size_t capacity);

    std::size_t capacity() const { return capacity_; }
    double total() const { return nodes_[1]; }
    double leaf(std::size_t index) const;
    void set_leaf(std::size_t index, double value);

    /// Index of the leaf whose cumulative range contains mass (in [0, total)).
    std::size_t find_prefix(double mass) const;

    /// True when every internal node equals the sum of its children exactly.
    bool internally_consistent() const;

private:
    std::size_t capacity_; // padded to a power of two
    std::vector<double> nodes_; // 1-based heap layout, nodes_[1] is the root
};

struct PrioritizedBatch {
    std::vector<Transition> transitions;
    std::vector<std::uint64_t> ids; // stable ids for update_priorities
    std::vector<double> weights;    // importance weights, max-normalised
};

class ReplayMemory {
public:
    /// Prioritization is enabled by alpha > 0 construction-time choice of
    /// mode; uniform memories ignore the priority machinery entirely.
    struct Options {
        std::size_t capacity = 100000;
        bool prioritized = false;
        double alpha = 0.6;            // priority exponent
        double priority_floor = 1e-5;  // added to |TD| so nothing is unsampleable
    };

    explicit ReplayMemory(const Options& options);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return options_.capacity; }
    bool prioritized() const { return options_.prioritized; }
    std::uint64_t total_pushed() const { return next_id_; }
    long stale_update_count() const { return stale_updates_; }

    /// Stores a transition, evicting the oldest at capacity. Prioritized
    /// memories give new entries the current maximum priority.
    void push(const Transition& transition);

    /// i.i.d. uniform draws with replacement. Throws if the memory is empty
    /// and batch_size > 0.
    std::vector<Transition> sample_uniform(std::size_t batch_size, std::mt19937_64& rng) const;

    /// Bootstrap resample for one ensemble member: uniform with replacement
    /// from the member's own random stream.
    std::vector<Transition> sample_bootstrap(std::size_t batch_size,
                                             std::mt19937_64& member_rng) const {
        return sample_uniform(batch_size, member_rng);
    }

    /// Stratified draws proportional to priority^alpha, with importance
    /// weights (N * P(i))^-beta normalised by the largest weight in the batch.
    PrioritizedBatch sample_prioritized(std::size_t batch_size, double beta,
                                        std::mt19937_64& rng) const;

    /// Sets priority (|td_error| + floor) for each id. Ids already evicted
    /// are ignored and counted.
    void update_priorities(const std::vector<std::uint64_t>& ids,
                           const std::vector<double>& td_errors);

    const Transition& at_slot(std::size_t slot) const { return storage_[slot]; }

    /// Debug dump: "slot,id,priority" CSV rows.
    void dump_priorities(std::ostream& out) const;

private:
    std::size_t slot_of(std::uint64_t id) const {
        return static_cast<std::size_t>(id % options_.capacity);
    }
    bool resident(std::uint64_t id) const {
        return id < next_id_ && next_id_ - id <= size_;
    }

    Options options_;
    std::vector<Transition> storage_;
    std::vector<double> priorities_; // raw |TD|+floor per slot
    SumTree tree_;                   // sums of priority^alpha
    std::size_t size_ = 0;
    std::uint64_t next_id_ = 0;
    double max_priority_ = 1.0;
    long stale_updates_ = 0;
};

} // namespace dispatchrl
