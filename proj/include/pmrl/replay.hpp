#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "pmrl/rl_env.hpp"
#include "pmrl/rng.hpp"

namespace pmrl {

struct Experience {
    EnvState state;
    std::size_t action_index = 0;
    double reward = 0.0;
    EnvState next_state;
    double fitness = 0.0;
    bool success = false;
    bool terminal = true;
};

// Bounded FIFO; index 0 is the oldest element.
class RingBuffer {
public:
    explicit RingBuffer(std::size_t capacity);

    void push(Experience exp);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const Experience& operator[](std::size_t i) const { return items_[i]; }

private:
    std::deque<Experience> items_;
    std::size_t capacity_;
};

// Success and failure experiences kept apart so batches can rebalance them.
struct DualReplayBuffer {
    RingBuffer success_buffer;
    RingBuffer failure_buffer;
    double min_fitness;

    DualReplayBuffer(std::size_t capacity_per_buffer, double min_fitness_threshold)
        : success_buffer(capacity_per_buffer),
          failure_buffer(capacity_per_buffer),
          min_fitness(min_fitness_threshold) {}

    std::size_t total_size() const { return success_buffer.size() + failure_buffer.size(); }
};

void store_experience(DualReplayBuffer& buffer, Experience exp);

std::vector<Experience> sample_uniform(const RingBuffer& buffer, std::size_t n, Rng& rng);

// ceil(balance*n) successes drawn with replacement, the rest failures drawn
// without replacement when the failure side is large enough. One empty side
// routes the whole batch to the other. Output order is shuffled.
std::vector<Experience> sample_dered(const DualReplayBuffer& buffer, std::size_t n,
                                     double balance, Rng& rng);

struct PrioritizedBuffer {
    explicit PrioritizedBuffer(std::size_t capacity, double alpha = 0.6, double beta = 0.4,
                               double epsilon = 1e-6);

    void push(Experience exp);  // new elements get the current max |td|
    void update_priorities(const std::vector<std::size_t>& indices,
                           const std::vector<double>& abs_td);
    std::size_t size() const { return items_.size(); }
    const Experience& operator[](std::size_t i) const { return items_[i]; }
    double priority(std::size_t i) const { return abs_td_[i]; }

    double alpha;
    double beta;  // importance exponent, annealed by the caller
    double epsilon;

private:
    std::deque<Experience> items_;
    std::deque<double> abs_td_;
    std::size_t capacity_;
};

struct PrioritizedSample {
    std::vector<Experience> batch;
    std::vector<std::size_t> indices;
    std::vector<double> weights;  // importance weights, max-normalized
};

PrioritizedSample sample_prioritized(const PrioritizedBuffer& buffer, std::size_t n, Rng& rng);

enum class DistortionMode { ratio_draw, per_experience };

DistortionMode parse_distortion_mode(const std::string& name);
std::string distortion_mode_name(DistortionMode mode);

struct DistortionConfig {
    double lambda = 0.0;  // 0 disables distortion entirely
    DistortionMode mode = DistortionMode::ratio_draw;
};

// Replaces the action index of some batch entries with uniform draws from the
// action space; every other field is left alone. ratio_draw picks one batch
// fraction r ~ U(0, lambda) and distorts floor(r*|batch|) distinct positions;
// per_experience flips each entry independently with probability lambda.
// Returns the number of positions rewritten.
std::size_t distort_batch(std::vector<Experience>& batch, const DistortionConfig& config,
                          const ActionSpace& space, Rng& rng);

}  // namespace pmrl
