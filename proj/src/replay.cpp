#include "pmrl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pmrl {

RingBuffer::RingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("RingBuffer: capacity must be positive");
}

void RingBuffer::push(Experience exp) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(exp));
}

void store_experience(DualReplayBuffer& buffer, Experience exp) {
    if (exp.success) {
        buffer.success_buffer.push(std::move(exp));
    } else {
        buffer.failure_buffer.push(std::move(exp));
    }
}

std::vector<Experience> sample_uniform(const RingBuffer& buffer, std::size_t n, Rng& rng) {
    if (buffer.empty()) throw std::runtime_error("sample_uniform: buffer is empty");
    std::vector<Experience> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(buffer[rng.uniform_index(buffer.size())]);
    return out;
}

namespace {

void draw_with_replacement(const RingBuffer& buffer, std::size_t n, Rng& rng,
                           std::vector<Experience>& out) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(buffer[rng.uniform_index(buffer.size())]);
}

void draw_without_replacement_if_possible(const RingBuffer& buffer, std::size_t n, Rng& rng,
                                          std::vector<Experience>& out) {
    if (buffer.size() >= n) {
        for (std::size_t i : rng.sample_without_replacement(buffer.size(), n)) {
            out.push_back(buffer[i]);
        }
    } else {
        draw_with_replacement(buffer, n, rng, out);
    }
}

}  // namespace

std::vector<Experience> sample_dered(const DualReplayBuffer& buffer, std::size_t n,
                                     double balance, Rng& rng) {
    if (balance < 0.0 || balance > 1.0) {
        throw std::invalid_argument("sample_dered: balance must be in [0, 1]");
    }
    if (buffer.total_size() == 0) {
        throw std::runtime_error("sample_dered: both buffers are empty");
    }
    std::vector<Experience> out;
    out.reserve(n);
    if (buffer.success_buffer.empty()) {
        draw_without_replacement_if_possible(buffer.failure_buffer, n, rng, out);
    } else if (buffer.failure_buffer.empty()) {
        draw_with_replacement(buffer.success_buffer, n, rng, out);
    } else {
        const std::size_t n_success =
            static_cast<std::size_t>(std::ceil(balance * static_cast<double>(n)));
        draw_with_replacement(buffer.success_buffer, std::min(n_success, n), rng, out);
        draw_without_replacement_if_possible(buffer.failure_buffer, n - out.size(), rng, out);
    }
    rng.shuffle(out);
    return out;
}

PrioritizedBuffer::PrioritizedBuffer(std::size_t capacity, double alpha, double beta,
                                     double epsilon)
    : alpha(alpha), beta(beta), epsilon(epsilon), capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("PrioritizedBuffer: capacity must be positive");
    if (alpha < 0.0) throw std::invalid_argument("PrioritizedBuffer: alpha must be >= 0");
    if (epsilon <= 0.0) throw std::invalid_argument("PrioritizedBuffer: epsilon must be > 0");
}

void PrioritizedBuffer::push(Experience exp) {
    double seed_td = 1.0;
    for (double p : abs_td_) seed_td = std::max(seed_td, p);
    if (items_.size() == capacity_) {
        items_.pop_front();
        abs_td_.pop_front();
    }
    items_.push_back(std::move(exp));
    abs_td_.push_back(seed_td);
}

void PrioritizedBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                          const std::vector<double>& abs_td) {
    if (indices.size() != abs_td.size()) {
        throw std::invalid_argument("update_priorities: index and priority counts differ");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= items_.size()) {
            throw std::invalid_argument("update_priorities: index out of range");
        }
        if (!(abs_td[k] >= 0.0)) {
            throw std::invalid_argument("update_priorities: |td| must be non-negative");
        }
        abs_td_[indices[k]] = abs_td[k];
    }
}

PrioritizedSample sample_prioritized(const PrioritizedBuffer& buffer, std::size_t n, Rng& rng) {
    const std::size_t size = buffer.size();
    if (size == 0) throw std::runtime_error("sample_prioritized: buffer is empty");

    std::vector<double> cumulative(size);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        total += std::pow(buffer.priority(i) + buffer.epsilon, buffer.alpha);
        cumulative[i] = total;
    }

    PrioritizedSample sample;
    sample.batch.reserve(n);
    sample.indices.reserve(n);
    sample.weights.reserve(n);
    const double N = static_cast<double>(size);
    double max_weight = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = rng.uniform() * total;
        const std::size_t i = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const std::size_t idx = std::min(i, size - 1);
        const double p_first = cumulative[idx] - (idx == 0 ? 0.0 : cumulative[idx - 1]);
        const double prob = p_first / total;
        const double w = std::pow(N * prob, -buffer.beta);
        sample.batch.push_back(buffer[idx]);
        sample.indices.push_back(idx);
        sample.weights.push_back(w);
        max_weight = std::max(max_weight, w);
    }
    if (max_weight > 0.0) {
        for (double& w : sample.weights) w /= max_weight;
    }
    return sample;
}

DistortionMode parse_distortion_mode(const std::string& name) {
    if (name == "ratio_draw") return DistortionMode::ratio_draw;
    if (name == "per_experience") return DistortionMode::per_experience;
    throw std::invalid_argument("unknown distortion mode: " + name);
}

std::string distortion_mode_name(DistortionMode mode) {
    return mode == DistortionMode::ratio_draw ? "ratio_draw" : "per_experience";
}

std::size_t distort_batch(std::vector<Experience>& batch, const DistortionConfig& config,
                          const ActionSpace& space, Rng& rng) {
    if (config.lambda < 0.0 || config.lambda > 1.0) {
        throw std::invalid_argument("distort_batch: lambda must be in [0, 1]");
    }
    if (config.lambda == 0.0 || batch.empty()) return 0;
    std::size_t rewritten = 0;
    if (config.mode == DistortionMode::ratio_draw) {
        const double r = rng.uniform(0.0, config.lambda);
        const std::size_t m = static_cast<std::size_t>(
            std::floor(r * static_cast<double>(batch.size())));
        for (std::size_t pos : rng.sample_without_replacement(batch.size(), m)) {
            batch[pos].action_index = rng.uniform_index(space.size());
            ++rewritten;
        }
    } else {
        for (auto& exp : batch) {
            if (rng.uniform() < config.lambda) {
                exp.action_index = rng.uniform_index(space.size());
                ++rewritten;
            }
        }
    }
    return rewritten;
}

}  // namespace pmrl
