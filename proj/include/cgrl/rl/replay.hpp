#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "cgrl/core/error.hpp"
#include "cgrl/policy/qnet.hpp"

namespace cgrl::rl {

/// One replay element. The stored inputs carry the adjacency the policy saw
/// at collection time (causally gated when CGRL is active);
/// `physical_adjacency` keeps the ungated graph for the VGAE.
struct Transition {
  policy::PolicyInput state;
  policy::PolicyInput next_state;
  Tensor physical_adjacency;
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
};

/// Fixed-capacity ring buffer with strict FIFO eviction.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  const Transition& operator[](std::size_t i) const { return data_[i]; }

  /// Uniform sample of `batch` distinct indices; requires occupancy >= batch.
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    if (batch > data_.size()) throw StateError("replay: not enough transitions to sample");
    std::vector<std::size_t> idx(data_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(batch);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next eviction slot once full
  std::vector<Transition> data_;
};

}  // namespace cgrl::rl
