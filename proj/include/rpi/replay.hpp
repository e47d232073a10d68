#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "rpi/cartpole.hpp"
#include "rpi/rng.hpp"

namespace rpi {

using Obs = std::array<double, 4>;

inline Obs obs_of(const EnvState& s) { return {s.x, s.x_dot, s.theta, s.theta_dot}; }

/// What the learner keeps per step. `terminated` refers to real failure;
/// step-cap truncation is not stored because bootstrapping continues
/// through it.
struct StoredTransition {
  Obs obs{};
  double action = 0.0;
  double reward = 0.0;
  Obs next_obs{};
  bool terminated = false;
};

/// Fixed-capacity FIFO ring. Insertion beyond capacity overwrites the oldest
/// entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
    storage_.reserve(static_cast<std::size_t>(capacity));
  }

  void push(const StoredTransition& t) {
    if (size() < capacity_) {
      storage_.push_back(t);
    } else {
      storage_[static_cast<std::size_t>(cursor_)] = t;
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  int size() const { return static_cast<int>(storage_.size()); }
  int capacity() const { return capacity_; }

  const StoredTransition& operator[](int i) const { return storage_[static_cast<std::size_t>(i)]; }

  /// Uniform sample with replacement.
  void sample(int batch, Rng& rng, std::vector<int>& out) const {
    out.resize(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) out[static_cast<std::size_t>(i)] = rng.uniform_int(size());
  }

  /// Entries ordered oldest first (test hook for the FIFO property).
  std::vector<StoredTransition> snapshot_fifo() const {
    std::vector<StoredTransition> out;
    out.reserve(storage_.size());
    int start = size() < capacity_ ? 0 : cursor_;
    for (int i = 0; i < size(); ++i)
      out.push_back(storage_[static_cast<std::size_t>((start + i) % capacity_)]);
    return out;
  }

 private:
  int capacity_;
  int cursor_ = 0;
  std::vector<StoredTransition> storage_;
};

}  // namespace rpi
