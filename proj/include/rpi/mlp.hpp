#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpi/rng.hpp"

namespace rpi {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class OutputActivation { Identity, Tanh };

/// Two-hidden-layer MLP shape. Hidden activation is ReLU throughout; the
/// output is linear for critics and tanh for actors.
struct MlpSpec {
  int input_dim = 1;
  int hidden1 = 8;
  int hidden2 = 8;
  int output_dim = 1;
  OutputActivation output_activation = OutputActivation::Identity;

  void validate() const {
    if (input_dim < 1 || hidden1 < 1 || hidden2 < 1 || output_dim < 1)
      throw std::invalid_argument("MlpSpec: all dimensions must be >= 1");
  }

  std::int64_t param_count() const {
    return static_cast<std::int64_t>(hidden1) * input_dim + hidden1 +
           static_cast<std::int64_t>(hidden2) * hidden1 + hidden2 +
           static_cast<std::int64_t>(output_dim) * hidden2 + output_dim;
  }

  bool operator==(const MlpSpec&) const = default;
};

/// Parameters in one flat buffer, ordered W1 | b1 | W2 | b2 | W3 | b3 with
/// row-major weight matrices of shape (out x in). The flat layout is what
/// Adam and the checkpoint format operate on.
struct MlpParams {
  MlpSpec spec;
  std::vector<double> data;

  // offsets into data
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return w1() + static_cast<std::size_t>(spec.hidden1) * spec.input_dim; }
  std::size_t w2() const { return b1() + spec.hidden1; }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(spec.hidden2) * spec.hidden1; }
  std::size_t w3() const { return b2() + spec.hidden2; }
  std::size_t b3() const { return w3() + static_cast<std::size_t>(spec.output_dim) * spec.hidden2; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

namespace detail {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using MutVecMap = Eigen::Map<Eigen::RowVectorXd>;

}  // namespace detail

/// Activations kept for the backward pass. `out` is post-activation.
struct ForwardCache {
  RowMatrix input;
  RowMatrix a1;
  RowMatrix a2;
  RowMatrix out;
};

inline void check_batch(const MlpSpec& spec, const RowMatrix& batch) {
  if (batch.cols() != spec.input_dim)
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, expected " + std::to_string(spec.input_dim));
}

inline ForwardCache forward_cached(const MlpParams& p, const RowMatrix& batch) {
  check_batch(p.spec, batch);
  const MlpSpec& s = p.spec;
  detail::ConstMap W1(p.data.data() + p.w1(), s.hidden1, s.input_dim);
  detail::ConstVecMap B1(p.data.data() + p.b1(), s.hidden1);
  detail::ConstMap W2(p.data.data() + p.w2(), s.hidden2, s.hidden1);
  detail::ConstVecMap B2(p.data.data() + p.b2(), s.hidden2);
  detail::ConstMap W3(p.data.data() + p.w3(), s.output_dim, s.hidden2);
  detail::ConstVecMap B3(p.data.data() + p.b3(), s.output_dim);

  ForwardCache c;
  c.input = batch;
  c.a1 = ((batch * W1.transpose()).rowwise() + B1).cwiseMax(0.0);
  c.a2 = ((c.a1 * W2.transpose()).rowwise() + B2).cwiseMax(0.0);
  c.out = (c.a2 * W3.transpose()).rowwise() + B3;
  if (s.output_activation == OutputActivation::Tanh)
    c.out = c.out.array().tanh().matrix();
  return c;
}

inline RowMatrix forward(const MlpParams& p, const RowMatrix& batch) {
  return forward_cached(p, batch).out;
}

/// Reverse-mode gradients for every parameter given d(loss)/d(output).
/// The ReLU subgradient at exactly zero is zero. When `input_grad` is given
/// it receives d(loss)/d(input), which the deterministic policy gradient
/// needs to push through the actor.
inline std::vector<double> backward(const MlpParams& p, const ForwardCache& c,
                                    const RowMatrix& output_grad,
                                    RowMatrix* input_grad = nullptr) {
  const MlpSpec& s = p.spec;
  if (output_grad.rows() != c.out.rows() || output_grad.cols() != c.out.cols())
    throw std::invalid_argument("backward: output_grad shape mismatch");

  detail::ConstMap W2(p.data.data() + p.w2(), s.hidden2, s.hidden1);
  detail::ConstMap W3(p.data.data() + p.w3(), s.output_dim, s.hidden2);

  RowMatrix d_out = output_grad;
  if (s.output_activation == OutputActivation::Tanh)
    d_out = d_out.cwiseProduct((1.0 - c.out.array().square()).matrix());

  std::vector<double> grads(p.data.size(), 0.0);
  detail::MutMap dW3(grads.data() + p.w3(), s.output_dim, s.hidden2);
  detail::MutVecMap dB3(grads.data() + p.b3(), s.output_dim);
  detail::MutMap dW2(grads.data() + p.w2(), s.hidden2, s.hidden1);
  detail::MutVecMap dB2(grads.data() + p.b2(), s.hidden2);
  detail::MutMap dW1(grads.data() + p.w1(), s.hidden1, s.input_dim);
  detail::MutVecMap dB1(grads.data() + p.b1(), s.hidden1);

  dW3 = d_out.transpose() * c.a2;
  dB3 = d_out.colwise().sum();

  RowMatrix d_a2 = d_out * W3;
  RowMatrix d_z2 = d_a2.cwiseProduct((c.a2.array() > 0.0).cast<double>().matrix());
  dW2 = d_z2.transpose() * c.a1;
  dB2 = d_z2.colwise().sum();

  RowMatrix d_a1 = d_z2 * W2;
  RowMatrix d_z1 = d_a1.cwiseProduct((c.a1.array() > 0.0).cast<double>().matrix());
  dW1 = d_z1.transpose() * c.input;
  dB1 = d_z1.colwise().sum();

  if (input_grad) {
    detail::ConstMap W1(p.data.data() + p.w1(), s.hidden1, s.input_dim);
    *input_grad = d_z1 * W1;
  }
  return grads;
}

/// Adam accumulators; shapes mirror the flat parameter buffer.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update, in place.
inline void adam_step(MlpParams& params, const std::vector<double>& grads,
                      AdamState& state, double lr) {
  if (grads.size() != params.data.size() || state.m.size() != params.data.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

/// He-uniform init for the ReLU layers (bound sqrt(6 / fan_in)), uniform
/// +-1/sqrt(fan_in) for the output layer, zero biases. Weights are drawn in
/// flat buffer order, so a seed pins the exact parameter vector.
inline MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  p.data.assign(static_cast<std::size_t>(spec.param_count()), 0.0);

  auto fill = [&](std::size_t offset, std::size_t count, double bound) {
    for (std::size_t i = 0; i < count; ++i)
      p.data[offset + i] = rng.uniform(-bound, bound);
  };
  fill(p.w1(), static_cast<std::size_t>(spec.hidden1) * spec.input_dim,
       std::sqrt(6.0 / spec.input_dim));
  fill(p.w2(), static_cast<std::size_t>(spec.hidden2) * spec.hidden1,
       std::sqrt(6.0 / spec.hidden1));
  fill(p.w3(), static_cast<std::size_t>(spec.output_dim) * spec.hidden2,
       1.0 / std::sqrt(static_cast<double>(spec.hidden2)));
  return p;
}

// --- Checkpoints --------------------------------------------------------------
//
// Flat binary layout: 8-byte magic "RPICKPT1", five int64 spec fields
// (input, hidden1, hidden2, output, activation), int64 parameter count, then
// the raw little-endian doubles. Written on little-endian hosts only, which
// covers every supported target.

inline void save_params(const MlpParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out.write("RPICKPT1", 8);
  std::int64_t header[6] = {p.spec.input_dim, p.spec.hidden1, p.spec.hidden2,
                            p.spec.output_dim,
                            p.spec.output_activation == OutputActivation::Tanh ? 1 : 0,
                            static_cast<std::int64_t>(p.data.size())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(p.data.data()),
            static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

inline MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "RPICKPT1", 8) != 0)
    throw std::runtime_error("load_params: " + path + " is not a checkpoint");
  std::int64_t header[6];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw std::runtime_error("load_params: truncated header in " + path);
  MlpParams p;
  p.spec.input_dim = static_cast<int>(header[0]);
  p.spec.hidden1 = static_cast<int>(header[1]);
  p.spec.hidden2 = static_cast<int>(header[2]);
  p.spec.output_dim = static_cast<int>(header[3]);
  p.spec.output_activation = header[4] ? OutputActivation::Tanh : OutputActivation::Identity;
  p.spec.validate();
  if (header[5] != p.spec.param_count())
    throw std::runtime_error("load_params: parameter count mismatch in " + path);
  p.data.resize(static_cast<std::size_t>(header[5]));
  in.read(reinterpret_cast<char*>(p.data.data()),
          static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_params: truncated data in " + path);
  return p;
}

}  // namespace rpi
