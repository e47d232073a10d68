#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "rpi/rng.hpp"

namespace rpi {

struct PhysicsParams {
  double gravity = 9.8;           // m/s^2
  double cart_mass = 1.0;         // kg
  double pole_mass = 0.1;         // kg
  double pole_half_length = 0.5;  // m
  double force_mag = 10.0;        // N
  double timestep = 0.02;         // s

  void validate() const {
    if (gravity <= 0 || cart_mass <= 0 || pole_mass <= 0 ||
        pole_half_length <= 0 || force_mag <= 0 || timestep <= 0)
      throw std::invalid_argument("PhysicsParams: all parameters must be positive");
  }
};

struct EnvState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
  int steps_elapsed = 0;
};

enum class EnvKind { CartpoleDiscrete, CartpoleContinuous };

/// Environment description. The discrete kind is the classic cart-pole with
/// two push actions; the continuous kind is the same rig driven by a force
/// a * force_mag for a in [-1, 1], with a tighter angle limit and a longer
/// episode cap.
struct EnvSpec {
  EnvKind kind = EnvKind::CartpoleDiscrete;
  PhysicsParams params;
  double theta_threshold = 0.0;  // rad
  double x_threshold = 0.0;      // m
  int max_episode_steps = 0;

  void validate() const {
    params.validate();
    if (theta_threshold <= 0 || x_threshold <= 0)
      throw std::invalid_argument("EnvSpec: thresholds must be positive");
    if (max_episode_steps < 1)
      throw std::invalid_argument("EnvSpec: max_episode_steps must be >= 1");
  }
};

inline EnvSpec cartpole_discrete_spec() {
  EnvSpec spec;
  spec.kind = EnvKind::CartpoleDiscrete;
  spec.theta_threshold = 12.0 * 2.0 * M_PI / 360.0;  // 12 degrees
  spec.x_threshold = 2.4;
  spec.max_episode_steps = 500;
  return spec;
}

inline EnvSpec cartpole_continuous_spec() {
  EnvSpec spec;
  spec.kind = EnvKind::CartpoleContinuous;
  spec.theta_threshold = 0.2;
  spec.x_threshold = 2.4;
  spec.max_episode_steps = 1000;
  return spec;
}

/// One environment step. Action is stored as a double: the discrete action
/// index, or the continuous force fraction.
struct Transition {
  EnvState state;
  double action = 0.0;
  double reward = 0.0;
  EnvState next_state;
  bool terminated = false;  // pole fell or cart left the track
  bool truncated = false;   // episode step cap reached
};

inline bool is_terminal_state(const EnvSpec& spec, const EnvState& s) {
  return std::abs(s.theta) > spec.theta_threshold || std::abs(s.x) > spec.x_threshold;
}

/// Advances the cart-pole dynamics by one Euler step under the given force.
/// Accelerations follow the standard frictionless equations (pole as a
/// uniform rod); integration is position-then-velocity with the old
/// velocities, matching the widely used reference trajectories bit for bit.
inline EnvState integrate(const PhysicsParams& p, const EnvState& s, double force) {
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pml = p.pole_mass * p.pole_half_length;
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);

  const double temp = (force + pml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
      (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pml * theta_acc * cos_t / total_mass;

  EnvState next = s;
  next.x = s.x + p.timestep * s.x_dot;
  next.x_dot = s.x_dot + p.timestep * x_acc;
  next.theta = s.theta + p.timestep * s.theta_dot;
  next.theta_dot = s.theta_dot + p.timestep * theta_acc;
  next.steps_elapsed = s.steps_elapsed + 1;
  return next;
}

/// Fresh episode state: all four components uniform in [-0.05, 0.05].
inline EnvState reset(const EnvSpec& spec, Rng& rng) {
  spec.validate();
  EnvState s;
  s.x = rng.uniform(-0.05, 0.05);
  s.x_dot = rng.uniform(-0.05, 0.05);
  s.theta = rng.uniform(-0.05, 0.05);
  s.theta_dot = rng.uniform(-0.05, 0.05);
  s.steps_elapsed = 0;
  return s;
}

namespace detail {

inline Transition step_with_force(const EnvSpec& spec, const EnvState& state,
                                  double action, double force) {
  if (is_terminal_state(spec, state) || state.steps_elapsed >= spec.max_episode_steps)
    throw std::invalid_argument("step: episode already over; reset first");

  Transition tr;
  tr.state = state;
  tr.action = action;
  tr.next_state = integrate(spec.params, state, force);
  tr.terminated = is_terminal_state(spec, tr.next_state);
  tr.truncated = tr.next_state.steps_elapsed >= spec.max_episode_steps;
  tr.reward = 1.0;
  return tr;
}

}  // namespace detail

/// Discrete step: action 0 pushes left, 1 pushes right.
inline Transition step(const EnvSpec& spec, const EnvState& state, int action) {
  if (spec.kind != EnvKind::CartpoleDiscrete)
    throw std::invalid_argument("step: integer action on a continuous environment");
  if (action != 0 && action != 1)
    throw std::invalid_argument("step: discrete action must be 0 or 1, got " +
                                std::to_string(action));
  double force = action == 1 ? spec.params.force_mag : -spec.params.force_mag;
  return detail::step_with_force(spec, state, static_cast<double>(action), force);
}

/// Continuous step: force = action * force_mag, action in [-1, 1].
inline Transition step(const EnvSpec& spec, const EnvState& state, double action) {
  if (spec.kind != EnvKind::CartpoleContinuous)
    throw std::invalid_argument("step: real action on a discrete environment");
  if (!(action >= -1.0 && action <= 1.0))
    throw std::invalid_argument("step: continuous action must lie in [-1, 1], got " +
                                std::to_string(action));
  return detail::step_with_force(spec, state, action, action * spec.params.force_mag);
}

enum class PhysicsParameter { Gravity, CartMass, PoleMass };

inline const char* to_string(PhysicsParameter p) {
  switch (p) {
    case PhysicsParameter::Gravity: return "gravity";
    case PhysicsParameter::CartMass: return "cart_mass";
    case PhysicsParameter::PoleMass: return "pole_mass";
  }
  return "?";
}

/// Copy of `base` with exactly one physical parameter scaled by `factor`.
inline EnvSpec perturbed_spec(const EnvSpec& base, PhysicsParameter parameter,
                              double factor) {
  if (!(factor > 0.0))
    throw std::invalid_argument("perturbed_spec: factor must be positive");
  EnvSpec spec = base;
  switch (parameter) {
    case PhysicsParameter::Gravity: spec.params.gravity *= factor; break;
    case PhysicsParameter::CartMass: spec.params.cart_mass *= factor; break;
    case PhysicsParameter::PoleMass: spec.params.pole_mass *= factor; break;
  }
  return spec;
}

}  // namespace rpi
