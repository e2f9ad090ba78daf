#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace orchestra {

// Fully connected network with tanh hidden activations and a linear head.
// W[l] is (sizes[l+1] x sizes[l]) row-major.
struct NetParams {
  std::vector<int> sizes;
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t coefficient_count() const;
};

// Gradient (or any other coefficient set) shaped like a NetParams.
struct NetGrads {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  void add_scaled(const NetGrads& other, double scale);
  void scale(double s);
};

NetGrads zero_grads_like(const NetParams& params);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<std::vector<double>> mw, vw, mb, vb;
  std::int64_t t = 0;
};

AdamState make_adam_state(const NetParams& params);

struct LrSchedule {
  double initial = 1e-4;
  double floor = 1e-5;
  int total_epochs = 1;
};

// Xavier-uniform weights, zero biases; deterministic in seed.
NetParams init_params(const std::vector<int>& sizes, std::uint64_t seed);

std::vector<double> forward_actor(const NetParams& params, std::span<const double> features);
double forward_critic(const NetParams& params, std::span<const double> features);

// Masked softmax over logits; illegal entries get probability 0.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask);
double masked_log_prob(std::span<const double> logits, std::span<const std::uint8_t> mask, int action);

// d/dtheta log pi(action | features) under the masked softmax.
NetGrads grad_log_prob(const NetParams& params, std::span<const double> features,
                       std::span<const std::uint8_t> mask, int action);

// d/dtheta of the scalar critic output.
NetGrads grad_value(const NetParams& params, std::span<const double> features);

// In-place Adam update: theta <- theta - lr * mhat / (sqrt(vhat) + eps).
// Callers flip the gradient sign for ascent. Throws on non-finite gradients.
void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, double lr);

double lr_at(const LrSchedule& schedule, int epoch);

nlohmann::json params_to_json(const NetParams& params);
NetParams params_from_json(const nlohmann::json& j);
nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j, const NetParams& params);

}  // namespace orchestra
