#include "orchestra/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "orchestra/errors.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

namespace {

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw ValidationError("network needs at least input and output layers");
  for (int s : sizes) {
    if (s <= 0) throw ValidationError("network layer sizes must be positive");
  }
}

// Returns post-activation values for every layer, a[0] being the input.
// The final layer is linear; hidden layers are tanh.
std::vector<std::vector<double>> run_forward(const NetParams& params, std::span<const double> features) {
  const std::size_t layers = params.w.size();
  if (features.size() != static_cast<std::size_t>(params.input_size())) {
    throw ContractViolation("feature vector size " + std::to_string(features.size()) +
                            " does not match network input " + std::to_string(params.input_size()));
  }
  std::vector<std::vector<double>> acts(layers + 1);
  acts[0].assign(features.begin(), features.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = params.sizes[l + 1];
    const int cols = params.sizes[l];
    std::vector<double> z(static_cast<std::size_t>(rows));
    const auto& w = params.w[l];
    const auto& in = acts[l];
    for (int i = 0; i < rows; ++i) {
      double acc = params.b[l][static_cast<std::size_t>(i)];
      const double* row = w.data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) acc += row[j] * in[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = (l + 1 == layers) ? acc : std::tanh(acc);
    }
    acts[l + 1] = std::move(z);
  }
  return acts;
}

// Backpropagates an output-layer delta (dLoss/dz at the linear head) into
// coefficient gradients. `acts` must come from run_forward on the same params.
NetGrads backprop(const NetParams& params, const std::vector<std::vector<double>>& acts,
                  std::vector<double> delta) {
  NetGrads grads = zero_grads_like(params);
  for (std::size_t l = params.w.size(); l-- > 0;) {
    const int rows = params.sizes[l + 1];
    const int cols = params.sizes[l];
    const auto& in = acts[l];
    for (int i = 0; i < rows; ++i) {
      const double d = delta[static_cast<std::size_t>(i)];
      grads.b[l][static_cast<std::size_t>(i)] = d;
      double* grow = grads.w[l].data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) grow[j] = d * in[static_cast<std::size_t>(j)];
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(cols), 0.0);
    const auto& w = params.w[l];
    for (int i = 0; i < rows; ++i) {
      const double d = delta[static_cast<std::size_t>(i)];
      const double* row = w.data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) prev[static_cast<std::size_t>(j)] += row[j] * d;
    }
    // acts[l] are tanh outputs when l > 0, so tanh' = 1 - a^2.
    for (int j = 0; j < cols; ++j) {
      const double a = acts[l][static_cast<std::size_t>(j)];
      prev[static_cast<std::size_t>(j)] *= 1.0 - a * a;
    }
    delta = std::move(prev);
  }
  return grads;
}

std::vector<std::vector<double>> zeros_like(const std::vector<std::vector<double>>& src) {
  std::vector<std::vector<double>> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i].assign(src[i].size(), 0.0);
  return out;
}

std::vector<std::vector<double>> layers_from_json(const nlohmann::json& j, const char* key,
                                                  const NetParams& shape, bool weights) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ParseError(std::string("missing or non-array field '") + key + "'");
  }
  const auto& arr = j.at(key);
  if (arr.size() != shape.w.size()) {
    throw ParseError(std::string("field '") + key + "' has " + std::to_string(arr.size()) +
                     " layers, expected " + std::to_string(shape.w.size()));
  }
  std::vector<std::vector<double>> out(arr.size());
  for (std::size_t l = 0; l < arr.size(); ++l) {
    const std::size_t want = weights ? shape.w[l].size() : shape.b[l].size();
    if (!arr[l].is_array() || arr[l].size() != want) {
      throw ParseError(std::string("field '") + key + "' layer " + std::to_string(l) +
                       " has wrong length");
    }
    out[l].reserve(want);
    for (const auto& v : arr[l]) {
      if (!v.is_number()) throw ParseError(std::string("non-numeric entry in '") + key + "'");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ParseError(std::string("non-finite entry in '") + key + "'");
      out[l].push_back(d);
    }
  }
  return out;
}

}  // namespace

std::size_t NetParams::coefficient_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  return n;
}

void NetGrads::add_scaled(const NetGrads& other, double scale) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] += scale * other.w[l][i];
    for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += scale * other.b[l][i];
  }
}

void NetGrads::scale(double s) {
  for (auto& layer : w)
    for (double& v : layer) v *= s;
  for (auto& layer : b)
    for (double& v : layer) v *= s;
}

NetGrads zero_grads_like(const NetParams& params) {
  NetGrads g;
  g.w = zeros_like(params.w);
  g.b = zeros_like(params.b);
  return g;
}

AdamState make_adam_state(const NetParams& params) {
  AdamState s;
  s.mw = zeros_like(params.w);
  s.vw = zeros_like(params.w);
  s.mb = zeros_like(params.b);
  s.vb = zeros_like(params.b);
  s.t = 0;
  return s;
}

NetParams init_params(const std::vector<int>& sizes, std::uint64_t seed) {
  check_sizes(sizes);
  NetParams p;
  p.sizes = sizes;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.w.push_back(std::move(w));
    p.b.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
  }
  return p;
}

std::vector<double> forward_actor(const NetParams& params, std::span<const double> features) {
  return run_forward(params, features).back();
}

double forward_critic(const NetParams& params, std::span<const double> features) {
  if (params.output_size() != 1) throw ContractViolation("critic network must have a scalar output");
  return run_forward(params, features).back()[0];
}

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask) {
  if (logits.size() != mask.size()) throw ContractViolation("mask size does not match logits");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i] && logits[i] > best) best = logits[i];
  }
  if (!std::isfinite(best)) throw ContractViolation("masked softmax needs at least one legal action");
  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    probs[i] = std::exp(logits[i] - best);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

double masked_log_prob(std::span<const double> logits, std::span<const std::uint8_t> mask, int action) {
  if (action < 0 || static_cast<std::size_t>(action) >= logits.size() || !mask[static_cast<std::size_t>(action)]) {
    throw ContractViolation("log-prob requested for an illegal action");
  }
  const auto probs = masked_softmax(logits, mask);
  return std::log(probs[static_cast<std::size_t>(action)]);
}

NetGrads grad_log_prob(const NetParams& params, std::span<const double> features,
                       std::span<const std::uint8_t> mask, int action) {
  const auto acts = run_forward(params, features);
  const auto& logits = acts.back();
  if (mask.size() != logits.size()) throw ContractViolation("mask size does not match network output");
  if (action < 0 || static_cast<std::size_t>(action) >= logits.size() || !mask[static_cast<std::size_t>(action)]) {
    throw ContractViolation("gradient requested for an illegal action");
  }
  const auto probs = masked_softmax(logits, mask);
  std::vector<double> delta(logits.size(), 0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!mask[k]) continue;
    delta[k] = (static_cast<int>(k) == action ? 1.0 : 0.0) - probs[k];
  }
  return backprop(params, acts, std::move(delta));
}

NetGrads grad_value(const NetParams& params, std::span<const double> features) {
  if (params.output_size() != 1) throw ContractViolation("critic network must have a scalar output");
  const auto acts = run_forward(params, features);
  return backprop(params, acts, {1.0});
}

void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(g[i])) throw ContractViolation("non-finite gradient in adam_step");
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g[i];
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
    }
  };
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    update(params.w[l], grads.w[l], state.mw[l], state.vw[l]);
    update(params.b[l], grads.b[l], state.mb[l], state.vb[l]);
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  if (schedule.total_epochs < 1) return std::max(schedule.floor, schedule.initial);
  // Linear from initial at epoch 0 down to floor at epoch == total_epochs,
  // clamped at the floor afterward.
  const double clamped = std::clamp(epoch, 0, schedule.total_epochs);
  const double frac = clamped / static_cast<double>(schedule.total_epochs);
  const double lr = schedule.initial + (schedule.floor - schedule.initial) * frac;
  return std::max(schedule.floor, lr);
}

nlohmann::json params_to_json(const NetParams& params) {
  nlohmann::json j;
  j["sizes"] = params.sizes;
  j["w"] = params.w;
  j["b"] = params.b;
  return j;
}

NetParams params_from_json(const nlohmann::json& j) {
  if (!j.contains("sizes") || !j.at("sizes").is_array()) {
    throw ParseError("network json missing 'sizes'");
  }
  NetParams p;
  for (const auto& v : j.at("sizes")) {
    if (!v.is_number_integer()) throw ParseError("network 'sizes' must be integers");
    p.sizes.push_back(v.get<int>());
  }
  check_sizes(p.sizes);
  for (std::size_t l = 0; l + 1 < p.sizes.size(); ++l) {
    p.w.emplace_back(static_cast<std::size_t>(p.sizes[l]) * p.sizes[l + 1]);
    p.b.emplace_back(static_cast<std::size_t>(p.sizes[l + 1]));
  }
  p.w = layers_from_json(j, "w", p, true);
  p.b = layers_from_json(j, "b", p, false);
  return p;
}

nlohmann::json adam_to_json(const AdamState& state) {
  nlohmann::json j;
  j["t"] = state.t;
  j["mw"] = state.mw;
  j["vw"] = state.vw;
  j["mb"] = state.mb;
  j["vb"] = state.vb;
  return j;
}

AdamState adam_from_json(const nlohmann::json& j, const NetParams& params) {
  AdamState s = make_adam_state(params);
  if (!j.contains("t") || !j.at("t").is_number_integer()) throw ParseError("adam state missing 't'");
  s.t = j.at("t").get<std::int64_t>();
  if (s.t < 0) throw ParseError("adam state 't' must be non-negative");
  NetParams shape = params;  // reuse the layer-shape checks
  s.mw = layers_from_json(j, "mw", shape, true);
  s.vw = layers_from_json(j, "vw", shape, true);
  s.mb = layers_from_json(j, "mb", shape, false);
  s.vb = layers_from_json(j, "vb", shape, false);
  return s;
}

}  // namespace orchestra
