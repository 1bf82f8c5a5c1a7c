#pragma once

#include <cstddef>
#include <vector>

namespace latnav {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value, the value regression target
};

// Generalized advantage estimation over one rollout segment. `dones[t]` marks
// a terminal transition at step t; bootstrap_value is V(s_T) for a segment cut
// off mid-episode and is ignored past a terminal step.
inline GaeResult compute_gae(const std::vector<double>& rewards,
                             const std::vector<double>& values,
                             double bootstrap_value,
                             const std::vector<bool>& dones,
                             double gamma, double lambda) {
  const size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (size_t t = n; t-- > 0;) {
    const double mask = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * mask - values[t];
    next_adv = delta + gamma * lambda * mask * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return out;
}

}  // namespace latnav
