#include "pdlab/optim.hpp"

#include <cmath>

namespace pdlab {

void Adam::set_lr_multiplier(const std::string& prefix, double mult) {
  for (auto& [p, m] : multipliers_) {
    if (p == prefix) {
      m = mult;
      return;
    }
  }
  multipliers_.emplace_back(prefix, mult);
}

double Adam::lr_multiplier_for(const std::string& name) const {
  double mult = 1.0;
  std::size_t best = 0;
  for (const auto& [prefix, m] : multipliers_) {
    if (name.rfind(prefix, 0) == 0 && prefix.size() >= best) {
      best = prefix.size();
      mult = m;
    }
  }
  return mult;
}

void Adam::step(ParamStore& params, double lr) {
  // Drop accumulators for parameters that are no longer trainable so the
  // state always mirrors the current trainable set.
  for (auto it = moments_.begin(); it != moments_.end();) {
    if (!params.has(it->first) || !params.trainable(it->first)) {
      it = moments_.erase(it);
    } else {
      ++it;
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (auto& [name, e] : params.entries()) {
    if (!e.trainable) continue;
    if (!e.tensor.has_grad()) {
      throw ParamError("adam step: trainable parameter '" + name + "' has no gradient");
    }
    const ArrayX& g = e.tensor.grad();
    auto [it, fresh] = moments_.try_emplace(name);
    Moments& st = it->second;
    if (fresh) {
      st.m = ArrayX::Zero(g.size());
      st.v = ArrayX::Zero(g.size());
    }
    st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
    st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.square();
    const double eff_lr = lr * lr_multiplier_for(name);
    e.tensor.mutable_array() -=
        eff_lr * (st.m / bc1) / ((st.v / bc2).sqrt() + cfg_.eps);
  }
}

void Adam::restore(std::int64_t step_count, std::map<std::string, Moments> moments) {
  t_ = step_count;
  moments_ = std::move(moments);
}

double LrSchedule::lr_at(double epoch) const {
  if (epoch < 0.0 || epoch > static_cast<double>(total_epochs)) {
    throw ParamError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(total_epochs) + "]");
  }
  if (epoch < static_cast<double>(warmup_epochs)) {
    const double f = epoch / static_cast<double>(warmup_epochs);
    return warmup_start_lr + (base_lr - warmup_start_lr) * f;
  }
  const double span = static_cast<double>(total_epochs - warmup_epochs);
  if (span <= 0.0) return base_lr;
  const double f = (epoch - static_cast<double>(warmup_epochs)) / span;
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(M_PI * f));
}

}  // namespace pdlab
