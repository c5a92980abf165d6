#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pdlab/params.hpp"

namespace pdlab {

// Adam with bias correction. Moment accumulators exist exactly for the
// currently trainable parameters; frozen parameters are never touched.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  struct Moments {
    ArrayX m, v;
  };

  Adam() = default;
  explicit Adam(Config cfg) : cfg_(cfg) {}

  // Parameters whose name starts with prefix step with lr scaled by mult
  // (longest matching prefix wins; default multiplier is 1).
  void set_lr_multiplier(const std::string& prefix, double mult);
  double lr_multiplier_for(const std::string& name) const;

  // One update over all trainable parameters. Throws ParamError naming the
  // parameter if a trainable parameter has no gradient.
  void step(ParamStore& params, double lr);

  std::int64_t step_count() const { return t_; }
  const Config& config() const { return cfg_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::int64_t step_count, std::map<std::string, Moments> moments);

 private:
  Config cfg_;
  std::map<std::string, Moments> moments_;
  std::int64_t t_ = 0;
  std::vector<std::pair<std::string, double>> multipliers_;
};

// Linear warmup from warmup_start_lr to base_lr over warmup_epochs, then
// cosine decay from base_lr to min_lr at total_epochs. Continuous at the
// boundary; non-increasing after warmup. The classifier parameter group uses
// classifier_multiplier x the scheduled value.
struct LrSchedule {
  double base_lr = 1e-5;
  int warmup_epochs = 5;
  double warmup_start_lr = 1e-6;
  int total_epochs = 60;
  double min_lr = 0.0;
  double classifier_multiplier = 5.0;

  double lr_at(double epoch) const;  // epoch outside [0, total_epochs] throws
};

}  // namespace pdlab
