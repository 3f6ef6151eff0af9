#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lhdff/checkpoint.hpp"
#include "lhdff/nn.hpp"

namespace lhdff::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over the trainable entries of a ParameterSet.
// Frozen tensors and buffers are never touched. Parameters without a
// gradient in the current step are skipped.
class Adam {
 public:
  Adam(const nn::ParameterSet& params, AdamConfig cfg);

  // Scales all gradients so their global L2 norm is at most max_norm.
  // Returns the norm before clipping. max_norm <= 0 only measures.
  double clip_grad_norm(double max_norm);

  // Throws NumericError naming the parameter if any gradient is not finite.
  void step(double lr);

  std::uint64_t steps() const { return step_; }

  // Moments as "opt.m.<name>" / "opt.v.<name>" plus "opt.step".
  std::vector<checkpoint::Record> export_records() const;
  void import_records(const std::vector<checkpoint::Record>& records);

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
};

}  // namespace lhdff::train
