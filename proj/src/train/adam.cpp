#include "lhdff/train/adam.hpp"

#include <cmath>

#include "lhdff/error.hpp"

namespace lhdff::train {

Adam::Adam(const nn::ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : params.entries()) {
    if (e.kind != nn::ParamKind::kTrainable) continue;
    slots_.push_back({e.name, e.tensor, std::vector<double>(e.tensor.numel(), 0.0),
                      std::vector<double>(e.tensor.numel(), 0.0)});
  }
}

double Adam::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& s : slots_) {
    for (double g : s.param.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      for (double& g : s.param.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void Adam::step(double lr) {
  for (const auto& s : slots_) {
    for (double g : s.param.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + s.name);
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto g = s.param.grad();
    auto w = s.param.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = s.m[i] / c1;
      const double v_hat = s.v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

std::vector<checkpoint::Record> Adam::export_records() const {
  std::vector<checkpoint::Record> out;
  out.push_back({"opt.step", {1}, {static_cast<double>(step_)}});
  for (const auto& s : slots_) {
    out.push_back({"opt.m." + s.name, s.param.shape(), s.m});
    out.push_back({"opt.v." + s.name, s.param.shape(), s.v});
  }
  return out;
}

void Adam::import_records(const std::vector<checkpoint::Record>& records) {
  const auto* step = checkpoint::find(records, "opt.step");
  if (step == nullptr || step->data.size() != 1) throw ConfigError("checkpoint has no optimizer state (opt.step)");
  for (auto& s : slots_) {
    for (auto [prefix, dst] : {std::pair{"opt.m.", &s.m}, std::pair{"opt.v.", &s.v}}) {
      const auto* r = checkpoint::find(records, prefix + s.name);
      if (r == nullptr) throw ConfigError(std::string("checkpoint is missing ") + prefix + s.name);
      if (r->data.size() != dst->size()) {
        throw DimensionError(std::string("optimizer moment ") + prefix + s.name + " has the wrong size");
      }
      *dst = r->data;
    }
  }
  step_ = static_cast<std::uint64_t>(step->data[0]);
}

}  // namespace lhdff::train
