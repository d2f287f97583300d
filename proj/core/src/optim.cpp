#include "refsr/optim.hpp"

#include <cmath>

#include "refsr/errors.hpp"

namespace refsr {

void Adam::step(NetworkParams& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.arrays) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ArgumentError("Adam: no gradient for '" + name + "'");
    if (!g->second.same_shape(p)) throw ArgumentError("Adam: gradient shape mismatch for '" + name + "'");
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    if (m.empty()) m = Tensor::zeros(p.shape());
    if (v.empty()) v = Tensor::zeros(p.shape());
    const double* gd = g->second.data();
    double* pd = p.data();
    double* md = m.data();
    double* vd = v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
      vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      pd[i] -= cfg_.lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + cfg_.eps);
    }
  }
}

NetworkParams Adam::state(const std::string& arch_id) const {
  NetworkParams s;
  s.arch_id = "adam:" + arch_id;
  s.config = {{"lr", cfg_.lr}, {"beta1", cfg_.beta1}, {"beta2", cfg_.beta2}, {"eps", cfg_.eps}, {"t", t_}};
  for (const auto& [name, m] : m_) s.arrays["m." + name] = m;
  for (const auto& [name, v] : v_) s.arrays["v." + name] = v;
  return s;
}

void Adam::load_state(const NetworkParams& s) {
  if (s.arch_id.rfind("adam:", 0) != 0) throw ConfigurationError("'" + s.arch_id + "' is not an Adam state");
  try {
    cfg_.lr = s.config.at("lr").get<double>();
    cfg_.beta1 = s.config.at("beta1").get<double>();
    cfg_.beta2 = s.config.at("beta2").get<double>();
    cfg_.eps = s.config.at("eps").get<double>();
    t_ = s.config.at("t").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("Adam state: ") + e.what());
  }
  m_.clear();
  v_.clear();
  for (const auto& [name, t] : s.arrays) {
    if (name.rfind("m.", 0) == 0) m_[name.substr(2)] = t;
    else if (name.rfind("v.", 0) == 0) v_[name.substr(2)] = t;
  }
}

}  // namespace refsr
