#include "minaf/nn/adam.hpp"

#include <cmath>

namespace minaf::nn {

double scheduled_lr(double lr0, double decay, int epoch) { return lr0 * std::pow(decay, epoch); }

template <typename T>
Adam<T>::Adam(const ParamSet<T>& ps, AdamConfig cfg) : cfg_(cfg) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    m_.push_back(Mat<T>::Zero(ps[i].value.rows(), ps[i].value.cols()));
    v_.push_back(Mat<T>::Zero(ps[i].value.rows(), ps[i].value.cols()));
  }
}

template <typename T>
void Adam<T>::step(ParamSet<T>& ps, double lr) {
  require(ps.size() == m_.size(), "Adam: parameter set changed");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].grad.allFinite()) throw TrainingDiverged("non-finite gradient in " + ps[i].name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Param<T>& p = ps[i];
    T* __restrict m = m_[i].data();
    T* __restrict v = v_[i].data();
    T* __restrict w = p.value.data();
    const T* __restrict g = p.grad.data();
    const T lr_ = static_cast<T>(lr);
    const T eps = static_cast<T>(cfg_.eps);
    const T c1_ = static_cast<T>(c1);
    const T c2_ = static_cast<T>(c2);
    const Eigen::Index n = p.value.size();
    for (Eigen::Index k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] / c1_;
      const T vhat = v[k] / c2_;
      w[k] -= lr_ * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace minaf::nn
