#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fbsde {

// Dense M x K x d array of reals with per-(path, node) vector views.
// Storage is path-major so one path's history is contiguous.
class PathTensor {
 public:
  PathTensor() = default;
  PathTensor(int M, int K, int d) : M_(M), K_(K), d_(d), data_(static_cast<size_t>(M) * K * d, 0.0) {}

  int paths() const { return M_; }
  int nodes() const { return K_; }
  int dim() const { return d_; }

  Eigen::Map<Eigen::VectorXd> at(int m, int k) {
    return Eigen::Map<Eigen::VectorXd>(data_.data() + offset(m, k), d_);
  }
  Eigen::Map<const Eigen::VectorXd> at(int m, int k) const {
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + offset(m, k), d_);
  }
  // d == 1 convenience
  double& scalar(int m, int k) { return data_[offset(m, k)]; }
  double scalar(int m, int k) const { return data_[offset(m, k)]; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  size_t offset(int m, int k) const { return (static_cast<size_t>(m) * K_ + k) * d_; }
  int M_ = 0, K_ = 0, d_ = 0;
  std::vector<double> data_;
};

}  // namespace fbsde
