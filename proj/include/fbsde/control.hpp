#pragma once

#include <functional>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "fbsde/errors.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

// Admissible control region: a box (possibly unbounded) or a general
// convex-membership predicate.
struct ControlSet {
  Eigen::VectorXd lo, hi;  // box bounds; empty means all of R^k
  std::function<bool(const Eigen::VectorXd&)> member;  // overrides the box when set

  static ControlSet all(int) { return {}; }
  static ControlSet box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    ControlSet s;
    s.lo = lo;
    s.hi = hi;
    return s;
  }

  bool contains(const Eigen::VectorXd& u) const {
    if (member) return member(u);
    if (lo.size() == 0) return true;
    return (u.array() >= lo.array() - 1e-12).all() && (u.array() <= hi.array() + 1e-12).all();
  }
};

// Read-only view of one path's history up to (and including) a node; the only
// data an open-loop construction callback is allowed to see. Reading past the
// current node is rejected, which keeps the table adapted by construction.
struct PathPrefix {
  int path = 0;
  int step = 0;                       // values below are for nodes 0..step
  const PathTensor* states = nullptr;  // may be null when built from the driver alone
  const Eigen::MatrixXd* W = nullptr;

  double w(int k) const {
    check(k);
    return (*W)(path, k);
  }
  Eigen::Map<const Eigen::VectorXd> x(int k) const {
    check(k);
    return states->at(path, k);
  }

 private:
  void check(int k) const {
    if (k < 0 || k > step)
      throw ConfigError("open-loop control builder tried to read beyond the path prefix");
  }
};

// A control policy: either an open-loop table (one value per path and step)
// or a feedback map (t, x, w) -> u. Values are checked against U on use.
class ControlLaw {
 public:
  using FeedbackFn = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x, double w)>;

  static ControlLaw feedback(int k_dim, FeedbackFn fn, ControlSet U = {}) {
    ControlLaw law;
    law.k_dim_ = k_dim;
    law.feedback_ = std::move(fn);
    law.U_ = std::move(U);
    return law;
  }

  static ControlLaw constant(const Eigen::VectorXd& u0, ControlSet U = {}) {
    return feedback(static_cast<int>(u0.size()),
                    [u0](double, const Eigen::VectorXd&, double) { return u0; }, std::move(U));
  }

  static ControlLaw open_loop(PathTensor values, ControlSet U = {}) {
    ControlLaw law;
    law.k_dim_ = values.dim();
    law.table_ = std::move(values);
    law.U_ = std::move(U);
    return law;
  }

  // Builds an open-loop table step by step; the callback only ever sees the
  // path history up to the current node, so the table is adapted by
  // construction.
  static ControlLaw open_loop_adapted(
      const TimeGrid& grid, const Eigen::MatrixXd& W, const PathTensor* states, int k_dim,
      const std::function<Eigen::VectorXd(int step, double t, const PathPrefix&)>& builder,
      ControlSet U = {}) {
    const int M = static_cast<int>(W.rows());
    PathTensor values(M, grid.N, k_dim);
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < grid.N; ++k) {
        PathPrefix prefix{m, k, states, &W};
        values.at(m, k) = builder(k, grid.nodes[k], prefix);
      }
    }
    return open_loop(std::move(values), std::move(U));
  }

  // Law shifted by a deterministic-in-time offset (useful for perturbations).
  ControlLaw shifted(std::function<Eigen::VectorXd(double t)> offset) const {
    ControlLaw law = *this;
    law.offset_ = std::move(offset);
    return law;
  }

  int control_dim() const { return k_dim_; }
  const ControlSet& region() const { return U_; }
  bool is_open_loop() const { return table_.paths() > 0; }

  Eigen::VectorXd value(int m, int step, double t, const Eigen::VectorXd& x, double w) const {
    Eigen::VectorXd u;
    if (table_.paths() > 0) {
      u = table_.at(m, step);
    } else {
      u = feedback_(t, x, w);
    }
    if (offset_) u += offset_(t);
    if (!U_.contains(u)) throw ConfigError("control law produced a value outside U");
    return u;
  }

 private:
  int k_dim_ = 1;
  FeedbackFn feedback_;
  PathTensor table_;
  std::function<Eigen::VectorXd(double t)> offset_;
  ControlSet U_;
};

}  // namespace fbsde
