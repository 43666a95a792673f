// Acceptance suite: runs every registered check at its reference scale and
// prints one pass/fail line per criterion. Exits nonzero if any criterion
// fails. Sizes follow the defaults in the experiment registry (N = 200,
// M = 10000, fixed seed) unless a criterion states its own scale.

#include <cstdio>
#include <string>
#include <vector>

#include "fbsde/experiments.hpp"

using namespace fbsde;

namespace {

int failures = 0;

void line(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("criterion %2d  %-34s %s  (%s)\n", index, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str());
  if (!pass) ++failures;
}

std::string row_detail(const RunReport& report) {
  std::string out;
  for (size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    if (i) out += "; ";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s=%.3g %s %.3g", r.name.c_str(), r.measured,
                  r.cmp == Cmp::le ? "<=" : ">=", r.tolerance + (r.cmp == Cmp::le ? 1 : -1) * 3.0 * r.std_error);
    out += buf;
  }
  return out;
}

RunReport run(const std::string& name) { return run_experiment(default_config(name)); }

}  // namespace

int main() {
  {
    const RunReport r = run("riccati_fixed_point");
    line(1, "riccati fixed point", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("riccati_cross_validate");
    line(2, "riccati mode cross-validation", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("lq_value_match");
    line(3, "lq value match", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("mp_dpp_lq");
    line(4, "lq costate relations", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("stationarity");
    line(5, "stationarity residual", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("gradient_check");
    line(6, "gradient duality", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("first_order_condition");
    line(7, "first-order condition", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("dpp_check");
    line(8, "dynamic programming residual", r.all_pass(), row_detail(r));
  }
  {
    const RunReport r = run("hjb_delta_check");
    line(9, "hjb delta function", r.all_pass(), row_detail(r));
  }
  {
    // strong Euler rate on geometric paths plus the 1/sqrt(M) error law
    const StudyTable grid_study =
        convergence_study(default_config("sde_convergence"), "N", {25, 50, 100, 200});
    const double order = -grid_study.slope;
    bool pass = order > 0.35 && order < 0.65;

    ExperimentConfig value_cfg = default_config("lq_value_match");
    value_cfg.grid.N = 50;  // error scaling needs repeats, not a fine grid
    const StudyTable mc_study =
        convergence_study(value_cfg, "M", {1000, 4000, 16000}, "random_value_gap");
    double worst_ratio_lo = 1.0, worst_ratio_hi = 0.0;
    for (size_t i = 1; i < mc_study.rows.size(); ++i) {
      const double ratio = mc_study.rows[i].std_error / mc_study.rows[i - 1].std_error;
      worst_ratio_lo = std::min(worst_ratio_lo, ratio);
      worst_ratio_hi = std::max(worst_ratio_hi, ratio);
    }
    pass = pass && worst_ratio_lo > 0.35 && worst_ratio_hi < 0.65;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "euler_order=%.3f in [0.35,0.65]; se_ratio in [%.3f,%.3f]",
                  order, worst_ratio_lo, worst_ratio_hi);
    line(10, "convergence rates", pass, buf);
  }

  std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "ALL PASS" : "RESULT", failures);
  return failures == 0 ? 0 : 1;
}
