#include "oaflow/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace oaflow {

bool is_flow_outlier(double endpoint_error, double gt_magnitude) {
  return endpoint_error > std::max(3.0, 0.05 * gt_magnitude);
}

EvalReport evaluate_fl(const FlowField& est, const FlowField& gt, const Mask& noc, const InstanceMap& instances) {
  const int W = gt.width(), H = gt.height();
  if (est.width() != W || est.height() != H || !noc.same_shape(W, H) || !instances.labels.same_shape(W, H))
    throw std::invalid_argument("evaluate_fl: shape mismatch");
  EvalReport r;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const double gu = gt.u(x, y), gv = gt.v(x, y);
      bool bad = true;
      if (est.is_valid(x, y)) bad = is_flow_outlier(std::hypot(est.u(x, y) - gu, est.v(x, y) - gv), std::hypot(gu, gv));
      const bool fg = instances.labels(x, y) != 0;
      for (FlBreakdown* b : {&r.all, noc(x, y) ? &r.noc : nullptr}) {
        if (!b) continue;
        FlCount& part = fg ? b->fg : b->bg;
        ++part.pixels;
        ++b->all.pixels;
        if (bad) {
          ++part.outliers;
          ++b->all.outliers;
        }
      }
    }
  return r;
}

std::string format_eval_report(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-6s %9s %9s %9s %10s\n"
                "%-6s %8.2f%% %8.2f%% %8.2f%% %10zu\n"
                "%-6s %8.2f%% %8.2f%% %8.2f%% %10zu\n",
                "", "Fl-bg", "Fl-fg", "Fl-all", "pixels",
                "noc", r.noc.bg.percent(), r.noc.fg.percent(), r.noc.all.percent(), r.noc.all.pixels,
                "all", r.all.bg.percent(), r.all.fg.percent(), r.all.all.percent(), r.all.all.pixels);
  return buf;
}

}  // namespace oaflow
