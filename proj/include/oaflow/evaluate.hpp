#pragma once

#include <string>

#include "oaflow/image.hpp"

namespace oaflow {

/// Outlier iff the endpoint error exceeds max(3 px, 5% of the ground-truth magnitude).
bool is_flow_outlier(double endpoint_error, double gt_magnitude);

struct FlCount {
  size_t outliers = 0;
  size_t pixels = 0;

  double percent() const { return pixels ? 100.0 * static_cast<double>(outliers) / static_cast<double>(pixels) : 0.0; }
  FlCount& operator+=(const FlCount& o) {
    outliers += o.outliers;
    pixels += o.pixels;
    return *this;
  }
};

struct FlBreakdown {
  FlCount bg, fg, all;
  FlBreakdown& operator+=(const FlBreakdown& o) {
    bg += o.bg;
    fg += o.fg;
    all += o.all;
    return *this;
  }
};

/// Fl-bg / Fl-fg / Fl-all over non-occluded pixels (gt valid and `noc`) and over every valid gt pixel.
/// Summing reports pools their pixels, which gives the pixel-weighted aggregate.
struct EvalReport {
  FlBreakdown noc;
  FlBreakdown all;
  EvalReport& operator+=(const EvalReport& o) {
    noc += o.noc;
    all += o.all;
    return *this;
  }
};

/// Pixels with invalid ground truth are skipped; invalid estimates count as outliers.
EvalReport evaluate_fl(const FlowField& est, const FlowField& gt, const Mask& noc, const InstanceMap& instances);

/// Two-row table (noc, all) with bg / fg / all percentages.
std::string format_eval_report(const EvalReport& r);

}  // namespace oaflow
