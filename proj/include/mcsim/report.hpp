#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mcsim/config.hpp"
#include "mcsim/engine.hpp"

namespace mcsim {

// `counter,value`, one row per counter.
void write_stats_csv(const RunStats& s, std::ostream& out);
// `source,accesses,cycles,share`; the total row closes the breakdown.
void write_latency_csv(const RunStats& s, std::ostream& out);
// `link,flits,busy_cycles,utilization`.
void write_links_csv(const RunStats& s, std::ostream& out);

struct SweepRow {
  SizeLevel size;
  std::string protocol;
  RunStats stats;
};

// One row per size, one column group per protocol. Normalized columns
// divide by HTA at the first listed size.
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

std::string fixed6(double v);

}  // namespace mcsim
