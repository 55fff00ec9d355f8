#include "mcsim/report.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace mcsim {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string ratio(double x, double base) { return base == 0.0 ? "NA" : fixed6(x / base); }

}  // namespace

void write_stats_csv(const RunStats& s, std::ostream& out) {
  out << "counter,value\n";
  out << "protocol," << s.protocol << '\n';
  out << "completion_cycle," << s.completion_cycle << '\n';
  out << "accesses," << s.accesses << '\n';
  out << "total_latency," << s.total_latency << '\n';
  out << "avg_latency," << fixed6(s.avg_latency()) << '\n';
  out << "messages," << s.messages << '\n';
  out << "message_bytes," << s.message_bytes << '\n';
  out << "flits," << s.flits << '\n';
  out << "audits," << s.audits << '\n';
  for (const auto& [k, v] : s.counters.rows()) out << k << ',' << v << '\n';
}

void write_latency_csv(const RunStats& s, std::ostream& out) {
  out << "source,accesses,cycles,share\n";
  for (int i = 0; i < kServiceSources; ++i) {
    out << to_string(static_cast<ServiceSource>(i)) << ',' << s.accesses_by_source[i] << ',' << s.latency_by_source[i]
        << ',' << (s.total_latency ? fixed6(double(s.latency_by_source[i]) / double(s.total_latency)) : fixed6(0)) << '\n';
  }
  out << "total," << s.accesses << ',' << s.total_latency << ',' << fixed6(s.total_latency ? 1.0 : 0.0) << '\n';
}

void write_links_csv(const RunStats& s, std::ostream& out) {
  out << "link,flits,busy_cycles,utilization\n";
  for (const auto& l : s.links)
    out << to_string(l.link) << ',' << l.flits << ',' << l.busy_cycles << ',' << fixed6(l.utilization) << '\n';
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  const RunStats* base = nullptr;
  for (const auto& r : rows)
    if (r.protocol == "hta") {
      base = &r.stats;
      break;
    }
  const char* protocols[] = {"hta", "rainbow"};
  out << "size,probe_filter_entries,dllc_entries_per_bank,dmem_entries";
  for (const char* p : protocols)
    for (const char* col : {"completion_cycle", "norm_completion", "avg_latency", "norm_avg_latency", "onchip_misses",
                            "llc_misses", "norm_llc_misses", "ext_inval_misses", "external_invalidations",
                            "probe_filter_evictions", "reconstructions", "flits", "norm_flits", "broadcasts"})
      out << ',' << p << '_' << col;
  out << '\n';

  std::vector<char> labels;
  for (const auto& r : rows)
    if (std::find(labels.begin(), labels.end(), r.size.label) == labels.end()) labels.push_back(r.size.label);
  for (char label : labels) {
    const SweepRow* first = nullptr;
    for (const auto& r : rows)
      if (r.size.label == label) {
        first = &r;
        break;
      }
    out << label << ',' << first->size.probe_filter_entries << ',' << first->size.dllc_entries_per_bank << ','
        << first->size.dmem_entries;
    for (const char* p : protocols) {
      const SweepRow* row = nullptr;
      for (const auto& r : rows)
        if (r.size.label == label && r.protocol == p) row = &r;
      if (!row) {
        for (int i = 0; i < 14; ++i) out << ",NA";
        continue;
      }
      const RunStats& s = row->stats;
      const auto& c = s.counters;
      out << ',' << s.completion_cycle << ',' << ratio(double(s.completion_cycle), base ? double(base->completion_cycle) : 0)
          << ',' << fixed6(s.avg_latency()) << ',' << ratio(s.avg_latency(), base ? base->avg_latency() : 0) << ','
          << c.onchip_misses << ',' << c.llc_misses << ','
          << ratio(double(c.llc_misses), base ? double(base->counters.llc_misses) : 0) << ',' << c.ext_inval_misses
          << ',' << c.external_invalidations << ',' << c.probe_filter_evictions << ','
          << c.reconstructions_llc + c.reconstructions_mem << ',' << s.flits << ','
          << ratio(double(s.flits), base ? double(base->flits) : 0) << ',' << c.broadcasts;
    }
    out << '\n';
  }
}

}  // namespace mcsim
