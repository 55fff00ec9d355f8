// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gen.hpp"
#include "mcsim/commands.hpp"
#include "mcsim/dlcbf.hpp"
#include "mcsim/engine.hpp"

using namespace mcsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string secs(double s) {
  char b[32];
  std::snprintf(b, sizeof b, "%.1fs", s);
  return b;
}

std::string pct(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%+.2f%%", x * 100);
  return b;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

using Row = std::map<std::string, std::string>;

std::vector<Row> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<Row> rows;
  std::vector<std::string> header;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (header.empty()) {
      header = cells;
      continue;
    }
    Row r;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) r[header[i]] = cells[i];
    rows.push_back(r);
  }
  return rows;
}

double num(const Row& r, const std::string& k) {
  auto it = r.find(k);
  return it == r.end() ? NAN : std::stod(it->second);
}

struct Context {
  fs::path dir;
  std::uint32_t budget = 6;
  std::uint32_t hta_pressure_budget = 5;
  std::uint64_t ops = 1'000'000;
  std::uint64_t sweep_ops_per_core = 25'000;
  std::optional<bool> one_entry_check;  // left by criterion 1 for criterion 7
  std::string one_entry_detail;
  std::optional<Outcome> scale_one_entry;
};

// ---------------------------------------------------------------- 1

Outcome correctness_oracle(Context& cx) {
  Outcome o;
  bool one_entry = true;
  for (const char* proto : {"rainbow", "hta"}) {
    cli::CheckArgs a;
    a.bounds.protocol = proto;
    a.bounds.budget = cx.budget;
    if (std::string(proto) == "hta") a.bounds.pressure_budget = std::min(cx.hta_pressure_budget, cx.budget);
    a.out = (cx.dir / "check").string();
    std::ostringstream log, err;
    const auto t0 = Clock::now();
    const int rc = cli::cmd_check(a, log, err);
    const double s = since(t0);
    o.require(rc == cli::kOk, std::string(proto) + " exit " + std::to_string(rc) + " " + err.str());
    o.require(s <= 600, std::string(proto) + " took " + secs(s));
    if (std::string(proto) == "rainbow") one_entry = rc == cli::kOk;
    std::string line = log.str();
    if (!line.empty() && line.back() == '\n') line.pop_back();
    o.note(line + " in " + secs(s));
  }
  cx.one_entry_check = one_entry;
  cx.one_entry_detail = "Rainbow 1-entry D-LLC/D-MEM pass of the budget-" + std::to_string(cx.budget) + " check";

  const std::vector<std::pair<std::string, Fault>> faults = {
      {"rainbow", Fault::DropToken},
      {"rainbow", Fault::SkipFllcDecrement},
      {"rainbow", Fault::MissingInvalidation},
      {"rainbow", Fault::SilverDoubleGrant},
      {"hta", Fault::HtaInclusivityBreak},
  };
  int caught = 0;
  for (const auto& [proto, f] : faults) {
    cli::CheckArgs a;
    a.bounds.protocol = proto;
    a.bounds.budget = cx.budget;
    a.bounds.fault = f;
    a.out = (cx.dir / ("fault-" + std::string(to_string(f)))).string();
    std::ostringstream log, err;
    const int rc = cli::cmd_check(a, log, err);
    const fs::path replay = fs::path(a.out) / ("replay-" + proto + ".trace");
    cli::ReplayArgs r;
    r.file = replay.string();
    std::ostringstream rlog, rerr;
    const bool reproduced = fs::exists(replay) && cli::cmd_replay(r, rlog, rerr) == cli::kCheckViolation;
    const bool ok = rc == cli::kCheckViolation && reproduced;
    o.require(ok, std::string(to_string(f)) + " not caught with a replay");
    caught += ok;
  }
  o.note(std::to_string(caught) + "/5 seeded faults caught and replayed");
  return o;
}

// ---------------------------------------------------------------- 2

Trace scale_trace(const SystemConfig& cfg, std::uint64_t ops) {
  GeneratorSpec g;
  g.pattern = Pattern::SharedUniform;
  g.footprint_blocks = 4096;
  g.shared_fraction = 0.5;
  g.ops_per_core = ops / cfg.shape.total_cores();
  g.seed = 7;
  return generate(g, cfg.shape);
}

void scale_run(Outcome& o, const SystemConfig& cfg, const std::string& proto, const Trace& t, const std::string& tag) {
  RunOptions opt;
  opt.audit_interval = 10'000;
  const auto t0 = Clock::now();
  try {
    const RunStats s = run(cfg, proto, t, opt);
    const double sec = since(t0);
    o.require(sec <= 300, tag + " took " + secs(sec));
    if (proto == "rainbow")
      o.require(s.counters.external_invalidations == 0,
                tag + " external_invalidations=" + std::to_string(s.counters.external_invalidations));
    o.note(tag + ": " + std::to_string(s.accesses) + " ops, " + std::to_string(s.audits) + " audits, " + secs(sec));
  } catch (const std::exception& e) {
    o.require(false, tag + ": " + e.what());
  }
}

Outcome conservation_at_scale(Context& cx) {
  Outcome o;
  for (std::uint32_t chips : {2u, 4u}) {
    const SystemConfig cfg = default_config(chips);
    const Trace t = scale_trace(cfg, cx.ops);
    for (const char* proto : {"rainbow", "hta"})
      scale_run(o, cfg, proto, t, std::to_string(chips) + "-CMP " + proto);
  }
  return o;
}

// ---------------------------------------------------------------- 3

Outcome dlcbf_filter(Context&) {
  Outcome o;
  const auto t0 = Clock::now();
  const std::uint64_t design = 4096;
  {
    DlcbfFilter f(size_for_fpr(design, 0.05));
    testgen::Rng rng(2024);
    std::map<std::uint64_t, std::uint32_t> oracle;
    std::vector<std::uint64_t> live;
    std::uint64_t false_neg = 0, checks = 0;
    for (std::uint64_t op = 0; op < 1'000'000; ++op) {
      const double r = double(rng.below(1000)) / 1000.0;
      const bool grow = live.size() < design;
      if (live.empty() || r < (grow ? 0.45 : 0.30)) {
        const std::uint64_t a =
            !live.empty() && rng.coin(0.25) ? live[rng.below(live.size())] : rng.below(1ULL << 30);
        try {
          f.increment(BlockAddress(a * 64));
        } catch (const FilterOverflow&) {
        }
        if (oracle[a]++ == 0) live.push_back(a);
      } else if (r < 0.65) {
        const std::size_t k = rng.below(live.size());
        const std::uint64_t a = live[k];
        f.decrement(BlockAddress(a * 64));
        if (--oracle[a] == 0) {
          oracle.erase(a);
          live[k] = live.back();
          live.pop_back();
        }
      } else {
        const std::uint64_t a = rng.coin(0.5) && !live.empty() ? live[rng.below(live.size())] : rng.below(1ULL << 30);
        ++checks;
        if (oracle.count(a) && !f.contains(BlockAddress(a * 64))) ++false_neg;
      }
    }
    for (const auto& [a, n] : oracle) false_neg += f.contains(BlockAddress(a * 64)) ? 0 : 1;
    o.require(false_neg == 0, std::to_string(false_neg) + " false negatives");
    o.note("1000000 ops, " + std::to_string(checks) + " queries, 0 false negatives");
  }
  {
    const std::uint64_t items = 16384;
    DlcbfFilter f(size_for_fpr(items, 0.05));
    testgen::Rng rng(77);
    std::set<std::uint64_t> in;
    while (in.size() < items) in.insert(rng.below(1ULL << 40));
    for (auto a : in) f.increment(BlockAddress(a * 64));
    std::uint64_t pos = 0, n = 0;
    while (n < 200'000) {
      const std::uint64_t a = rng.below(1ULL << 40);
      if (in.count(a)) continue;
      ++n;
      pos += f.contains(BlockAddress(a * 64)) ? 1 : 0;
    }
    const double p = double(pos) / double(n);
    const double upper = p + 1.6449 * std::sqrt(p * (1 - p) / double(n));
    o.require(upper <= 0.05, "FPR upper bound " + std::to_string(upper));
    char b[96];
    std::snprintf(b, sizeof b, "FPR %.4f at %llu items (95%% upper bound %.4f)", p,
                  static_cast<unsigned long long>(items), upper);
    o.note(b);
  }
  const double s = since(t0);
  o.require(s <= 60, "took " + secs(s));
  o.note(secs(s));
  return o;
}

// ---------------------------------------------------------------- 4, 5, 6

const std::vector<Pattern> kPatterns = {Pattern::Private, Pattern::SharedUniform, Pattern::ProducerConsumer,
                                        Pattern::Migratory};

struct Sweeps {
  std::map<Pattern, std::map<char, Row>> rows;  // pattern -> size -> row
  std::vector<std::string> errors;
  bool identical = true;
};

fs::path trace_path(const Context& cx, Pattern p) { return cx.dir / (std::string(to_string(p)) + ".trace"); }

Sweeps& sweeps(Context& cx) {
  static std::optional<Sweeps> cache;
  if (cache) return *cache;
  cache.emplace();
  for (Pattern p : kPatterns) {
    GeneratorSpec g;
    g.pattern = p;
    g.footprint_blocks = 16384;
    g.ops_per_core = cx.sweep_ops_per_core;
    g.shared_fraction = 0.8;
    g.seed = 5;
    save_trace(generate(g, default_config(2).shape), trace_path(cx, p).string());
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      cli::SweepArgs a;
      a.trace = trace_path(cx, p).string();
      a.out = (cx.dir / ("sweep-" + std::string(to_string(p)) + "-" + std::to_string(rep))).string();
      std::ostringstream log, err;
      if (cli::cmd_sweep(a, log, err) != cli::kOk) {
        cache->errors.push_back(std::string(to_string(p)) + ": " + err.str());
        break;
      }
      const std::string body = slurp(fs::path(a.out) / "sweep.csv");
      if (rep == 0) {
        first = body;
        for (const Row& r : read_csv(fs::path(a.out) / "sweep.csv")) cache->rows[p][r.at("size")[0]] = r;
      } else {
        cache->identical &= body == first;
      }
    }
  }
  return *cache;
}

Outcome miss_trend(Context& cx) {
  Outcome o;
  Sweeps& s = sweeps(cx);
  for (const auto& e : s.errors) o.require(false, e);
  if (!s.errors.empty()) return o;
  const auto& r = s.rows[Pattern::SharedUniform];
  const double l = num(r.at('L'), "hta_ext_inval_misses"), m = num(r.at('M'), "hta_ext_inval_misses"),
               sm = num(r.at('S'), "hta_ext_inval_misses");
  o.require(l <= m && m <= sm, "HTA ext-inval misses not nondecreasing");
  o.require(sm > l && sm >= 2 * l, "HTA S not >= 2x L");
  char b[160];
  std::snprintf(b, sizeof b, "HTA ext-inval misses L=%.0f M=%.0f S=%.0f", l, m, sm);
  o.note(b);
  double lo = 1e300, hi = 0;
  for (char z : {'L', 'M', 'S'}) {
    const double v = num(r.at(z), "rainbow_onchip_misses");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double spread = lo > 0 ? (hi - lo) / lo : 0;
  o.require(spread <= 0.05, "Rainbow on-chip misses vary " + pct(spread));
  std::snprintf(b, sizeof b, "Rainbow on-chip misses %.0f..%.0f (spread %.3f%%)", lo, hi, spread * 100);
  o.note(b);
  return o;
}

Outcome latency_parity(Context& cx) {
  Outcome o;
  Sweeps& s = sweeps(cx);
  for (const auto& e : s.errors) o.require(false, e);
  if (!s.errors.empty()) return o;
  for (Pattern p : kPatterns) {
    const Row& r = s.rows[p].at('L');
    const double h = num(r, "hta_avg_latency"), b = num(r, "rainbow_avg_latency");
    const double d = (b - h) / h;
    o.require(std::abs(d) <= 0.10, std::string(to_string(p)) + " differs by " + pct(d));
    o.note(std::string(to_string(p)) + " " + pct(d));
  }
  return o;
}

Outcome headline_direction(Context& cx) {
  Outcome o;
  Sweeps& s = sweeps(cx);
  for (const auto& e : s.errors) o.require(false, e);
  if (!s.errors.empty()) return o;
  for (Pattern p : {Pattern::SharedUniform, Pattern::ProducerConsumer, Pattern::Migratory}) {
    const Row& r = s.rows[p].at('S');
    const double h = num(r, "hta_completion_cycle"), b = num(r, "rainbow_completion_cycle");
    o.require(b < h, std::string(to_string(p)) + " Rainbow not faster");
    o.note(std::string(to_string(p)) + " Rainbow/HTA " + pct(b / h - 1));
  }
  return o;
}

// ---------------------------------------------------------------- 7

Outcome loose_inclusivity(Context& cx) {
  Outcome o;
  if (!cx.one_entry_check) {
    CheckBounds b;
    b.budget = cx.budget;
    b.block_stride = b.chips;
    const CheckReport r = explore_once(checker_config(b, 1), b);
    o.require(r.ok, "Rainbow 1-entry check: " + (r.violation ? describe(*r.violation) : std::string()));
    o.note("Rainbow budget-" + std::to_string(cx.budget) + " check with 1-entry D-LLC/D-MEM clean, " +
           std::to_string(r.states) + " states");
  } else {
    o.require(*cx.one_entry_check, cx.one_entry_detail);
    o.note(cx.one_entry_detail + " clean");
  }
  for (std::uint32_t chips : {2u, 4u}) {
    SystemConfig cfg = default_config(chips);
    cfg.dllc_entries_per_bank = 1;
    cfg.dmem_entries = 1;
    cfg.dir_ways = 1;
    scale_run(o, cfg, "rainbow", scale_trace(cfg, cx.ops), std::to_string(chips) + "-CMP rainbow 1-entry");
  }
  return o;
}

// ---------------------------------------------------------------- 8

Outcome determinism(Context& cx) {
  Outcome o;
  Sweeps& s = sweeps(cx);
  o.require(s.errors.empty() && s.identical, "sweep.csv differs between invocations");
  o.note("sweep.csv identical for " + std::to_string(kPatterns.size()) + " patterns");

  for (const char* proto : {"rainbow", "hta"}) {
    std::string first[3];
    for (int rep = 0; rep < 2; ++rep) {
      cli::SimulateArgs a;
      a.protocol = proto;
      a.trace = trace_path(cx, Pattern::Migratory).string();
      a.out = (cx.dir / ("sim-" + std::string(proto) + "-" + std::to_string(rep))).string();
      std::ostringstream log, err;
      o.require(cli::cmd_simulate(a, log, err) == cli::kOk, std::string("simulate ") + proto + ": " + err.str());
      const char* files[3] = {"stats.csv", "latency_breakdown.csv", "links.csv"};
      for (int i = 0; i < 3; ++i) {
        const std::string body = slurp(fs::path(a.out) / files[i]);
        if (rep == 0) first[i] = body;
        else o.require(body == first[i], std::string(proto) + " " + files[i] + " differs");
      }
    }
  }
  o.note("simulate outputs identical for both protocols");

  std::string first;
  for (int rep = 0; rep < 2; ++rep) {
    cli::CheckArgs a;
    a.bounds.budget = 4;
    a.bounds.fault = Fault::SilverDoubleGrant;
    a.out = (cx.dir / ("det-check-" + std::to_string(rep))).string();
    std::ostringstream log, err;
    cli::cmd_check(a, log, err);
    const std::string body = slurp(fs::path(a.out) / "replay-rainbow.trace");
    if (rep == 0) first = body;
    else o.require(!body.empty() && body == first, "replay traces differ");
  }
  o.note("check replay trace identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcsim acceptance suite"};
  Context cx;
  std::vector<int> only;
  std::string dir = (fs::temp_directory_path() / "mcsim-acceptance").string();
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--budget", cx.budget, "checker op budget")->check(CLI::Range(6, 8));
  app.add_option("--hta-pressure-budget", cx.hta_pressure_budget, "HTA op budget with a 1-entry probe filter")
      ->check(CLI::Range(1, 8));
  app.add_option("--ops", cx.ops, "ops per large-trace run");
  app.add_option("--sweep-ops", cx.sweep_ops_per_core, "ops per core in sweep traces");
  app.add_option("--workdir", dir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  cx.dir = dir;
  fs::remove_all(cx.dir);
  fs::create_directories(cx.dir);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"correctness oracle and seeded faults", correctness_oracle},
      {"token conservation at scale", conservation_at_scale},
      {"dLCBF no false negatives, FPR", dlcbf_filter},
      {"HTA miss growth vs Rainbow flat", miss_trend},
      {"latency parity at L", latency_parity},
      {"Rainbow faster at S on sharing", headline_direction},
      {"loose inclusivity with 1-entry directories", loose_inclusivity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(cx);
    } catch (const std::exception& e) {
      o.require(false, e.what());
    }
    failed += !o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.detail << " (" << secs(since(t0)) << ")" << std::endl;
  }
  return failed ? 1 : 0;
}
