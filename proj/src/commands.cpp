#include "mcsim/commands.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "mcsim/engine.hpp"
#include "mcsim/report.hpp"

namespace mcsim::cli {

namespace fs = std::filesystem;

namespace {

SystemConfig config_or_default(const std::string& path) {
  if (path.empty()) return default_config(2);
  if (!fs::exists(path)) throw IoError("config file not found: " + path);
  return load_config(path);
}

Trace read_trace(const std::string& path) {
  if (path.empty()) throw IoError("no trace file given");
  if (!fs::exists(path)) throw IoError("trace file not found: " + path);
  try {
    return load_trace(path);
  } catch (const ParseError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << body;
  if (!f) throw IoError("write failed for " + p.string());
}

void make_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create output directory " + d + ": " + ec.message());
}

template <typename F>
std::string render(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

void dump(const ProtocolViolation& e, std::ostream& err) {
  err << "protocol violation: " << e.what() << '\n';
  if (const auto* a = dynamic_cast<const AuditFailure*>(&e))
    for (const auto& v : a->violations()) err << "  " << describe(v) << '\n';
}

}  // namespace

int cmd_simulate(const SimulateArgs& a, std::ostream& log, std::ostream& err) {
  SystemConfig cfg;
  Trace trace;
  try {
    cfg = config_or_default(a.config);
    trace = read_trace(a.trace);
    make_dir(a.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  try {
    const RunStats s = run(cfg, a.protocol, trace);
    const fs::path out(a.out);
    write_file(out / "stats.csv", render([&](std::ostream& o) { write_stats_csv(s, o); }));
    write_file(out / "latency_breakdown.csv", render([&](std::ostream& o) { write_latency_csv(s, o); }));
    write_file(out / "links.csv", render([&](std::ostream& o) { write_links_csv(s, o); }));
    log << a.protocol << ": " << s.accesses << " accesses, completion cycle " << s.completion_cycle
        << ", avg latency " << fixed6(s.avg_latency()) << '\n';
    return kOk;
  } catch (const ProtocolViolation& e) {
    dump(e, err);
    return kRunViolation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

int cmd_sweep(const SweepArgs& a, std::ostream& log, std::ostream& err) {
  SystemConfig base;
  Trace trace;
  std::vector<SizeLevel> sizes;
  try {
    base = config_or_default(a.config);
    trace = read_trace(a.trace);
    sizes = parse_sizes(a.sizes);
    make_dir(a.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  std::vector<SweepRow> rows;
  for (const auto& s : sizes)
    for (const char* p : {"hta", "rainbow"}) rows.push_back({s, p, {}});
  std::vector<std::string> failures(rows.size());

  // Each leg is an isolated simulation; results land in fixed slots.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SystemConfig cfg = base;
      apply(cfg, rows[i].size);
      try {
        rows[i].stats = run(cfg, rows[i].protocol, trace);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  unsigned jobs = a.jobs ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(rows.size()));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!failures[i].empty()) {
      err << "protocol violation in " << rows[i].protocol << " at size " << rows[i].size.label << ": " << failures[i]
          << '\n';
      return kRunViolation;
    }
  try {
    write_file(fs::path(a.out) / "sweep.csv", render([&](std::ostream& o) { write_sweep_csv(rows, o); }));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  for (const auto& r : rows)
    log << r.size.label << ' ' << r.protocol << ": completion " << r.stats.completion_cycle << ", avg latency "
        << fixed6(r.stats.avg_latency()) << '\n';
  return kOk;
}

int cmd_check(const CheckArgs& a, std::ostream& log, std::ostream& err) {
  CheckReport r;
  try {
    a.bounds.validate();
    make_protocol(a.bounds.protocol, checker_config(a.bounds, 1));
    if (a.bounds.budget == 0) {
      log << "budget 0: nothing to explore\n";
      return kOk;
    }
    r = explore(a.bounds);
  } catch (const BudgetExceeded& e) {
    err << "budget exceeded: " << e.what() << '\n';
    return kBudgetExceeded;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  if (r.ok) {
    log << a.bounds.protocol << ": no violations; " << r.states << " states, " << r.transitions << " transitions, depth "
        << r.max_depth << " (";
    for (std::size_t i = 0; i < r.phases.size(); ++i) log << (i ? "; " : "") << r.phases[i];
    log << ")\n";
    return kOk;
  }
  const SystemShape shape = checker_config(a.bounds, r.dir_entries).shape;
  std::ostringstream body;
  body << "# protocol=" << a.bounds.protocol << " chips=" << a.bounds.chips << " cores=" << a.bounds.cores
       << " dir_entries=" << r.dir_entries << " fault=" << to_string(a.bounds.fault) << '\n';
  body << "# violation: " << describe(*r.violation) << '\n';
  body << format_replay(r.trace, shape);
  const fs::path path = fs::path(a.out) / ("replay-" + a.bounds.protocol + ".trace");
  try {
    make_dir(a.out);
    write_file(path, body.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  err << "violation (" << r.phase << "): " << describe(*r.violation) << '\n';
  err << "replay trace: " << path.string() << '\n';
  return kCheckViolation;
}

int cmd_replay(const ReplayArgs& a, std::ostream& log, std::ostream& err) {
  try {
    std::ifstream in(a.file);
    if (!in) throw IoError("replay file not found: " + a.file);
    std::string first;
    std::getline(in, first);
    CheckBounds b;
    std::uint32_t entries = 0;
    std::istringstream hs(first.size() > 2 ? first.substr(2) : "");
    for (std::string kv; hs >> kv;) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("malformed replay header");
      const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
      if (k == "protocol") b.protocol = v;
      else if (k == "chips") b.chips = static_cast<std::uint32_t>(std::stoul(v));
      else if (k == "cores") b.cores = static_cast<std::uint32_t>(std::stoul(v));
      else if (k == "dir_entries") entries = static_cast<std::uint32_t>(std::stoul(v));
      else if (k == "fault") b.fault = fault_from_string(v);
      else throw ConfigError("unknown replay header key '" + k + "'");
    }
    if (entries == 0) throw ConfigError("replay header lacks dir_entries");
    const SystemConfig cfg = checker_config(b, entries);
    const auto steps = parse_replay(in, cfg.shape);
    if (auto v = replay(cfg, b.protocol, steps)) {
      log << "reproduced: " << describe(*v) << '\n';
      return kCheckViolation;
    }
    log << "replay finished without a violation\n";
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

int cmd_generate(const GenerateArgs& a, std::ostream& log, std::ostream& err) {
  try {
    const SystemConfig cfg = config_or_default(a.config);
    const Trace t = generate(a.spec, cfg.shape);
    if (a.out.empty()) {
      write_trace(t, log);
    } else {
      save_trace(t, a.out);
      log << "wrote " << t.size() << " records to " << a.out << '\n';
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace mcsim::cli
