#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcsim/types.hpp"

namespace mcsim {

struct TraceRecord {
  std::uint32_t core = 0;  // global
  Op op = Op::Read;
  BlockAddress addr;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using Trace = std::vector<TraceRecord>;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Pattern : std::uint8_t { Private, SharedUniform, ProducerConsumer, Migratory };

const char* to_string(Pattern p);
Pattern pattern_from_string(const std::string& s);

struct GeneratorSpec {
  Pattern pattern = Pattern::Private;
  std::uint64_t footprint_blocks = 1024;  // per core for private data, total for shared data
  std::uint64_t ops_per_core = 1000;
  double shared_fraction = 0.0;
  double write_fraction = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

// Records are grouped by core, in issue order.
Trace generate(const GeneratorSpec& spec, const SystemShape& shape);

Trace parse_trace(std::istream& in);
void write_trace(const Trace& t, std::ostream& out);
Trace load_trace(const std::string& path);
void save_trace(const Trace& t, const std::string& path);

}  // namespace mcsim
