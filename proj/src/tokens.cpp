#include "mcsim/tokens.hpp"

#include <algorithm>
#include <sstream>

namespace mcsim {

TokenSet& TokenSet::operator-=(const TokenSet& o) {
  if (!covers(o)) throw ConservationViolation("token subtraction underflow: " + to_string(*this) + " - " + to_string(o));
  gold -= o.gold;
  silver -= o.silver;
  bronze -= o.bronze;
  return *this;
}

std::ostream& operator<<(std::ostream& os, const TokenSet& t) {
  return os << '{' << t.gold << ',' << t.silver << ',' << t.bronze << '}';
}

std::string to_string(const TokenSet& t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

TokenSet full_set(const SystemShape& shape) { return {1, shape.num_chips, shape.total_cores()}; }

bool is_full(const TokenSet& t, const SystemShape& shape) { return t == full_set(shape); }

bool well_formed(const TokenSet& t, const SystemShape& shape) {
  return full_set(shape).covers(t) && (t.gold == 0 || t.bronze >= 1);
}

TokenSet merge(const TokenSet& a, const TokenSet& b, const SystemShape& shape) {
  TokenSet sum = a;
  sum += b;
  if (!full_set(shape).covers(sum))
    throw ConservationViolation("merge exceeds full set: " + to_string(a) + " + " + to_string(b));
  return sum;
}

ReadSplit split_for_external_read(const TokenSet& holder, std::uint32_t requestor_chip_cores) {
  if (holder.silver < 2) throw InsufficientSilver("holder " + to_string(holder) + " has no spare silver");
  if (holder.gold != 1 || holder.bronze < 2)
    throw std::invalid_argument("external read split needs gold and two bronze: " + to_string(holder));
  TokenSet granted{0, 1, std::max<std::uint32_t>(1, std::min(requestor_chip_cores, holder.bronze - 1))};
  TokenSet retained = holder;
  retained -= granted;
  return {granted, retained};
}

}  // namespace mcsim
