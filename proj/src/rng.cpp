#include "d4pg/rng.hpp"

#include <sstream>
#include <vector>

#include "d4pg/errors.hpp"

namespace d4pg {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  std::uint64_t label_hash = 0xcbf29ce484222325ull;
  for (char c : label) {
    label_hash ^= static_cast<unsigned char>(c);
    label_hash *= 0x100000001b3ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(label_hash),
                    static_cast<std::uint32_t>(label_hash >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::vector<std::uint32_t> out(2);
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string save_rng(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 load_rng(const std::string& text) {
  std::istringstream is(text);
  std::mt19937_64 rng;
  is >> rng;
  if (is.fail()) throw LoadError("malformed random generator state");
  return rng;
}

}  // namespace d4pg
