#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace d4pg {

// Independent generator seed for a labelled substream ("env", "noise",
// "replay", ...) of a master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

std::string save_rng(const std::mt19937_64& rng);
// Throws LoadError on malformed text.
std::mt19937_64 load_rng(const std::string& text);

}  // namespace d4pg
