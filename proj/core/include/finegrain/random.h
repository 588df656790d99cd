#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace finegrain {

using Rng = std::mt19937_64;

// Derives an independent child seed for a named consumer. The mapping is a
// pure function of (root, name), so adding a consumer never shifts the seeds
// of the others.
std::uint64_t derive_seed(std::uint64_t root, std::string_view consumer);

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace finegrain
