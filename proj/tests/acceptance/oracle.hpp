#pragma once

#include <cstdint>
#include <vector>

#include "scrhet/model.hpp"
#include "scrhet/simulate.hpp"

namespace oracle {

/// Small random instance: M <= 3 rows on a lattice with J <= 3 detectors.
struct ToyInstance {
    scrhet::Dataset data;
    scrhet::ModelSpec spec;
    scrhet::ChainState state;
};

ToyInstance random_toy(scrhet::ModelKind kind, std::uint64_t seed);

/// Log-posterior by enumerating every density term from the raw inputs,
/// without calling into the library's likelihood code.
double log_posterior(const ToyInstance& toy);

}  // namespace oracle
