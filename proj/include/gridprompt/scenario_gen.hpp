#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gridprompt/grid_model.hpp"

namespace gridprompt {

enum class MutationDistribution { uniform, profile };

/// Multipliers applied to one load's (p, q).
struct LoadFactors {
    double p = 1.0;
    double q = 1.0;
};

/// Hook for profile-driven mutation: returns the multipliers for `load` in
/// scenario `index`. Only consulted when distribution == profile.
using LoadProfileHook = std::function<LoadFactors(const Load& load, std::uint64_t index)>;

struct MutationSpec {
    MutationDistribution distribution = MutationDistribution::uniform;
    double relative_halfwidth = 0.20;
    std::uint64_t seed = 0;
    LoadProfileHook profile;
};

void validate(const MutationSpec& spec);

/// Stateless counter-based generator: every draw is a pure function of its key.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;
    /// Uniform in [0, 1) with 53 bits of resolution.
    double unit(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

private:
    std::uint64_t seed_;
};

/// Scales every load's p and q by independent Uniform[1-h, 1+h] draws keyed on
/// (seed, index, load id, field). Everything else is copied unchanged.
GridCase mutate(const GridCase& grid, const MutationSpec& spec, std::uint64_t index);

/// Scenarios 0..n-1.
std::vector<GridCase> generate_dataset(const GridCase& grid, const MutationSpec& spec, std::size_t n);

}  // namespace gridprompt
