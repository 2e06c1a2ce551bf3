#include "gridprompt/scenario_gen.hpp"

#include <cmath>

#include "gridprompt/errors.hpp"

namespace gridprompt {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum Field : std::uint64_t { kActive = 0, kReactive = 1 };

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    std::uint64_t h = splitmix64(seed_);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

double CounterRng::unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return static_cast<double>(bits(a, b, c) >> 11) * 0x1.0p-53;
}

void validate(const MutationSpec& spec) {
    if (!(spec.relative_halfwidth >= 0.0 && spec.relative_halfwidth < 1.0)) {
        throw ConfigError("relative_halfwidth must lie in [0, 1)");
    }
    if (spec.distribution == MutationDistribution::profile && !spec.profile) {
        throw ConfigError("profile distribution requires a profile hook");
    }
}

GridCase mutate(const GridCase& grid, const MutationSpec& spec, std::uint64_t index) {
    validate(spec);
    GridCase out = grid;
    const CounterRng rng(spec.seed);
    const double h = spec.relative_halfwidth;
    for (Load& load : out.loads) {
        LoadFactors f;
        if (spec.distribution == MutationDistribution::profile) {
            f = spec.profile(load, index);
        } else if (h > 0.0) {
            const auto id = static_cast<std::uint64_t>(load.id);
            f.p = 1.0 - h + 2.0 * h * rng.unit(index, id, kActive);
            f.q = 1.0 - h + 2.0 * h * rng.unit(index, id, kReactive);
        }
        load.p_mw *= f.p;
        load.q_mvar *= f.q;
    }
    return out;
}

std::vector<GridCase> generate_dataset(const GridCase& grid, const MutationSpec& spec, std::size_t n) {
    if (n == 0) throw ConfigError("dataset size must be at least 1");
    std::vector<GridCase> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(mutate(grid, spec, i));
    return out;
}

}  // namespace gridprompt
