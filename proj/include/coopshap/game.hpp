#ifndef COOPSHAP_GAME_HPP
#define COOPSHAP_GAME_HPP

#include <bit>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace coopshap::game {

// A coalition over agents {0..n-1}, bit i set <=> agent i is a member.
using Mask = std::uint32_t;

constexpr int kMaxAgents = 20;

inline Mask full_mask(int n) { return (Mask{1} << n) - 1; }
inline bool contains(Mask c, int agent) { return (c >> agent) & 1u; }
inline int cardinality(Mask c) { return std::popcount(c); }

// Explicit characteristic function v : 2^N -> R>=0 as a dense table.
struct CharacteristicTable {
    int n = 0;
    std::vector<double> values;  // size 1 << n, indexed by Mask

    double v(Mask c) const { return values[c]; }

    static CharacteristicTable zeros(int n);

    // Throws std::invalid_argument on: bad n, wrong table size, v(empty) != 0,
    // or a negative entry.
    void validate() const;
};

using PayoffVector = std::vector<double>;

// Coalition structure (a partition of N) plus the payoff vector.
struct Outcome {
    std::vector<Mask> structure;
    PayoffVector payoff;
};

struct ConvexityResult {
    bool convex = true;
    Mask witness_c = 0;  // meaningful only when !convex
    Mask witness_d = 0;
};

struct CoreReport {
    std::vector<Mask> violations;  // coalitions with x(C) < v(C) - eps
    bool grand_feasible = true;    // x(N) <= v(N) + eps

    bool in_core() const { return violations.empty(); }
};

inline constexpr int kDefaultExactCap = 12;

// Shapley weights |C|!(n-|C|-1)!/n! indexed by |C|, via running products
// (no factorial overflow up to kMaxAgents).
std::vector<double> shapley_weights(int n);

// Exact Shapley value by coalition enumeration. O(n * 2^n).
PayoffVector shapley_exact(const CharacteristicTable& game, int n_exact = kDefaultExactCap);

// Permutation-sampling estimator of the Shapley value: averages per-agent
// marginal contributions over `samples` uniform permutations. Unbiased;
// deterministic per seed. With exhaustive=true all n! permutations are
// visited once in ascending lexicographic rank and `samples`/`seed` are
// ignored.
PayoffVector shapley_permutation_mc(const CharacteristicTable& game, std::uint64_t samples,
                                    std::uint64_t seed, bool exhaustive = false);

// Supermodularity check over all coalition pairs; on failure reports the
// lexicographically smallest violating (C, D) by mask value.
ConvexityResult is_convex(const CharacteristicTable& game, double eps = 1e-12,
                          int n_exact = kDefaultExactCap);

// All coalitions whose members could gain by deviating from x, plus the
// grand-coalition feasibility flag.
CoreReport core_violations(const CharacteristicTable& game, const PayoffVector& x,
                           double eps = 1e-9, int n_exact = kDefaultExactCap);

// Payoffs from sequential marginal contributions under `order` (a permutation
// of 0..n-1); telescopes to v(N).
PayoffVector marginal_vector(const CharacteristicTable& game, const std::vector<int>& order);

// True iff x(C) = v(C) within eps for every block of the structure.
bool efficiency_check(const CharacteristicTable& game, const Outcome& outcome, double eps = 1e-9);

// v(C) = sum of individual values of members. Convex by construction.
CharacteristicTable additive_game(const std::vector<double>& individual);

// v(C) = (sum of member weights)^2 with weights uniform(0,1] per seed.
// Supermodular; test fixture for core-membership properties.
CharacteristicTable random_supermodular_game(int n, std::uint64_t seed);

// Text game file: line 1 "n=<count>", then "mask=<int> v=<real>" lines.
// Missing masks default to 0; the empty coalition must be 0 if present.
CharacteristicTable read_game(std::istream& in);
CharacteristicTable read_game_file(const std::string& path);
void write_game(std::ostream& out, const CharacteristicTable& game);

std::string mask_to_string(Mask c, int n);  // e.g. "{1,3}" (1-based agent ids)

}  // namespace coopshap::game

#endif
