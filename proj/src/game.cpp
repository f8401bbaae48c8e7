#include "coopshap/game.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "coopshap/rng.hpp"

namespace coopshap::game {

namespace {

void check_capacity(const CharacteristicTable& game, int n_exact, const char* op) {
    if (game.n > n_exact) {
        throw std::invalid_argument(std::string(op) + ": n=" + std::to_string(game.n) +
                                    " exceeds the exact-enumeration cap n_exact=" +
                                    std::to_string(n_exact));
    }
}

}  // namespace

CharacteristicTable CharacteristicTable::zeros(int n) {
    CharacteristicTable t;
    t.n = n;
    t.values.assign(std::size_t{1} << n, 0.0);
    return t;
}

void CharacteristicTable::validate() const {
    if (n < 1 || n > kMaxAgents)
        throw std::invalid_argument("game: n must be in [1, " + std::to_string(kMaxAgents) + "]");
    if (values.size() != (std::size_t{1} << n))
        throw std::invalid_argument("game: table size " + std::to_string(values.size()) +
                                    " does not match 2^" + std::to_string(n));
    if (values[0] != 0.0)
        throw std::invalid_argument("game: v(empty coalition) must be exactly 0");
    for (std::size_t c = 0; c < values.size(); ++c) {
        if (!(values[c] >= 0.0))
            throw std::invalid_argument("game: v at mask " + std::to_string(c) +
                                        " is negative or non-finite");
    }
}

std::vector<double> shapley_weights(int n) {
    // w[c] = c!(n-c-1)!/n!. Running product: w[0] = 1/n, w[c] = w[c-1]*c/(n-c).
    std::vector<double> w(n);
    w[0] = 1.0 / n;
    for (int c = 1; c < n; ++c) w[c] = w[c - 1] * c / (n - c);
    return w;
}

PayoffVector shapley_exact(const CharacteristicTable& game, int n_exact) {
    game.validate();
    check_capacity(game, n_exact, "shapley_exact");
    const int n = game.n;
    const Mask all = full_mask(n);
    const std::vector<double> w = shapley_weights(n);
    PayoffVector phi(n, 0.0);
    for (Mask c = 0; c <= all; ++c) {
        const double wc = w[cardinality(c)];
        for (int i = 0; i < n; ++i) {
            if (contains(c, i)) continue;
            phi[i] += wc * (game.v(c | (Mask{1} << i)) - game.v(c));
        }
    }
    return phi;
}

PayoffVector shapley_permutation_mc(const CharacteristicTable& game, std::uint64_t samples,
                                    std::uint64_t seed, bool exhaustive) {
    game.validate();
    const int n = game.n;
    PayoffVector acc(n, 0.0);

    auto accumulate_order = [&](const std::vector<int>& order) {
        Mask built = 0;
        double prev = 0.0;  // v(empty)
        for (int agent : order) {
            built |= Mask{1} << agent;
            const double cur = game.v(built);
            acc[agent] += cur - prev;
            prev = cur;
        }
    };

    std::uint64_t count = 0;
    if (exhaustive) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        do {
            accumulate_order(order);
            ++count;
        } while (std::next_permutation(order.begin(), order.end()));
    } else {
        if (samples == 0)
            throw std::invalid_argument("shapley_permutation_mc: samples must be >= 1");
        Rng rng(seed);
        std::vector<int> order(n);
        for (std::uint64_t s = 0; s < samples; ++s) {
            std::iota(order.begin(), order.end(), 0);
            for (int k = n - 1; k > 0; --k)  // Fisher-Yates
                std::swap(order[k], order[rng.uniform_index(std::uint64_t(k) + 1)]);
            accumulate_order(order);
        }
        count = samples;
    }
    for (double& x : acc) x /= static_cast<double>(count);
    return acc;
}

ConvexityResult is_convex(const CharacteristicTable& game, double eps, int n_exact) {
    game.validate();
    check_capacity(game, n_exact, "is_convex");
    const Mask all = full_mask(game.n);
    for (Mask c = 0; c <= all; ++c) {
        for (Mask d = 0; d <= all; ++d) {
            if (game.v(c | d) + game.v(c & d) < game.v(c) + game.v(d) - eps)
                return {false, c, d};
        }
    }
    return {true, 0, 0};
}

CoreReport core_violations(const CharacteristicTable& game, const PayoffVector& x, double eps,
                           int n_exact) {
    game.validate();
    check_capacity(game, n_exact, "core_violations");
    if (static_cast<int>(x.size()) != game.n)
        throw std::invalid_argument("core_violations: payoff length " +
                                    std::to_string(x.size()) + " != n=" + std::to_string(game.n));
    const Mask all = full_mask(game.n);
    CoreReport report;
    for (Mask c = 1; c <= all; ++c) {
        double xc = 0.0;
        for (int i = 0; i < game.n; ++i)
            if (contains(c, i)) xc += x[i];
        if (xc < game.v(c) - eps) report.violations.push_back(c);
        if (c == all) report.grand_feasible = xc <= game.v(all) + eps;
    }
    return report;
}

PayoffVector marginal_vector(const CharacteristicTable& game, const std::vector<int>& order) {
    game.validate();
    if (static_cast<int>(order.size()) != game.n)
        throw std::invalid_argument("marginal_vector: order length != n");
    std::vector<bool> seen(game.n, false);
    for (int agent : order) {
        if (agent < 0 || agent >= game.n || seen[agent])
            throw std::invalid_argument("marginal_vector: order is not a permutation of 0..n-1");
        seen[agent] = true;
    }
    PayoffVector x(game.n, 0.0);
    Mask built = 0;
    double prev = 0.0;
    for (int agent : order) {
        built |= Mask{1} << agent;
        x[agent] = game.v(built) - prev;
        prev = game.v(built);
    }
    return x;
}

bool efficiency_check(const CharacteristicTable& game, const Outcome& outcome, double eps) {
    game.validate();
    Mask covered = 0;
    for (Mask block : outcome.structure) {
        if (block & covered)
            throw std::invalid_argument("efficiency_check: structure blocks overlap");
        covered |= block;
    }
    if (covered != full_mask(game.n))
        throw std::invalid_argument("efficiency_check: structure does not cover all agents");
    if (static_cast<int>(outcome.payoff.size()) != game.n)
        throw std::invalid_argument("efficiency_check: payoff length != n");
    for (Mask block : outcome.structure) {
        double xb = 0.0;
        for (int i = 0; i < game.n; ++i)
            if (contains(block, i)) xb += outcome.payoff[i];
        if (std::abs(xb - game.v(block)) > eps) return false;
    }
    return true;
}

CharacteristicTable additive_game(const std::vector<double>& individual) {
    const int n = static_cast<int>(individual.size());
    if (n < 1 || n > kMaxAgents)
        throw std::invalid_argument("additive_game: need between 1 and 20 agents");
    for (double v : individual)
        if (!(v >= 0.0)) throw std::invalid_argument("additive_game: negative individual value");
    CharacteristicTable t = CharacteristicTable::zeros(n);
    for (Mask c = 1; c <= full_mask(n); ++c) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            if (contains(c, i)) sum += individual[i];
        t.values[c] = sum;
    }
    return t;
}

CharacteristicTable random_supermodular_game(int n, std::uint64_t seed) {
    if (n < 1 || n > kDefaultExactCap)
        throw std::invalid_argument("random_supermodular_game: n out of range");
    Rng rng(seed);
    std::vector<double> w(n);
    for (double& wi : w) wi = 1.0 - rng.uniform();  // (0, 1]
    CharacteristicTable t = CharacteristicTable::zeros(n);
    for (Mask c = 1; c <= full_mask(n); ++c) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            if (contains(c, i)) sum += w[i];
        t.values[c] = sum * sum;
    }
    return t;
}

CharacteristicTable read_game(std::istream& in) {
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw std::runtime_error("game file line " + std::to_string(lineno) + ": " + msg);
    };

    int n = -1;
    CharacteristicTable t;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;  // blank
        if (n < 0) {
            if (tok.rfind("n=", 0) != 0) fail("expected 'n=<count>' first");
            n = std::stoi(tok.substr(2));
            if (n < 1 || n > kMaxAgents) fail("n out of range [1, 20]");
            t = CharacteristicTable::zeros(n);
            continue;
        }
        if (tok.rfind("mask=", 0) != 0) fail("expected 'mask=<int> v=<real>'");
        const unsigned long mask = std::stoul(tok.substr(5));
        if (mask >= (1ul << n)) fail("mask out of range for n=" + std::to_string(n));
        std::string vtok;
        if (!(ls >> vtok) || vtok.rfind("v=", 0) != 0) fail("missing 'v=<real>'");
        const double value = std::stod(vtok.substr(2));
        if (mask == 0 && value != 0.0) fail("v(empty coalition) must be 0");
        if (value < 0.0) fail("coalition value must be nonnegative");
        t.values[mask] = value;
    }
    if (n < 0) throw std::runtime_error("game file: empty (missing 'n=<count>')");
    t.validate();
    return t;
}

CharacteristicTable read_game_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open game file: " + path);
    return read_game(in);
}

void write_game(std::ostream& out, const CharacteristicTable& game) {
    out << "n=" << game.n << "\n";
    for (Mask c = 1; c < game.values.size(); ++c)
        if (game.values[c] != 0.0) out << "mask=" << c << " v=" << game.values[c] << "\n";
}

std::string mask_to_string(Mask c, int n) {
    std::string s = "{";
    bool first = true;
    for (int i = 0; i < n; ++i) {
        if (!contains(c, i)) continue;
        if (!first) s += ",";
        s += std::to_string(i + 1);
        first = false;
    }
    return s + "}";
}

}  // namespace coopshap::game
