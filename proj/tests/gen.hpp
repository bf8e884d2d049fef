#pragma once

// Tiny property-test generators over std::mt19937_64, kept separate from the
// library's own generator.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gen {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t u64() { return eng_(); }
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(eng_);
    }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(eng_); }

    std::string ident(std::size_t max_len = 8) {
        static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789_.-";
        const auto len = between(1, max_len);
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s += alphabet[between(0, sizeof(alphabet) - 2)];
        return s;
    }

    std::vector<std::string> distinct_ids(std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(ident() + "#" + std::to_string(i));
        return out;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace gen
