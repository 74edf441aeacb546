#pragma once

#include <cstdint>
#include <random>

namespace capstruct {

/// Derives a child seed from (parent, index) with a splitmix64 finaliser, so
/// parallel tasks get independent streams regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// Seeded pseudo-random stream. Single owner; never share between tasks.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    RandomSource child(std::uint64_t index) const { return RandomSource(derive_seed(seed_, index)); }

    double normal(double mean = 0.0, double sd = 1.0);
    double uniform();  // [0, 1)
    double student_t(double dof);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace capstruct
