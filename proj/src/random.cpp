#include "capstruct/random.hpp"

#include <cmath>

namespace capstruct {

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// The std:: distributions are implementation-defined, so draws are built
// from raw engine output to keep streams identical across standard libraries.
double RandomSource::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomSource::normal(double mean, double sd) {
    // Box-Muller; one value per call keeps the stream position simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sd * z;
}

double RandomSource::student_t(double dof) {
    const double z = normal();
    // Chi-square(dof) as a sum of squared normals when dof is integral.
    double chi2 = 0.0;
    const int k = static_cast<int>(std::lround(dof));
    for (int i = 0; i < k; ++i) {
        const double g = normal();
        chi2 += g * g;
    }
    return z / std::sqrt(chi2 / dof);
}

std::size_t RandomSource::index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

}  // namespace capstruct
