#include "synthmarket/random.hpp"

namespace synthmarket {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) {
    return splitmix64(splitmix64(parent ^ fnv1a64(tag)) + index);
}

Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd out(rows, cols);
    double* p = out.data();
    for (Eigen::Index i = 0; i < out.size(); ++i) p[i] = n01(rng);
    return out;
}

}  // namespace synthmarket
