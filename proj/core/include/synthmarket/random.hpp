#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace synthmarket {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Child seed for stream `index` under label `tag` of a parent seed.
///
/// The rule is splitmix64(splitmix64(parent ^ fnv1a(tag)) + index). It is part
/// of the reproducibility contract: scenario seeds written to manifests are
/// computed with it, so changing it changes every generated scenario.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index);

/// 64-bit FNV-1a hash of a byte string.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Matrix of i.i.d. standard normal draws, filled column-major.
Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace synthmarket
