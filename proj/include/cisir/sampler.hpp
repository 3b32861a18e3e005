#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cisir/common.hpp"

namespace cisir {

enum class SamplerKind { ssb, uniform };

SamplerKind parse_sampler_kind(const std::string& name);
std::string to_string(SamplerKind k);

using BatchList = std::vector<IndexList>;

/// Target-sorted grouping for stratified mini-batches. Indices refer to
/// positions in the target vector the plan was built from.
struct GroupPlan {
    std::vector<IndexList> groups; // B groups of M (last possibly shorter)
    std::size_t batch_size = 0;    // B
    std::size_t batches_per_epoch = 0; // M = ceil(N / B)
    /// Set when M exceeds the number of rare instances, in which case some
    /// batches cannot contain a rare instance.
    bool rare_warning = false;
    /// Smallest batch size with ceil(N / B') <= n_rare (N when n_rare is 0).
    std::size_t suggested_batch_size = 0;

    std::size_t size() const noexcept;
};

GroupPlan build_groups(std::span<const double> targets, std::size_t batch_size, std::size_t n_rare);

/// One epoch of stratified batches: every group is permuted with a
/// generator keyed by (seed, epoch, group) and batch j takes the j-th
/// member of each group that has more than j members.
BatchList epoch_batches(const GroupPlan& plan, std::uint64_t seed, std::uint64_t epoch);

/// Uniform baseline: a keyed global permutation chunked into batches of
/// `batch_size` (last possibly shorter).
BatchList uniform_epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

} // namespace cisir
