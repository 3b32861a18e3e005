#include "cisir/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "cisir/rng.hpp"

namespace cisir {

SamplerKind parse_sampler_kind(const std::string& name)
{
    if (name == "ssb" || name == "stratified") return SamplerKind::ssb;
    if (name == "uniform") return SamplerKind::uniform;
    throw ConfigError("unknown sampler '" + name + "'");
}

std::string to_string(SamplerKind k)
{
    return k == SamplerKind::ssb ? "ssb" : "uniform";
}

std::size_t GroupPlan::size() const noexcept
{
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
}

GroupPlan build_groups(std::span<const double> targets, std::size_t batch_size, std::size_t n_rare)
{
    const std::size_t n = targets.size();
    require(batch_size >= 1, "build_groups: batch size must be at least 1");
    if (batch_size > n) {
        throw ConfigError("build_groups: batch size exceeds the number of instances");
    }
    GroupPlan plan;
    plan.batch_size = batch_size;
    plan.batches_per_epoch = (n + batch_size - 1) / batch_size;
    plan.suggested_batch_size = n_rare == 0 ? n : (n + n_rare - 1) / n_rare;
    plan.rare_warning = plan.batches_per_epoch > n_rare;

    IndexList order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return targets[a] < targets[b]; });
    const std::size_t m = plan.batches_per_epoch;
    for (std::size_t start = 0; start < n; start += m) {
        const std::size_t end = std::min(start + m, n);
        plan.groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

BatchList epoch_batches(const GroupPlan& plan, std::uint64_t seed, std::uint64_t epoch)
{
    BatchList batches(plan.batches_per_epoch);
    for (auto& b : batches) b.reserve(plan.groups.size());
    IndexList members;
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        members = plan.groups[g];
        auto rng = keyed_rng({seed, epoch, g});
        shuffle_in_place(std::span<Index>(members), rng);
        for (std::size_t j = 0; j < members.size(); ++j) {
            batches[j].push_back(members[j]);
        }
    }
    return batches;
}

BatchList uniform_epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch)
{
    require(batch_size >= 1 && batch_size <= n, "uniform_epoch_batches: need 1 <= batch_size <= n");
    IndexList perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = keyed_rng({seed, epoch, 0x756e69666f726dULL});
    shuffle_in_place(std::span<Index>(perm), rng);
    BatchList batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(start + batch_size, n);
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace cisir
