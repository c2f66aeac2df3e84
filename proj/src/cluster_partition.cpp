#include "flock/cluster_partition.hpp"

#include <algorithm>
#include <numeric>

namespace flock {

ClusterPartition::ClusterPartition(int n) {
    if (n < 1)
        throw InvalidParameter("partition requires n >= 1");
    parent_.resize(n);
    std::iota(parent_.begin(), parent_.end(), 0);
    count_.assign(n, 1);
    min_member_.resize(n);
    std::iota(min_member_.begin(), min_member_.end(), 0);
    n_clusters_ = n;
}

int ClusterPartition::find(int i) const {
    while (parent_[i] != i)
        i = parent_[i];
    return i;
}

std::vector<int> ClusterPartition::roots() const {
    std::vector<int> out;
    out.reserve(n_clusters_);
    for (int i = 0; i < size(); ++i)
        if (parent_[i] == i)
            out.push_back(i);
    return out;
}

int ClusterPartition::unite(int i, int j, double t) {
    int a = find(i), b = find(j);
    if (a == b)
        throw InvalidMerge("particles already share a cluster");
    merge_log_.push_back({t, std::min(min_member_[a], min_member_[b]),
                          std::max(min_member_[a], min_member_[b])});
    // Link smaller under larger; ties keep the lower root for determinism.
    if (count_[a] < count_[b] || (count_[a] == count_[b] && b < a))
        std::swap(a, b);
    parent_[b] = a;
    count_[a] += count_[b];
    min_member_[a] = std::min(min_member_[a], min_member_[b]);
    --n_clusters_;
    return a;
}

ClusterPartition ClusterPartition::at_version(std::uint32_t version) const {
    ClusterPartition p(size());
    for (std::uint32_t k = 0; k < version && k < merge_log_.size(); ++k)
        p.unite(merge_log_[k].rep_a, merge_log_[k].rep_b, merge_log_[k].t);
    return p;
}

bool ClusterPartition::consistent() const {
    long total = 0;
    for (int i = 0; i < size(); ++i)
        if (parent_[i] == i)
            total += count_[i];
    return total == size();
}

} // namespace flock
