#pragma once

#include <cstdint>
#include <vector>

#include "flock/errors.hpp"

namespace flock {

/// Disjoint-set partition over particle indices, tracking which particles
/// have stuck together.  Merges only coarsen the partition; they are never
/// undone.  The merge log keeps (time, representative pair) per union so a
/// historical partition can be reconstructed from any version number.
class ClusterPartition {
public:
    struct MergeEntry {
        double t;      // simulation time of the union
        int rep_a;     // smallest member index of each merged cluster,
        int rep_b;     // rep_a < rep_b
    };

    ClusterPartition() = default;
    explicit ClusterPartition(int n);

    int size() const { return static_cast<int>(parent_.size()); }

    /// Root of particle i (no path mutation; the structure stays shallow
    /// because unions always link the smaller tree under the larger).
    int find(int i) const;

    bool same(int i, int j) const { return find(i) == find(j); }

    /// Member count of the cluster containing i.
    int cluster_size(int i) const { return count_[find(i)]; }

    /// Smallest particle index in the cluster containing i (stable label).
    int representative(int i) const { return min_member_[find(i)]; }

    int n_clusters() const { return n_clusters_; }

    /// Roots in ascending order; fixed iteration order for determinism.
    std::vector<int> roots() const;

    /// Union the clusters of i and j at time t.  Returns the surviving root.
    /// Throws InvalidMerge if they already share a cluster.
    int unite(int i, int j, double t);

    const std::vector<MergeEntry>& merge_log() const { return merge_log_; }

    /// Number of merges so far; identifies the partition epoch.
    std::uint32_t version() const { return static_cast<std::uint32_t>(merge_log_.size()); }

    /// Partition as it was after `version` merges (reconstructed from the log).
    ClusterPartition at_version(std::uint32_t version) const;

    /// Invariant check: sizes of roots sum to n.
    bool consistent() const;

private:
    std::vector<int> parent_;
    std::vector<int> count_;      // valid at roots
    std::vector<int> min_member_; // valid at roots
    int n_clusters_ = 0;
    std::vector<MergeEntry> merge_log_;
};

} // namespace flock
