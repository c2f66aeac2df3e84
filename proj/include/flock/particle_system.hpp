#pragma once

#include <span>
#include <vector>

#include "flock/cluster_partition.hpp"
#include "flock/weights.hpp"

namespace flock {

enum class Normalization { OverN, Unnormalized };

/// State of the N-particle alignment system at one instant: positions,
/// velocities (row-major N x d) and the cluster partition recording which
/// particles move as one.  Members of a cluster hold bitwise-identical
/// position and velocity; enforce_clusters() restores that after stepping.
struct ParticleSystem {
    double t = 0.0;
    int n = 0;
    int dim = 0;
    std::vector<double> x; // n*dim
    std::vector<double> v; // n*dim
    ClusterPartition partition;
    Normalization normalization = Normalization::OverN;

    ParticleSystem() = default;
    ParticleSystem(int n_particles, int d, Normalization norm = Normalization::OverN);

    std::span<const double> pos(int i) const { return {x.data() + std::size_t(i) * dim, std::size_t(dim)}; }
    std::span<const double> vel(int i) const { return {v.data() + std::size_t(i) * dim, std::size_t(dim)}; }
    std::span<double> pos(int i) { return {x.data() + std::size_t(i) * dim, std::size_t(dim)}; }
    std::span<double> vel(int i) { return {v.data() + std::size_t(i) * dim, std::size_t(dim)}; }

    /// Prefactor of the interaction sum: 1/N or 1.
    double interaction_scale() const {
        return normalization == Normalization::OverN ? 1.0 / n : 1.0;
    }

    double distance(int i, int j) const;
    double relative_speed(int i, int j) const;

    /// Copy each root's state onto its members.
    void enforce_clusters();

    /// Members of every cluster agree exactly with their root.
    bool clusters_consistent() const;

    /// Throws InvalidParameter / NonFinite when invariants are broken.
    void validate() const;
};

/// Accelerations of Definition-style dynamics: for cluster representative I,
///   a_I = c * sum_{J != I} m_J (v_J - v_I) psi(|x_J - x_I|),
/// with c the normalization prefactor and m_J the cluster multiplicity.
/// Every member receives its representative's acceleration.  Throws
/// SingularEvaluation if two distinct clusters coincide while the kernel
/// has no floor, NonFinite on overflow.
std::vector<double> rhs(const ParticleSystem& s, const WeightKernel& kernel);

/// Total momentum sum_i v_i (cluster members counted individually).
std::vector<double> momentum(const ParticleSystem& s);

/// r = sum over ordered pairs (i,j) of |v_i - v_j|^2.
double velocity_diameter_r(const ParticleSystem& s);

/// R = sum over ordered inter-cluster pairs of |v_i - v_j|^2 psi(|x_i - x_j|),
/// evaluated with the raw (floor = 0) kernel.  Pairs inside one cluster are
/// skipped.  Returns +infinity when distinct clusters coincide in position
/// with nonzero relative velocity (a collision instant).
double dissipation_R(const ParticleSystem& s, const WeightKernel& kernel);

/// max_i |v_i| (Euclidean norm).
double max_speed(const ParticleSystem& s);

} // namespace flock
