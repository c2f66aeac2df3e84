#include "flock/particle_system.hpp"

#include <cmath>

namespace flock {

ParticleSystem::ParticleSystem(int n_particles, int d, Normalization norm)
    : n(n_particles), dim(d), partition(n_particles), normalization(norm) {
    if (n < 1 || d < 1)
        throw InvalidParameter("particle system requires n >= 1 and dim >= 1");
    x.assign(std::size_t(n) * dim, 0.0);
    v.assign(std::size_t(n) * dim, 0.0);
}

double ParticleSystem::distance(int i, int j) const {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double d = x[std::size_t(j) * dim + c] - x[std::size_t(i) * dim + c];
        s += d * d;
    }
    return std::sqrt(s);
}

double ParticleSystem::relative_speed(int i, int j) const {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
        const double d = v[std::size_t(j) * dim + c] - v[std::size_t(i) * dim + c];
        s += d * d;
    }
    return std::sqrt(s);
}

void ParticleSystem::enforce_clusters() {
    for (int i = 0; i < n; ++i) {
        const int r = partition.find(i);
        if (r == i)
            continue;
        for (int c = 0; c < dim; ++c) {
            x[std::size_t(i) * dim + c] = x[std::size_t(r) * dim + c];
            v[std::size_t(i) * dim + c] = v[std::size_t(r) * dim + c];
        }
    }
}

bool ParticleSystem::clusters_consistent() const {
    for (int i = 0; i < n; ++i) {
        const int r = partition.find(i);
        for (int c = 0; c < dim; ++c) {
            if (x[std::size_t(i) * dim + c] != x[std::size_t(r) * dim + c] ||
                v[std::size_t(i) * dim + c] != v[std::size_t(r) * dim + c])
                return false;
        }
    }
    return true;
}

void ParticleSystem::validate() const {
    if (n < 1 || dim < 1)
        throw InvalidParameter("particle system requires n >= 1 and dim >= 1");
    if (x.size() != std::size_t(n) * dim || v.size() != std::size_t(n) * dim)
        throw InvalidParameter("state arrays do not match n*dim");
    if (partition.size() != n)
        throw InvalidParameter("partition size does not match n");
    for (double a : x)
        if (!std::isfinite(a))
            throw NonFinite("non-finite position");
    for (double a : v)
        if (!std::isfinite(a))
            throw NonFinite("non-finite velocity");
}

std::vector<double> rhs(const ParticleSystem& s, const WeightKernel& kernel) {
    const int d = s.dim;
    const double scale = s.interaction_scale();
    std::vector<double> acc(std::size_t(s.n) * d, 0.0);

    const std::vector<int> roots = s.partition.roots();
    const int nr = static_cast<int>(roots.size());

    // Accumulate per root in fixed (ascending) order, then scatter to members.
    for (int a = 0; a < nr; ++a) {
        const int i = roots[a];
        double* out = acc.data() + std::size_t(i) * d;
        for (int b = 0; b < nr; ++b) {
            if (b == a)
                continue;
            const int j = roots[b];
            const double dist = s.distance(i, j);
            double w = kernel.eval(dist);
            if (std::isinf(w)) {
                if (s.relative_speed(i, j) == 0.0)
                    continue; // 0 * inf resolved to 0 by convention
                throw SingularEvaluation("distinct clusters coincide with floor = 0");
            }
            w *= scale * s.partition.cluster_size(j);
            for (int c = 0; c < d; ++c)
                out[c] += w * (s.v[std::size_t(j) * d + c] - s.v[std::size_t(i) * d + c]);
        }
        for (int c = 0; c < d; ++c)
            if (!std::isfinite(out[c]))
                throw NonFinite("non-finite acceleration");
    }

    for (int i = 0; i < s.n; ++i) {
        const int r = s.partition.find(i);
        if (r != i)
            for (int c = 0; c < d; ++c)
                acc[std::size_t(i) * d + c] = acc[std::size_t(r) * d + c];
    }
    return acc;
}

std::vector<double> momentum(const ParticleSystem& s) {
    std::vector<double> p(s.dim, 0.0);
    for (int i = 0; i < s.n; ++i)
        for (int c = 0; c < s.dim; ++c)
            p[c] += s.v[std::size_t(i) * s.dim + c];
    return p;
}

double velocity_diameter_r(const ParticleSystem& s) {
    // Sum over ordered pairs of cluster roots, weighted by multiplicities;
    // same-cluster pairs contribute zero by cluster consistency.
    const std::vector<int> roots = s.partition.roots();
    double r = 0.0;
    for (std::size_t a = 0; a < roots.size(); ++a) {
        for (std::size_t b = a + 1; b < roots.size(); ++b) {
            const int i = roots[a], j = roots[b];
            const double sp = s.relative_speed(i, j);
            r += 2.0 * double(s.partition.cluster_size(i)) * s.partition.cluster_size(j) * sp * sp;
        }
    }
    return r;
}

double dissipation_R(const ParticleSystem& s, const WeightKernel& kernel) {
    const WeightKernel raw = kernel.with_floor(0.0);
    const std::vector<int> roots = s.partition.roots();
    double total = 0.0;
    for (std::size_t a = 0; a < roots.size(); ++a) {
        for (std::size_t b = a + 1; b < roots.size(); ++b) {
            const int i = roots[a], j = roots[b];
            const double sp = s.relative_speed(i, j);
            const double w = raw.eval(s.distance(i, j));
            if (std::isinf(w)) {
                if (sp == 0.0)
                    continue;
                return std::numeric_limits<double>::infinity();
            }
            total += 2.0 * double(s.partition.cluster_size(i)) * s.partition.cluster_size(j) *
                     sp * sp * w;
        }
    }
    return total;
}

double max_speed(const ParticleSystem& s) {
    double best = 0.0;
    for (int i = 0; i < s.n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < s.dim; ++c) {
            const double a = s.v[std::size_t(i) * s.dim + c];
            sq += a * a;
        }
        best = std::max(best, sq);
    }
    return std::sqrt(best);
}

} // namespace flock
