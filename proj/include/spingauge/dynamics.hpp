#pragma once

// Time evolution and measurement: dense eigendecomposition for small sectors,
// Lanczos/Krylov propagation with full reorthogonalization for larger ones,
// and the observable suite (link fluxes, charges, electric energy, plaquette
// products, named configuration probabilities).
//
// Units: hbar = 1; energies in units of mu unless the configuration says
// otherwise, times in the inverse unit.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spingauge/effective.hpp"
#include "spingauge/operators.hpp"

namespace spingauge {

using StateVector = Vec;

struct CutoffExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EigenSystem {
    Eigen::VectorXd eigenvalues; // ascending
    Mat eigenvectors;
};

/// Dense eigendecomposition with a per-pair residual check against the sparse
/// matrix. Refuses above the cutoff; Krylov propagation covers those sizes.
inline EigenSystem eigendecompose(const SparseOperator& h, Eigen::Index dense_cutoff = 4096) {
    if (h.dim() > dense_cutoff)
        throw CutoffExceeded("dimension " + std::to_string(h.dim()) + " exceeds the dense cutoff " +
                             std::to_string(dense_cutoff) + "; use the krylov method");
    Eigen::SelfAdjointEigenSolver<Mat> es(h.dense());
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    EigenSystem sys{es.eigenvalues(), es.eigenvectors()};
    Mat resid = h.mat * sys.eigenvectors - sys.eigenvectors * sys.eigenvalues.asDiagonal();
    double tol = 1e-10 * std::max(1.0, h.max_abs() * std::sqrt(double(h.dim())));
    for (Eigen::Index i = 0; i < resid.cols(); ++i)
        if (resid.col(i).norm() > tol)
            throw NumericalError("eigenpair residual " + std::to_string(resid.col(i).norm()) +
                                 " exceeds tolerance");
    return sys;
}

struct KrylovOptions {
    int m = 40;              // Krylov subspace dimension per step
    double tol = 1e-10;      // local error target per unit step
    int max_restarts = 4000; // total step-halving budget
};

struct KrylovStats {
    int steps = 0;
    int rejections = 0;
    double error_estimate = 0;
};

/// exp(-i H t) v by restarted Lanczos with full reorthogonalization.
inline StateVector krylov_expmv(const SparseOperator& h, const StateVector& v0, double t,
                                const KrylovOptions& opts = {}, KrylovStats* stats = nullptr) {
    const auto n = static_cast<Eigen::Index>(h.dim());
    const int m = std::min<int>(opts.m, static_cast<int>(n));
    const cplx minus_i(0, -1);

    StateVector v = v0;
    double remaining = t;
    double dt = t;
    int rejections = 0, steps = 0;
    double last_est = 0;
    if (t == 0.0) return v;

    while (remaining > 0) {
        double vnorm = v.norm();
        if (vnorm == 0.0) break;
        Mat V(n, m);
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, m + 1);
        V.col(0) = v / vnorm;
        int k = 0;
        double beta_next = 0;
        bool breakdown = false;
        for (; k < m; ++k) {
            Vec w = h.mat * V.col(k);
            if (k > 0) w -= T(k - 1, k) * V.col(k - 1);
            double alpha = std::real(V.col(k).dot(w));
            T(k, k) = alpha;
            w -= alpha * V.col(k);
            for (int j = 0; j <= k; ++j) w -= V.col(j).dot(w) * V.col(j);
            beta_next = w.norm();
            if (k + 1 < m) {
                if (beta_next < 1e-14 * std::max(1.0, vnorm)) {
                    breakdown = true;
                    ++k;
                    break;
                }
                T(k, k + 1) = T(k + 1, k) = beta_next;
                V.col(k + 1) = w / beta_next;
            }
        }
        const int kd = k;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(T.topLeftCorner(kd, kd));
        if (small.info() != Eigen::Success) throw NumericalError("krylov: tridiagonal solve failed");

        while (true) {
            Vec phase(kd);
            for (Eigen::Index j = 0; j < kd; ++j)
                phase[j] = std::exp(minus_i * small.eigenvalues()[j] * dt);
            Vec u = small.eigenvectors().cast<cplx>() *
                    (phase.array() * small.eigenvectors().cast<cplx>().adjoint().col(0).array()).matrix();
            double est = breakdown ? 0.0 : std::abs(beta_next * std::abs(u[kd - 1]) * dt);
            if (est <= opts.tol * std::max(dt / std::max(t, 1e-300), 1e-3) || dt <= 1e-14 * t) {
                v = V.leftCols(kd) * (vnorm * u);
                remaining -= dt;
                last_est = est;
                ++steps;
                dt = std::min(dt * 2, remaining);
                break;
            }
            dt *= 0.5;
            if (++rejections > opts.max_restarts)
                throw NumericalError("krylov: no convergence after " +
                                     std::to_string(opts.max_restarts) + " step rejections");
        }
    }
    if (stats) *stats = {steps, rejections, last_est};
    return v;
}

struct EvolveMethod {
    enum class Kind { exact, krylov } kind = Kind::exact;
    KrylovOptions krylov;
    Eigen::Index dense_cutoff = 4096;

    static EvolveMethod exact(Eigen::Index cutoff = 4096) {
        EvolveMethod m;
        m.kind = Kind::exact;
        m.dense_cutoff = cutoff;
        return m;
    }
    static EvolveMethod krylov_method(int m_ = 40, double tol = 1e-10) {
        EvolveMethod m;
        m.kind = Kind::krylov;
        m.krylov.m = m_;
        m.krylov.tol = tol;
        return m;
    }
};

/// exp(-i H t) state.
inline StateVector evolve(const StateVector& state, const SparseOperator& h, double t,
                          const EvolveMethod& method = {}) {
    if (method.kind == EvolveMethod::Kind::krylov) return krylov_expmv(h, state, t, method.krylov);
    EigenSystem sys = eigendecompose(h, method.dense_cutoff);
    Vec coeffs = sys.eigenvectors.adjoint() * state;
    const cplx minus_i(0, -1);
    for (Eigen::Index j = 0; j < coeffs.size(); ++j)
        coeffs[j] *= std::exp(minus_i * sys.eigenvalues[j] * t);
    return sys.eigenvectors * coeffs;
}

/// Reusable exact propagator for sampling many times from one decomposition.
class SpectralPropagator {
public:
    SpectralPropagator(const SparseOperator& h, Eigen::Index dense_cutoff = 4096)
        : sys_(eigendecompose(h, dense_cutoff)) {}

    StateVector at(const StateVector& initial, double t) const {
        Vec coeffs = sys_.eigenvectors.adjoint() * initial;
        const cplx minus_i(0, -1);
        for (Eigen::Index j = 0; j < coeffs.size(); ++j)
            coeffs[j] *= std::exp(minus_i * sys_.eigenvalues[j] * t);
        return sys_.eigenvectors * coeffs;
    }

    const EigenSystem& system() const { return sys_; }

private:
    EigenSystem sys_;
};

struct ObservableRecord {
    double time = 0;
    std::vector<double> link_flux;      // <Lz> per link
    std::vector<double> vertex_charge;  // <Q> per vertex
    double electric_energy = 0;         // <H_E>
    std::vector<double> plaquette_flux; // Re <L+L+L-L-> per plaquette
    std::vector<std::pair<std::string, double>> sector_probabilities;
};

/// Prebuilt measurement context for one basis.
class ObservableSet {
public:
    ObservableSet(const SectorBasis& basis, const CouplingSet& c, Frame frame)
        : basis_(&basis), couplings_(c) {
        for (const Plaquette& p : basis.layout.geometry->plaquettes())
            plaq_ops_.push_back(plaquette_product_operator(p, frame, basis));
    }

    ObservableRecord measure(const StateVector& psi, double time = 0) const {
        const BasisLayout& lay = basis_->layout;
        ObservableRecord rec;
        rec.time = time;
        rec.link_flux.assign(static_cast<size_t>(lay.n_links()), 0.0);
        rec.vertex_charge.assign(static_cast<size_t>(lay.n_vertices()), 0.0);
        for (size_t i = 0; i < basis_->dim(); ++i) {
            double w = std::norm(psi[static_cast<Eigen::Index>(i)]);
            if (w == 0.0) continue;
            uint64_t s = basis_->state(i);
            for (int li = 0; li < lay.n_links(); ++li) {
                double mval = lay.twom(s, li) / 2.0;
                rec.link_flux[static_cast<size_t>(li)] += w * mval;
                rec.electric_energy += couplings_.mu * w * mval * mval;
            }
            for (int v = 0; v < lay.n_vertices(); ++v)
                rec.vertex_charge[static_cast<size_t>(v)] += w * charge(lay, s, v);
        }
        for (const SparseOperator& p : plaq_ops_)
            rec.plaquette_flux.push_back(std::real(psi.dot(p.mat * psi)));
        return rec;
    }

    const SectorBasis& basis() const { return *basis_; }

private:
    const SectorBasis* basis_;
    CouplingSet couplings_;
    std::vector<SparseOperator> plaq_ops_;
};

/// Probability mass on basis states selected by a predicate on the packed state.
inline double probability_where(const SectorBasis& basis, const StateVector& psi,
                                const std::function<bool(uint64_t)>& pred) {
    double p = 0;
    for (size_t i = 0; i < basis.dim(); ++i)
        if (pred(basis.state(i))) p += std::norm(psi[static_cast<Eigen::Index>(i)]);
    return p;
}

} // namespace spingauge
