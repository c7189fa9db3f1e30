#ifndef GRIDLCI_POWERFLOW_HPP
#define GRIDLCI_POWERFLOW_HPP

#include "gridlci/errors.hpp"
#include "gridlci/grid_model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace gridlci
{

struct SolveOptions
{
    double tol = 1e-8;
    int max_iter = 30;
    bool enforce_q_limits = false;
    bool flat_start = true;
};

inline void check(const SolveOptions& opts)
{
    if (!(opts.tol > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "tol must be positive");
    }
    if (opts.max_iter < 1) {
        throw Error(ErrorKind::InvalidArgument, "max_iter must be at least 1");
    }
}

struct SolveResult
{
    Snapshot snapshot;
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Polar-form power-flow equations of one case: bus roles, specified
/// injections and the admittance matrix. State is theta at PV+PQ buses
/// followed by |V| at PQ buses, both in bus order.
class PowerFlowProblem
{
public:
    explicit PowerFlowProblem(const GridCase& grid)
        : ybus_(build_ybus(grid))
        , specified_(grid.buses.size())
        , setpoint_(grid.buses.size())
        , kinds_(grid.buses.size(), BusKind::PQ)
        , q_min_(grid.buses.size(), 0.0)
        , q_max_(grid.buses.size(), 0.0)
        , q_load_(grid.buses.size(), 0.0)
    {
        validate(grid);
        const auto& index = ybus_.buses();
        std::vector<bool> has_gen(grid.buses.size(), false);
        for (std::size_t i = 0; i < grid.buses.size(); ++i) {
            const auto& bus = grid.buses[i];
            specified_[i] = Complex(-bus.p_load, -bus.q_load);
            setpoint_[i] = std::polar(bus.v_init_mag, bus.v_init_ang);
            q_load_[i] = bus.q_load;
        }
        for (const auto& gen : grid.generators) {
            if (!gen.in_service) {
                continue;
            }
            const auto i = index.at(gen.bus);
            specified_[i] += Complex(gen.p_gen, gen.q_gen);
            if (!has_gen[i]) {
                setpoint_[i] = std::polar(gen.v_setpoint, grid.buses[i].v_init_ang);
            }
            has_gen[i] = true;
            q_min_[i] += gen.q_min;
            q_max_[i] += gen.q_max;
        }
        for (std::size_t i = 0; i < grid.buses.size(); ++i) {
            const auto kind = grid.buses[i].kind;
            if (kind == BusKind::Slack) {
                kinds_[i] = BusKind::Slack;
                slack_ = i;
            } else if (kind == BusKind::PV && has_gen[i]) {
                kinds_[i] = BusKind::PV;
            }
        }
        classify();
    }

    const AdmittanceMatrix& ybus() const noexcept { return ybus_; }
    std::size_t slack() const noexcept { return slack_; }
    std::span<const std::size_t> pvpq() const noexcept { return pvpq_; }
    std::span<const std::size_t> pq() const noexcept { return pq_; }
    BusKind kind(std::size_t position) const { return kinds_.at(position); }
    Complex specified(std::size_t position) const { return specified_.at(position); }
    std::size_t state_size() const noexcept { return pvpq_.size() + pq_.size(); }

    /// Start point: flat (|V| = 1, theta = slack angle) or warm, with
    /// voltage-controlled buses pinned to their setpoint magnitudes.
    std::vector<Complex> initial_voltages(bool flat, std::span<const Complex> warm = {}) const
    {
        const std::size_t n = kinds_.size();
        std::vector<Complex> v(n);
        const double reference_angle = std::arg(setpoint_[slack_]);
        for (std::size_t i = 0; i < n; ++i) {
            if (!warm.empty()) {
                v[i] = warm[i];
            } else if (flat) {
                v[i] = std::polar(1.0, reference_angle);
            } else {
                v[i] = setpoint_[i];
            }
            if (kinds_[i] != BusKind::PQ) {
                const double angle = (kinds_[i] == BusKind::Slack) ? std::arg(setpoint_[i]) : std::arg(v[i]);
                v[i] = std::polar(std::abs(setpoint_[i]), angle);
            }
        }
        return v;
    }

    /// Calculated minus specified injection: P rows at PV+PQ buses, then Q
    /// rows at PQ buses.
    Eigen::VectorXd mismatch(std::span<const Complex> v) const
    {
        const auto s = injections_from_voltages(ybus_, v);
        Eigen::VectorXd f(state_size());
        std::size_t row = 0;
        for (auto i : pvpq_) {
            f(row++) = s[i].real() - specified_[i].real();
        }
        for (auto i : pq_) {
            f(row++) = s[i].imag() - specified_[i].imag();
        }
        return f;
    }

    Eigen::SparseMatrix<double> jacobian(std::span<const Complex> v) const
    {
        const std::size_t n = kinds_.size();
        const std::size_t n_angle = pvpq_.size();
        std::vector<Complex> current(n);
        for (std::size_t i = 0; i < n; ++i) {
            Complex c = ybus_.diagonal(i) * v[i];
            for (const auto& e : ybus_.row(i)) {
                c += e.value * v[e.column];
            }
            current[i] = c;
        }

        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(4 * ybus_.nonzeros());
        auto emit = [&](std::size_t i, std::size_t k, Complex ds_dtheta, Complex ds_dvm) {
            const long p_row = angle_pos_[i];
            const long q_row = magnitude_pos_[i] < 0 ? -1 : static_cast<long>(n_angle) + magnitude_pos_[i];
            const long theta_col = angle_pos_[k];
            const long vm_col = magnitude_pos_[k] < 0 ? -1 : static_cast<long>(n_angle) + magnitude_pos_[k];
            if (p_row >= 0 && theta_col >= 0) {
                triplets.emplace_back(p_row, theta_col, ds_dtheta.real());
            }
            if (p_row >= 0 && vm_col >= 0) {
                triplets.emplace_back(p_row, vm_col, ds_dvm.real());
            }
            if (q_row >= 0 && theta_col >= 0) {
                triplets.emplace_back(q_row, theta_col, ds_dtheta.imag());
            }
            if (q_row >= 0 && vm_col >= 0) {
                triplets.emplace_back(q_row, vm_col, ds_dvm.imag());
            }
        };

        const Complex j(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (angle_pos_[i] < 0) {
                continue;
            }
            const Complex unit_i = v[i] / std::abs(v[i]);
            const Complex yii = ybus_.diagonal(i);
            emit(i, i, j * v[i] * std::conj(current[i] - yii * v[i]),
                 v[i] * std::conj(yii * unit_i) + std::conj(current[i]) * unit_i);
            for (const auto& e : ybus_.row(i)) {
                const std::size_t k = e.column;
                const Complex unit_k = v[k] / std::abs(v[k]);
                emit(i, k, -j * v[i] * std::conj(e.value * v[k]), v[i] * std::conj(e.value * unit_k));
            }
        }
        const auto dim = static_cast<Eigen::Index>(state_size());
        Eigen::SparseMatrix<double> jac(dim, dim);
        jac.setFromTriplets(triplets.begin(), triplets.end());
        return jac;
    }

    /// Applies a state increment in place.
    void update(std::vector<Complex>& v, const Eigen::VectorXd& dx) const
    {
        const std::size_t n_angle = pvpq_.size();
        for (std::size_t r = 0; r < n_angle; ++r) {
            const auto i = pvpq_[r];
            v[i] = std::polar(std::abs(v[i]), std::arg(v[i]) + dx(static_cast<Eigen::Index>(r)));
        }
        for (std::size_t r = 0; r < pq_.size(); ++r) {
            const auto i = pq_[r];
            v[i] = std::polar(std::abs(v[i]) + dx(static_cast<Eigen::Index>(n_angle + r)), std::arg(v[i]));
        }
    }

    /// Switches PV buses whose reactive output leaves [q_min, q_max] to PQ at
    /// the violated limit. Returns true when any bus switched.
    bool apply_q_limits(std::span<const Complex> v)
    {
        const auto s = injections_from_voltages(ybus_, v);
        bool switched = false;
        for (std::size_t i = 0; i < kinds_.size(); ++i) {
            if (kinds_[i] != BusKind::PV) {
                continue;
            }
            const double q_gen = s[i].imag() + q_load_[i];
            double limit = q_gen;
            if (q_gen > q_max_[i]) {
                limit = q_max_[i];
            } else if (q_gen < q_min_[i]) {
                limit = q_min_[i];
            } else {
                continue;
            }
            kinds_[i] = BusKind::PQ;
            specified_[i].imag(limit - q_load_[i]);
            switched = true;
        }
        if (switched) {
            classify();
        }
        return switched;
    }

private:
    void classify()
    {
        pvpq_.clear();
        pq_.clear();
        angle_pos_.assign(kinds_.size(), -1);
        magnitude_pos_.assign(kinds_.size(), -1);
        for (std::size_t i = 0; i < kinds_.size(); ++i) {
            if (kinds_[i] != BusKind::Slack) {
                angle_pos_[i] = static_cast<long>(pvpq_.size());
                pvpq_.push_back(i);
            }
            if (kinds_[i] == BusKind::PQ) {
                magnitude_pos_[i] = static_cast<long>(pq_.size());
                pq_.push_back(i);
            }
        }
    }

    AdmittanceMatrix ybus_;
    std::vector<Complex> specified_;
    std::vector<Complex> setpoint_;
    std::vector<BusKind> kinds_;
    std::vector<double> q_min_;
    std::vector<double> q_max_;
    std::vector<double> q_load_;
    std::size_t slack_ = 0;
    std::vector<std::size_t> pvpq_;
    std::vector<std::size_t> pq_;
    std::vector<long> angle_pos_;
    std::vector<long> magnitude_pos_;
};

namespace detail
{

inline double max_abs(const Eigen::VectorXd& f)
{
    if (f.size() == 0) {
        return 0.0;
    }
    const double m = f.cwiseAbs().maxCoeff();
    return f.allFinite() ? m : std::numeric_limits<double>::infinity();
}

/// Plain Newton iterations from `v`; returns the iteration count.
inline int newton(const PowerFlowProblem& problem, std::vector<Complex>& v, const SolveOptions& opts, double& mismatch)
{
    Eigen::VectorXd f = problem.mismatch(v);
    mismatch = max_abs(f);
    int iterations = 0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    while (!(mismatch <= opts.tol)) {
        if (iterations >= opts.max_iter || !std::isfinite(mismatch)) {
            throw DivergedError(iterations, mismatch);
        }
        Eigen::SparseMatrix<double> jac = problem.jacobian(v);
        jac.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(jac);
            analyzed = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            throw Error(ErrorKind::SingularJacobian, "factorization failed at iteration " + std::to_string(iterations));
        }
        const Eigen::VectorXd dx = lu.solve(-f);
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            throw Error(ErrorKind::SingularJacobian, "solve failed at iteration " + std::to_string(iterations));
        }
        problem.update(v, dx);
        ++iterations;
        f = problem.mismatch(v);
        mismatch = max_abs(f);
    }
    return iterations;
}

} // namespace detail

/// Newton-Raphson in polar form. `warm` (aligned with the case buses) replaces
/// the flat or case-file start; the returned snapshot carries the injections
/// computed from the solved voltages.
inline SolveResult solve(const GridCase& grid, const SolveOptions& opts = {}, std::span<const Complex> warm = {})
{
    check(opts);
    PowerFlowProblem problem(grid);
    if (!warm.empty() && warm.size() != grid.buses.size()) {
        throw Error(ErrorKind::DimensionMismatch, "warm start has " + std::to_string(warm.size()) + " voltages");
    }
    std::vector<Complex> v = problem.initial_voltages(opts.flat_start, warm);
    double mismatch = 0.0;
    int iterations = detail::newton(problem, v, opts, mismatch);
    if (opts.enforce_q_limits) {
        for (std::size_t round = 0; round < grid.buses.size() && problem.apply_q_limits(v); ++round) {
            iterations += detail::newton(problem, v, opts, mismatch);
        }
    }
    SolveResult result;
    result.iterations = iterations;
    result.max_mismatch = mismatch;
    result.snapshot.buses = problem.ybus().bus_index();
    result.snapshot.injections = injections_from_voltages(problem.ybus(), v);
    result.snapshot.voltages = std::move(v);
    return result;
}

/// Loads and generator dispatch multiplied by `lambda`; the slack bus picks
/// up the difference. Power factor per bus is preserved.
inline GridCase scale_case(GridCase grid, double lambda)
{
    if (!(lambda >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "lambda must be non-negative");
    }
    for (auto& bus : grid.buses) {
        bus.p_load *= lambda;
        bus.q_load *= lambda;
    }
    for (auto& gen : grid.generators) {
        gen.p_gen *= lambda;
    }
    return grid;
}

inline double total_load(const GridCase& grid)
{
    double total = 0.0;
    for (const auto& bus : grid.buses) {
        total += bus.p_load;
    }
    return total;
}

struct SweepPoint
{
    double lambda = 0.0;
    Snapshot snapshot;
};

struct SweepResult
{
    std::vector<SweepPoint> points;
    double lambda_max = 0.0;
};

/// Advances lambda by `step`, warm-starting each solve from the previous
/// point; a failed solve halves the step. Stops once step < min_step.
inline SweepResult stress_sweep(const GridCase& grid, double lambda_start, double step, double min_step,
                                const SolveOptions& opts = {})
{
    if (!(min_step > 0.0) || !(step > min_step)) {
        throw Error(ErrorKind::InvalidArgument, "require step > min_step > 0");
    }
    check(opts);
    SweepResult result;
    try {
        auto base = solve(scale_case(grid, lambda_start), opts);
        base.snapshot.time = lambda_start;
        result.points.push_back({lambda_start, std::move(base.snapshot)});
    } catch (const Error& e) {
        throw Error(ErrorKind::BaseCaseDiverged, std::string("at lambda ") + std::to_string(lambda_start) + ": " +
                                                     e.what());
    }
    double lambda = lambda_start;
    while (step >= min_step) {
        const double next = lambda + step;
        try {
            auto solved = solve(scale_case(grid, next), opts, result.points.back().snapshot.voltages);
            solved.snapshot.index = static_cast<std::int64_t>(result.points.size());
            solved.snapshot.time = next;
            result.points.push_back({next, std::move(solved.snapshot)});
            lambda = next;
        } catch (const Error&) {
            step /= 2.0;
        }
    }
    result.lambda_max = lambda;
    return result;
}

/// Dense polar mismatch Jacobian at a converged operating point of `grid`.
inline Eigen::MatrixXd jacobian(const GridCase& grid, const Snapshot& snapshot, double converged_tol = 1e-6)
{
    PowerFlowProblem problem(grid);
    if (snapshot.voltages.size() != grid.buses.size()) {
        throw Error(ErrorKind::DimensionMismatch, "snapshot does not match the case");
    }
    const double mismatch = detail::max_abs(problem.mismatch(snapshot.voltages));
    if (!(mismatch <= converged_tol)) {
        throw Error(ErrorKind::NotConverged, "max mismatch " + std::to_string(mismatch));
    }
    return Eigen::MatrixXd(problem.jacobian(snapshot.voltages));
}

/// The k smallest singular values in ascending order; k is clamped to the
/// matrix dimension.
inline std::vector<double> smallest_singular_values(const Eigen::MatrixXd& jac, std::size_t k)
{
    const auto count = static_cast<std::size_t>(std::min(jac.rows(), jac.cols()));
    k = std::min(k, count);
    if (k == 0) {
        return {};
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(jac);
    const Eigen::VectorXd& sigma = svd.singularValues(); // descending
    std::vector<double> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(sigma(static_cast<Eigen::Index>(count - 1 - i)));
    }
    return out;
}

} // namespace gridlci

#endif // GRIDLCI_POWERFLOW_HPP
