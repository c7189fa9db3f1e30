#ifndef GRIDLCI_LCI_HPP
#define GRIDLCI_LCI_HPP

// Local Computation Index. At a bus d the rectangular power-flow equations
//
//   p_d = t1 (vr^2 + vi^2) + t2 vr + t3 vi
//   q_d = t4 (vr^2 + vi^2) - t3 vr + t2 vi
//
// are two circles (or a circle and a line) in the (vr, vi) plane once the
// neighbor voltages are fixed. Their intersections are the high- and
// low-voltage solutions at d; the index is their distance, normalized by the
// same distance at no load with all neighbors at 1 pu.

#include "gridlci/errors.hpp"
#include "gridlci/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <variant>

namespace gridlci
{

struct TParams
{
    double t1 = 0.0;
    double t2 = 0.0;
    double t3 = 0.0;
    double t4 = 0.0;

    friend bool operator==(const TParams&, const TParams&) = default;
};

struct Point
{
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct Circle
{
    Point center;
    double radius = 0.0;
};

/// a*vr + b*vi = c
struct Line
{
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

using Locus = std::variant<Circle, Line>;

/// Which construction produced a solution pair. QLineMirror is the
/// reflection of the P-circle across a linear Q-locus (t4 == 0).
enum class LocusPath
{
    CircleCircle,
    PLineMirror,
    QLineMirror
};

struct SolutionPair
{
    Complex v1; ///< high-voltage solution (larger magnitude)
    Complex v2;
    bool tangent = false;
    LocusPath path = LocusPath::CircleCircle;
};

enum class LciFlag
{
    Ok,
    ClampedTangent,
    NoIntersection
};

struct LciValue
{
    int bus = 0;
    double raw_distance = 0.0;
    double no_load_distance = 0.0;
    double lci = 0.0;
    LciFlag flag = LciFlag::Ok;
    LocusPath path = LocusPath::CircleCircle;
    /// Distance from the snapshot voltage at the bus to the nearer solution;
    /// NaN when the loci do not intersect.
    double match_error = std::numeric_limits<double>::quiet_NaN();
};

struct LciTolerances
{
    double eps_lin = 1e-8;      ///< |t1|, |t4| at or below this make a locus linear
    double eps_tangent = 1e-10; ///< w2^2 in [-eps, 0) is clamped to a tangency
    double eps_radicand = 1e-10;
};

inline constexpr LciTolerances default_tolerances{};

namespace detail
{

/// Below this center separation the mirror circle coincides with the original
/// (the center already lies on the line) and the chord direction of the
/// two-circle formula is numerically meaningless.
inline constexpr double mirror_coincidence = 1e-6;

inline Complex to_complex(Point p) { return {p.x, p.y}; }

inline SolutionPair ordered(Complex a, Complex b, bool tangent, LocusPath path)
{
    if (std::abs(b) > std::abs(a)) {
        std::swap(a, b);
    }
    return {a, b, tangent, path};
}

} // namespace detail

// ---------------------------------------------------------------------------
// t-parameters

/// `voltage_of(bus)` returns std::optional<Complex>. t1/t4 come from the
/// diagonal so that bus shunts and line charging stay inside the identity.
template <class VoltageOf>
    requires std::invocable<VoltageOf&, int>
TParams t_params(const NeighborView& view, VoltageOf&& voltage_of)
{
    TParams t{view.diagonal.real(), 0.0, 0.0, -view.diagonal.imag()};
    for (const auto& nb : view.neighbors) {
        std::optional<Complex> v = voltage_of(nb.bus);
        if (!v) {
            throw Error(ErrorKind::MissingNeighborVoltage,
                        "bus " + std::to_string(nb.bus) + " (neighbor of " + std::to_string(view.bus) + ")");
        }
        const double g = nb.admittance.real();
        const double b = nb.admittance.imag();
        t.t2 += v->real() * g - v->imag() * b;
        t.t3 += v->real() * b + v->imag() * g;
    }
    return t;
}

inline TParams t_params(const NeighborView& view, const std::map<int, Complex>& neighbor_voltages)
{
    return t_params(view, [&](int bus) -> std::optional<Complex> {
        auto it = neighbor_voltages.find(bus);
        if (it == neighbor_voltages.end()) {
            return std::nullopt;
        }
        return it->second;
    });
}

// ---------------------------------------------------------------------------
// loci

inline double clamp_radicand(double radicand, double eps, const char* which)
{
    if (radicand < -eps || std::isnan(radicand)) {
        throw Error(ErrorKind::ImaginaryRadius, std::string(which) + " radicand " + std::to_string(radicand));
    }
    return radicand < 0.0 ? 0.0 : radicand;
}

inline std::pair<Locus, Locus> loci(const TParams& t, double p, double q, const LciTolerances& tol = default_tolerances)
{
    if (!(tol.eps_lin > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "eps_lin must be positive");
    }
    const bool p_linear = std::abs(t.t1) <= tol.eps_lin;
    const bool q_linear = std::abs(t.t4) <= tol.eps_lin;
    const double norm2 = t.t2 * t.t2 + t.t3 * t.t3;
    if (p_linear && q_linear && norm2 <= tol.eps_lin * tol.eps_lin) {
        throw Error(ErrorKind::IsolatedBus, "all t-parameters vanish");
    }

    Locus p_locus = Line{t.t2, t.t3, p};
    if (!p_linear) {
        const double radicand = p / t.t1 + norm2 / (4.0 * t.t1 * t.t1);
        p_locus = Circle{{-t.t2 / (2.0 * t.t1), -t.t3 / (2.0 * t.t1)},
                         std::sqrt(clamp_radicand(radicand, tol.eps_radicand, "P-circle"))};
    }
    Locus q_locus = Line{-t.t3, t.t2, q};
    if (!q_linear) {
        const double radicand = q / t.t4 + norm2 / (4.0 * t.t4 * t.t4);
        q_locus = Circle{{t.t3 / (2.0 * t.t4), -t.t2 / (2.0 * t.t4)},
                         std::sqrt(clamp_radicand(radicand, tol.eps_radicand, "Q-circle"))};
    }
    return {p_locus, q_locus};
}

// ---------------------------------------------------------------------------
// intersections

inline SolutionPair intersect_circles(const Circle& cp, const Circle& cq, double eps = 1e-10)
{
    if (!(eps > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "eps must be positive");
    }
    const double dx = cq.center.x - cp.center.x;
    const double dy = cq.center.y - cp.center.y;
    const double alpha = std::hypot(dx, dy);
    if (alpha < eps) {
        throw Error(ErrorKind::ConcentricCircles, "center distance " + std::to_string(alpha));
    }
    const double w1 = (cp.radius * cp.radius - cq.radius * cq.radius + alpha * alpha) / (2.0 * alpha);
    const double w2_sq = cp.radius * cp.radius - w1 * w1;
    if (w2_sq < -eps || std::isnan(w2_sq)) {
        throw Error(ErrorKind::NoIntersection, "w2^2 = " + std::to_string(w2_sq));
    }
    const bool tangent = w2_sq <= 0.0;
    const double w2 = tangent ? 0.0 : std::sqrt(w2_sq);
    const double w3 = cp.center.x + w1 * dx / alpha;
    const double w4 = cp.center.y + w1 * dy / alpha;

    const Complex first(w3 + w2 * dy / alpha, w4 - w2 * dx / alpha);
    const Complex second(w3 - w2 * dy / alpha, w4 + w2 * dx / alpha);
    return detail::ordered(first, second, tangent, LocusPath::CircleCircle);
}

/// Reflection of `circle` across `line`; the radius is unchanged.
inline Circle mirror_circle(const Circle& circle, const Line& line)
{
    const double norm2 = line.a * line.a + line.b * line.b;
    if (norm2 <= 1e-300 || !std::isfinite(norm2)) {
        throw Error(ErrorKind::DegenerateLine, "line normal vanishes");
    }
    const double gamma = -2.0 * (line.a * circle.center.x + line.b * circle.center.y - line.c) / norm2;
    return {{gamma * line.a + circle.center.x, gamma * line.b + circle.center.y}, circle.radius};
}

/// Direct line-circle intersection: foot of the perpendicular from the center
/// plus/minus the half chord along the line.
inline SolutionPair intersect_line_circle(const Line& line, const Circle& circle, double eps = 1e-10)
{
    const double norm2 = line.a * line.a + line.b * line.b;
    if (norm2 <= 1e-300) {
        throw Error(ErrorKind::DegenerateLine, "line normal vanishes");
    }
    const double offset = (line.a * circle.center.x + line.b * circle.center.y - line.c) / norm2;
    const Point foot{circle.center.x - offset * line.a, circle.center.y - offset * line.b};
    const double half_sq = circle.radius * circle.radius - offset * offset * norm2;
    if (half_sq < -eps || std::isnan(half_sq)) {
        throw Error(ErrorKind::NoIntersection, "line misses circle by " + std::to_string(-half_sq));
    }
    const bool tangent = half_sq <= 0.0;
    const double half = tangent ? 0.0 : std::sqrt(half_sq);
    const double norm = std::sqrt(norm2);
    const Complex along(-line.b / norm, line.a / norm);
    const Complex f = detail::to_complex(foot);
    return detail::ordered(f + half * along, f - half * along, tangent, LocusPath::CircleCircle);
}

namespace detail
{

// Intersect `circle` with `line` through the circle and its mirror image.
inline SolutionPair via_mirror(const Circle& circle, const Line& line, bool circle_is_p, double eps)
{
    const Circle image = mirror_circle(circle, line);
    const double separation = std::hypot(image.center.x - circle.center.x, image.center.y - circle.center.y);
    SolutionPair pair;
    if (separation < mirror_coincidence * std::max(1.0, circle.radius)) {
        pair = intersect_line_circle(line, circle, eps);
    } else if (circle_is_p) {
        pair = intersect_circles(circle, image, eps);
    } else {
        pair = intersect_circles(image, circle, eps);
    }
    pair.path = circle_is_p ? LocusPath::QLineMirror : LocusPath::PLineMirror;
    return pair;
}

} // namespace detail

inline SolutionPair solution_pair(const TParams& t, double p, double q, const LciTolerances& tol = default_tolerances)
{
    const auto [p_locus, q_locus] = loci(t, p, q, tol);
    const auto* cp = std::get_if<Circle>(&p_locus);
    const auto* cq = std::get_if<Circle>(&q_locus);
    if (cp && cq) {
        return intersect_circles(*cp, *cq, tol.eps_tangent);
    }
    if (!cp && cq) {
        return detail::via_mirror(*cq, std::get<Line>(p_locus), false, tol.eps_tangent);
    }
    if (cp && !cq) {
        return detail::via_mirror(*cp, std::get<Line>(q_locus), true, tol.eps_tangent);
    }
    throw Error(ErrorKind::BothLinear, "t1 and t4 both vanish");
}

// ---------------------------------------------------------------------------
// index

inline double no_load_distance(const NeighborView& view, const LciTolerances& tol = default_tolerances)
{
    if (view.neighbors.empty()) {
        throw Error(ErrorKind::IsolatedBus, "bus " + std::to_string(view.bus) + " has no neighbors");
    }
    const TParams t = t_params(view, [](int) -> std::optional<Complex> { return Complex(1.0, 0.0); });
    const SolutionPair pair = solution_pair(t, 0.0, 0.0, tol);
    const double distance = std::abs(pair.v1 - pair.v2);
    if (!(distance > 0.0)) {
        throw Error(ErrorKind::IsolatedBus, "bus " + std::to_string(view.bus) + " has a degenerate no-load locus");
    }
    return distance;
}

/// Reads the voltages of the bus and its neighbors and the bus injection,
/// nothing else. Without stored injections the injection is formed from the
/// row itself. Numeric failures of the geometry become flags.
inline LciValue lci(const NeighborView& view, const Snapshot& snapshot, const LciTolerances& tol = default_tolerances)
{
    if (!snapshot.buses) {
        throw Error(ErrorKind::InvalidArgument, "snapshot has no bus index");
    }
    auto voltage_of = [&](int bus) -> std::optional<Complex> {
        auto pos = snapshot.buses->find(bus);
        if (!pos || *pos >= snapshot.voltages.size()) {
            return std::nullopt;
        }
        return snapshot.voltages[*pos];
    };
    const auto v_bus = voltage_of(view.bus);
    if (!v_bus) {
        throw Error(ErrorKind::MissingNeighborVoltage, "bus " + std::to_string(view.bus) + " itself");
    }
    const TParams t = t_params(view, voltage_of);

    Complex s;
    if (auto stored = snapshot.injection(view.bus)) {
        s = *stored;
    } else {
        // same summation order as injections_from_voltages, so stored and
        // recomputed injections agree bit for bit
        Complex current = view.diagonal * *v_bus;
        for (const auto& nb : view.neighbors) {
            current += nb.admittance * *voltage_of(nb.bus);
        }
        s = *v_bus * std::conj(current);
    }

    LciValue out;
    out.bus = view.bus;
    out.no_load_distance = no_load_distance(view, tol);
    try {
        const SolutionPair pair = solution_pair(t, s.real(), s.imag(), tol);
        out.raw_distance = std::abs(pair.v1 - pair.v2);
        out.lci = out.raw_distance / out.no_load_distance;
        out.flag = pair.tangent ? LciFlag::ClampedTangent : LciFlag::Ok;
        out.path = pair.path;
        out.match_error = std::min(std::abs(pair.v1 - *v_bus), std::abs(pair.v2 - *v_bus));
    } catch (const Error& e) {
        switch (e.kind()) {
        case ErrorKind::NoIntersection:
        case ErrorKind::ImaginaryRadius:
        case ErrorKind::ConcentricCircles:
            out.raw_distance = 0.0;
            out.lci = 0.0;
            out.flag = LciFlag::NoIntersection;
            out.path = std::abs(t.t1) <= tol.eps_lin   ? LocusPath::PLineMirror
                       : std::abs(t.t4) <= tol.eps_lin ? LocusPath::QLineMirror
                                                       : LocusPath::CircleCircle;
            break;
        default:
            throw;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// two-bus closed form: infinite bus 1+j0 feeding a unity power factor load P
// (load-positive) through y = g + jb.

inline double two_bus_lci(double g, double b, double load)
{
    const double s = b * b + g * g;
    if (!(s > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "g^2 + b^2 must be positive");
    }
    if (load < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "load must be non-negative");
    }
    const double b2 = b * b;
    const double radicand = b2 * b2 + 2.0 * b2 * g * g - 4.0 * b2 * g * load - 4.0 * b2 * load * load +
                            g * g * g * g - 4.0 * g * g * g * load;
    return std::sqrt(std::abs(radicand)) / s;
}

inline double two_bus_pmax(double g, double b)
{
    if (b == 0.0) {
        throw Error(ErrorKind::ZeroSusceptance, "maximum transfer needs b != 0");
    }
    const double s = b * b + g * g;
    return (-s * g + std::pow(s, 1.5)) / (2.0 * b * b);
}

} // namespace gridlci

#endif // GRIDLCI_LCI_HPP
