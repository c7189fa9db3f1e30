#ifndef GRIDLCI_GRID_MODEL_HPP
#define GRIDLCI_GRID_MODEL_HPP

#include "gridlci/errors.hpp"

#include <algorithm>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gridlci
{

using Complex = std::complex<double>;

enum class BusKind
{
    Slack,
    PV,
    PQ
};

/// Quantities are per-unit on the system base; angles in radians.
struct Bus
{
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;
    double q_load = 0.0;
    double g_shunt = 0.0;
    double b_shunt = 0.0;
    double v_init_mag = 1.0;
    double v_init_ang = 0.0;
    double base_kv = 0.0;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch
{
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap = 1.0;
    double shift = 0.0;
    bool in_service = true;
    bool is_transformer = false;

    friend bool operator==(const Branch&, const Branch&) = default;
};

struct Generator
{
    int bus = 0;
    double p_gen = 0.0;
    double q_gen = 0.0;
    double v_setpoint = 1.0;
    double q_min = 0.0;
    double q_max = 0.0;
    bool in_service = true;

    friend bool operator==(const Generator&, const Generator&) = default;
};

struct GridCase
{
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    friend bool operator==(const GridCase&, const GridCase&) = default;
};

/// Maps external bus ids onto dense positions. Bus ids are kept exactly as
/// they appear in the input; the position is private to the matrices.
class BusIndex
{
public:
    explicit BusIndex(std::vector<int> ids)
        : ids_(std::move(ids))
    {
        positions_.reserve(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (!positions_.emplace(ids_[i], i).second) {
                throw Error(ErrorKind::SemanticError, "duplicate bus id " + std::to_string(ids_[i]));
            }
        }
    }

    std::size_t size() const noexcept { return ids_.size(); }
    int id(std::size_t position) const { return ids_.at(position); }
    const std::vector<int>& ids() const noexcept { return ids_; }

    std::optional<std::size_t> find(int bus) const
    {
        auto it = positions_.find(bus);
        if (it == positions_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    std::size_t at(int bus) const
    {
        auto it = positions_.find(bus);
        if (it == positions_.end()) {
            throw Error(ErrorKind::UnknownBus, "bus " + std::to_string(bus));
        }
        return it->second;
    }

    bool contains(int bus) const { return positions_.count(bus) != 0; }

    friend bool operator==(const BusIndex& a, const BusIndex& b) { return a.ids_ == b.ids_; }

private:
    std::vector<int> ids_;
    std::unordered_map<int, std::size_t> positions_;
};

inline std::shared_ptr<const BusIndex> make_bus_index(const GridCase& grid)
{
    std::vector<int> ids;
    ids.reserve(grid.buses.size());
    for (const auto& bus : grid.buses) {
        ids.push_back(bus.id);
    }
    return std::make_shared<const BusIndex>(std::move(ids));
}

/// Lists every invariant violation in `grid`. An empty result means the case
/// is usable for power flow.
inline std::vector<std::string> diagnose(const GridCase& grid)
{
    std::vector<std::string> problems;
    if (!(grid.base_mva > 0.0)) {
        problems.push_back("base_mva must be positive");
    }
    std::set<int> ids;
    int slack_count = 0;
    for (const auto& bus : grid.buses) {
        if (!ids.insert(bus.id).second) {
            problems.push_back("duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.id <= 0) {
            problems.push_back("bus id " + std::to_string(bus.id) + " is not positive");
        }
        if (!(bus.v_init_mag > 0.0)) {
            problems.push_back("bus " + std::to_string(bus.id) + " has non-positive initial voltage");
        }
        if (bus.kind == BusKind::Slack) {
            ++slack_count;
        }
    }
    if (slack_count != 1) {
        problems.push_back("expected exactly one slack bus, found " + std::to_string(slack_count));
    }
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const auto& br = grid.branches[i];
        const std::string tag = "branch " + std::to_string(i + 1) + " (" + std::to_string(br.from_bus) +
                                "-" + std::to_string(br.to_bus) + ")";
        if (!ids.count(br.from_bus) || !ids.count(br.to_bus)) {
            problems.push_back(tag + " refers to a missing bus");
        }
        if (br.from_bus == br.to_bus) {
            problems.push_back(tag + " connects a bus to itself");
        }
        if (br.r * br.r + br.x * br.x <= 0.0) {
            problems.push_back(tag + " has zero series impedance");
        }
        if (!(br.tap > 0.0)) {
            problems.push_back(tag + " has non-positive tap ratio");
        }
    }
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        const auto& gen = grid.generators[i];
        const std::string tag = "generator " + std::to_string(i + 1) + " at bus " + std::to_string(gen.bus);
        if (!ids.count(gen.bus)) {
            problems.push_back(tag + " refers to a missing bus");
        }
        if (gen.q_min > gen.q_max) {
            problems.push_back(tag + " has q_min > q_max");
        }
    }
    return problems;
}

/// Throws InvalidCase carrying the first violation.
inline void validate(const GridCase& grid)
{
    auto problems = diagnose(grid);
    if (!problems.empty()) {
        throw Error(ErrorKind::InvalidCase, problems.front());
    }
}

/// Sparse complex nodal admittance matrix in per-unit. Rows keep their
/// off-diagonal entries sorted by column position.
class AdmittanceMatrix
{
public:
    struct Entry
    {
        std::size_t column;
        Complex value;
    };

    AdmittanceMatrix(std::shared_ptr<const BusIndex> index, std::vector<Complex> diagonal,
                     std::vector<std::vector<Entry>> off_diagonal)
        : index_(std::move(index))
        , diagonal_(std::move(diagonal))
        , off_diagonal_(std::move(off_diagonal))
    {
    }

    std::size_t dimension() const noexcept { return diagonal_.size(); }
    const BusIndex& buses() const noexcept { return *index_; }
    const std::shared_ptr<const BusIndex>& bus_index() const noexcept { return index_; }

    Complex diagonal(std::size_t position) const { return diagonal_.at(position); }
    std::span<const Entry> row(std::size_t position) const { return off_diagonal_.at(position); }

    /// Entry addressed by bus ids; zero when the buses are not adjacent.
    Complex entry(int from, int to) const
    {
        const auto d = index_->at(from);
        const auto k = index_->at(to);
        if (d == k) {
            return diagonal_[d];
        }
        const auto& r = off_diagonal_[d];
        auto it = std::lower_bound(r.begin(), r.end(), k,
                                   [](const Entry& e, std::size_t col) { return e.column < col; });
        return (it != r.end() && it->column == k) ? it->value : Complex{};
    }

    std::size_t nonzeros() const
    {
        std::size_t n = diagonal_.size();
        for (const auto& r : off_diagonal_) {
            n += r.size();
        }
        return n;
    }

private:
    std::shared_ptr<const BusIndex> index_;
    std::vector<Complex> diagonal_;
    std::vector<std::vector<Entry>> off_diagonal_;
};

/// Standard pi-model assembly. Only branch-level invariants are checked here
/// so that sub-networks without a slack bus can still be assembled.
inline AdmittanceMatrix build_ybus(const GridCase& grid)
{
    auto index = make_bus_index(grid);
    const std::size_t n = index->size();
    std::vector<Complex> diagonal(n);
    std::vector<std::vector<AdmittanceMatrix::Entry>> off(n);

    auto add_off = [&off](std::size_t row, std::size_t col, Complex value) {
        auto& r = off[row];
        auto it = std::lower_bound(r.begin(), r.end(), col,
                                   [](const AdmittanceMatrix::Entry& e, std::size_t c) { return e.column < c; });
        if (it != r.end() && it->column == col) {
            it->value += value;
        } else {
            r.insert(it, {col, value});
        }
    };

    for (std::size_t i = 0; i < n; ++i) {
        const auto& bus = grid.buses[i];
        diagonal[i] += Complex(bus.g_shunt, bus.b_shunt);
    }

    for (const auto& br : grid.branches) {
        if (!br.in_service) {
            continue;
        }
        auto f = index->find(br.from_bus);
        auto t = index->find(br.to_bus);
        if (!f || !t) {
            throw Error(ErrorKind::DanglingBranch,
                        "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus));
        }
        if (br.r == 0.0 && br.x == 0.0) {
            throw Error(ErrorKind::ZeroImpedanceBranch,
                        "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus));
        }
        if (*f == *t) {
            throw Error(ErrorKind::InvalidCase, "branch connects bus " + std::to_string(br.from_bus) + " to itself");
        }
        if (!(br.tap > 0.0)) {
            throw Error(ErrorKind::InvalidCase, "non-positive tap on branch " + std::to_string(br.from_bus) + "-" +
                                                    std::to_string(br.to_bus));
        }
        const Complex series = 1.0 / Complex(br.r, br.x);
        const Complex charging(0.0, br.b_charging / 2.0);
        const Complex ratio = std::polar(br.tap, br.shift);

        diagonal[*f] += (series + charging) / (br.tap * br.tap);
        diagonal[*t] += series + charging;
        add_off(*f, *t, -series / std::conj(ratio));
        add_off(*t, *f, -series / ratio);
    }
    return AdmittanceMatrix(std::move(index), std::move(diagonal), std::move(off));
}

struct Neighbor
{
    int bus;
    Complex admittance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// One row of the admittance matrix: everything the local index may see.
struct NeighborView
{
    int bus = 0;
    Complex diagonal;
    std::vector<Neighbor> neighbors;

    friend bool operator==(const NeighborView&, const NeighborView&) = default;
};

/// Neighbors follow the row, i.e. column position, which is also the order
/// injections are summed in.
inline NeighborView neighbor_view(const AdmittanceMatrix& y, int bus)
{
    const auto d = y.buses().at(bus);
    NeighborView view{bus, y.diagonal(d), {}};
    const auto row = y.row(d);
    view.neighbors.reserve(row.size());
    for (const auto& e : row) {
        view.neighbors.push_back({y.buses().id(e.column), e.value});
    }
    return view;
}

/// One operating condition. Voltages and injections are aligned with `buses`.
struct Snapshot
{
    std::int64_t index = 0;
    double time = 0.0;
    std::shared_ptr<const BusIndex> buses;
    std::vector<Complex> voltages;
    std::optional<std::vector<Complex>> injections;

    Complex voltage(int bus) const { return voltages.at(buses->at(bus)); }

    std::optional<Complex> injection(int bus) const
    {
        if (!injections) {
            return std::nullopt;
        }
        return (*injections).at(buses->at(bus));
    }
};

/// Net injection S_d = V_d * conj(sum_k Y_dk V_k), generation-positive.
inline std::vector<Complex> injections_from_voltages(const AdmittanceMatrix& y, std::span<const Complex> voltages)
{
    const std::size_t n = y.dimension();
    if (voltages.size() != n) {
        throw Error(ErrorKind::DimensionMismatch,
                    std::to_string(voltages.size()) + " voltages for " + std::to_string(n) + " buses");
    }
    std::vector<Complex> s(n);
    for (std::size_t d = 0; d < n; ++d) {
        Complex current = y.diagonal(d) * voltages[d];
        for (const auto& e : y.row(d)) {
            current += e.value * voltages[e.column];
        }
        s[d] = voltages[d] * std::conj(current);
    }
    return s;
}

inline Snapshot compute_injections(const AdmittanceMatrix& y, Snapshot snapshot)
{
    if (!snapshot.buses || !(*snapshot.buses == y.buses())) {
        throw Error(ErrorKind::DimensionMismatch, "snapshot bus set differs from the admittance matrix");
    }
    snapshot.injections = injections_from_voltages(y, snapshot.voltages);
    return snapshot;
}

} // namespace gridlci

#endif // GRIDLCI_GRID_MODEL_HPP
