#pragma once

// Finite filtered probability spaces: scenario trees, stopping times,
// positions (random variables), measures and conditional expectation.
//
// Time is the integer grid 0..T and a node's depth is its time, so F_t is the
// partition of leaves by time-t nodes and a stopping time is an antichain of
// nodes covering every leaf. Node indices are depth-first preorder positions:
// the subtree of n is the index range [n, n + subtree_size(n)), and iterating
// indices in reverse visits children before parents.

#include "dynrisk/ext_real.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dynrisk {

using NodeIndex = std::size_t;

/// Comparison tolerance for reals unless an operation says otherwise.
inline constexpr double default_tolerance = 1e-9;

/// A tree, stopping time, measure or position violates its invariants.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what, std::string node_id = {})
        : std::invalid_argument(node_id.empty() ? what : what + " (node '" + node_id + "')"),
          node_id_(std::move(node_id)) {}

    const std::string& node_id() const noexcept { return node_id_; }

private:
    std::string node_id_;
};

/// One node of a tree description, as read from a spec file.
struct NodeSpec {
    std::string id;
    int time = 0;
    std::optional<std::string> parent;
    std::optional<double> p; ///< reference probability of the edge from the parent
};

class ScenarioTree;
using TreePtr = std::shared_ptr<const ScenarioTree>;

class ScenarioTree {
public:
    struct Node {
        std::string id;
        int time = 0;
        std::optional<NodeIndex> parent;
        std::vector<NodeIndex> children;
        double edge_prob = 1.0; ///< P(edge from parent); 1 at the root
    };

    /// Validates and builds a tree. Errors name the offending node.
    static TreePtr build(int levels, const std::vector<NodeSpec>& nodes);

    /// Full (non-recombining) binomial tree with `periods` steps. Node ids are
    /// move strings: "root", "u", "d", "uu", "ud", ...
    static TreePtr binomial(int periods, double p_up = 0.5);

    int horizon() const noexcept { return levels_ - 1; }
    int levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    static constexpr NodeIndex root() noexcept { return 0; }
    const Node& node(NodeIndex n) const { return nodes_.at(n); }
    const std::string& id(NodeIndex n) const { return nodes_.at(n).id; }
    int time(NodeIndex n) const { return nodes_.at(n).time; }
    bool is_leaf(NodeIndex n) const { return nodes_.at(n).children.empty(); }

    std::optional<NodeIndex> find(std::string_view id) const;
    NodeIndex index_of(std::string_view id) const;

    /// Nodes at time t, in depth-first order.
    std::span<const NodeIndex> level(int t) const;
    std::span<const NodeIndex> leaves() const noexcept { return leaves_; }

    std::size_t subtree_size(NodeIndex n) const { return subtree_size_.at(n); }

    /// True when `a` is `b` or an ancestor of `b`.
    bool contains(NodeIndex a, NodeIndex b) const noexcept {
        return a <= b && b < a + subtree_size_[a];
    }

    /// P-mass of the node (product of edge probabilities from the root).
    double reference_mass(NodeIndex n) const { return mass_.at(n); }

private:
    ScenarioTree() = default;
    void finalize();

    int levels_ = 0;
    std::vector<Node> nodes_;
    std::vector<std::size_t> subtree_size_;
    std::vector<double> mass_;
    std::vector<std::vector<NodeIndex>> by_level_;
    std::vector<NodeIndex> leaves_;
    std::unordered_map<std::string, NodeIndex> index_;
};

/// A stopping time: an antichain of stop nodes whose subtrees cover every
/// leaf. Its atoms (the atoms of F_tau) are the stop nodes.
class StoppingTime {
public:
    /// The deterministic time t.
    static StoppingTime at(TreePtr tree, int t);
    static StoppingTime from_nodes(TreePtr tree, std::vector<NodeIndex> stop_nodes);
    static StoppingTime from_ids(TreePtr tree, const std::vector<std::string>& ids);

    const TreePtr& tree() const noexcept { return tree_; }

    /// Stop nodes in depth-first order.
    std::span<const NodeIndex> atoms() const noexcept { return atoms_; }
    std::size_t atom_count() const noexcept { return atoms_.size(); }
    NodeIndex atom(std::size_t i) const { return atoms_.at(i); }

    /// Position (in atoms()) of the stop node at or above `n`; empty when `n`
    /// lies strictly before the stopping time.
    std::optional<std::size_t> atom_of(NodeIndex n) const {
        const auto a = owner_.at(n);
        if (a < 0) return std::nullopt;
        return static_cast<std::size_t>(a);
    }

    /// True when `n` lies strictly before the stopping time.
    bool before(NodeIndex n) const { return owner_.at(n) < 0; }

    std::optional<int> deterministic_time() const;

    /// "t=1" for deterministic times, "{u,dd}" otherwise.
    std::string label() const;

    friend bool operator==(const StoppingTime& a, const StoppingTime& b) {
        return a.tree_ == b.tree_ && a.atoms_ == b.atoms_;
    }

private:
    StoppingTime(TreePtr tree, std::vector<NodeIndex> atoms);

    TreePtr tree_;
    std::vector<NodeIndex> atoms_;
    std::vector<std::int32_t> owner_;
};

/// sigma <= tau pointwise: every stop node of tau lies at or below a stop node of sigma.
bool precedes(const StoppingTime& sigma, const StoppingTime& tau);

/// Atoms of F_sigma in canonical depth-first order.
std::vector<NodeIndex> atoms(const StoppingTime& sigma);

/// An F_tau-measurable position: one finite value per atom of the anchor.
class RandomVariable {
public:
    RandomVariable(StoppingTime anchor, std::vector<double> values);

    static RandomVariable constant(const StoppingTime& anchor, double c);
    /// Values read from a function of the atom's node.
    template <class F>
    static RandomVariable from_nodes(const StoppingTime& anchor, F&& f) {
        std::vector<double> v;
        v.reserve(anchor.atom_count());
        for (NodeIndex n : anchor.atoms()) v.push_back(f(n));
        return RandomVariable(anchor, std::move(v));
    }

    const StoppingTime& anchor() const noexcept { return anchor_; }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t atom) const { return values_[atom]; }

    /// Value on the atom at or above node `n`.
    double at_node(NodeIndex n) const;

    RandomVariable operator-() const;
    RandomVariable& operator+=(const RandomVariable& other);
    RandomVariable& operator-=(const RandomVariable& other);
    RandomVariable& operator*=(double s);
    RandomVariable& operator+=(double c);

    friend RandomVariable operator+(RandomVariable a, const RandomVariable& b) { return a += b; }
    friend RandomVariable operator-(RandomVariable a, const RandomVariable& b) { return a -= b; }
    friend RandomVariable operator*(double s, RandomVariable a) { return a *= s; }
    friend RandomVariable operator+(RandomVariable a, double c) { return a += c; }

    double max_abs() const;

private:
    void require_same_anchor(const RandomVariable& other) const;

    StoppingTime anchor_;
    std::vector<double> values_;
};

/// Maximum over atoms of |a - b|; anchors must agree.
double max_abs_diff(const RandomVariable& a, const RandomVariable& b);

/// Re-anchors an F_sigma-measurable position at tau (sigma <= tau).
RandomVariable lift(const RandomVariable& x, const StoppingTime& tau);

/// scale * 1_A where A is the union of the given tau-atoms.
RandomVariable indicator(const StoppingTime& tau, std::span<const std::size_t> atom_set,
                         double scale = 1.0);

/// Per-atom extended-real values (penalties).
struct PenaltyVariable {
    StoppingTime anchor;
    std::vector<ExtendedReal> values;
};

/// A probability measure on the leaves given by per-edge transition
/// probabilities. Transitions sum to one below every non-leaf node, so the
/// conditional law at any node (Q-null or not) is well defined.
class Measure {
public:
    /// The reference measure P.
    static Measure reference(TreePtr tree);
    /// Transition probability per node (entry for the root is ignored).
    static Measure from_transitions(TreePtr tree, std::vector<double> transitions);
    /// P with the listed edge probabilities replaced.
    static Measure with_overrides(TreePtr tree,
                                  const std::vector<std::pair<std::string, double>>& edges);
    /// Point mass on a leaf; off-path transitions are those of P.
    static Measure dirac(TreePtr tree, NodeIndex leaf);

    const TreePtr& tree() const noexcept { return tree_; }
    double transition(NodeIndex n) const { return trans_.at(n); }
    std::span<const double> transitions() const noexcept { return trans_; }
    double mass(NodeIndex n) const { return mass_.at(n); }

    /// Conditional probability of reaching `m` from `n` (n contains m), the
    /// product of transitions along the path.
    double kernel(NodeIndex n, NodeIndex m) const;

    std::vector<double> leaf_masses() const;
    bool equivalent_to_reference() const;

    /// Largest transition difference over all non-root nodes.
    double max_transition_diff(const Measure& other) const;

private:
    Measure(TreePtr tree, std::vector<double> transitions);

    TreePtr tree_;
    std::vector<double> trans_;
    std::vector<double> mass_;
};

/// Conditional law at node n over the tau-atoms below it: (atom, probability).
std::vector<std::pair<std::size_t, double>> conditional_law(const Measure& q, NodeIndex n,
                                                            const StoppingTime& tau);

/// E_Q(X | F_sigma) through transition kernels, defined on every sigma-atom.
RandomVariable kernel_expectation(const RandomVariable& x, const Measure& q,
                                  const StoppingTime& sigma);

/// E_Q(X | F_sigma) with the Q-null convention: 0 on atoms of zero Q-mass.
RandomVariable cond_expectation(const RandomVariable& x, const Measure& q,
                                const StoppingTime& sigma);

/// E_Q(X).
double expectation(const RandomVariable& x, const Measure& q);

/// Q-mass of each sigma-atom.
std::vector<double> restrict_measure(const Measure& q, const StoppingTime& sigma);

/// Generic backward induction from tau-atoms up to sigma-atoms. Returns one
/// value per tree node: the terminal values on nodes at or below tau-atoms
/// that are tau-atoms, `step(n, child_values)` on nodes between sigma and
/// tau, NaN elsewhere.
template <class Step>
std::vector<double> backward_induction(const RandomVariable& terminal, const StoppingTime& sigma,
                                       Step&& step) {
    const auto& tau = terminal.anchor();
    const auto& tree = *tau.tree();
    std::vector<double> v(tree.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < tau.atom_count(); ++i) v[tau.atom(i)] = terminal[i];
    std::vector<double> child_values;
    for (std::size_t k = tree.size(); k-- > 0;) {
        const NodeIndex n = k;
        if (sigma.before(n) || !tau.before(n)) continue;
        const auto& children = tree.node(n).children;
        child_values.resize(children.size());
        for (std::size_t c = 0; c < children.size(); ++c) child_values[c] = v[children[c]];
        v[n] = step(n, std::span<const double>(child_values));
    }
    return v;
}

/// Reads the node vector of backward_induction at the sigma-atoms.
RandomVariable read_atoms(const std::vector<double>& node_values, const StoppingTime& sigma);

} // namespace dynrisk
