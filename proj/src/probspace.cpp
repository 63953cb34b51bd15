#include "dynrisk/probspace.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace dynrisk {

namespace {

constexpr double kTransitionSumTol = 1e-12;
constexpr double kLeafMassTol = 1e-10;

} // namespace

// ---------------------------------------------------------------------------
// ScenarioTree

TreePtr ScenarioTree::build(int levels, const std::vector<NodeSpec>& specs) {
    if (levels < 1) throw ValidationError("tree needs at least one level");
    if (specs.empty()) throw ValidationError("tree has no nodes");

    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].id.empty()) throw ValidationError("node with empty id");
        if (!by_id.emplace(specs[i].id, i).second)
            throw ValidationError("duplicate node id", specs[i].id);
    }

    std::optional<std::size_t> root;
    std::vector<std::vector<std::size_t>> kids(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (!s.parent) {
            if (root) throw ValidationError("more than one root", s.id);
            if (s.time != 0) throw ValidationError("root must be at time 0", s.id);
            root = i;
            continue;
        }
        auto it = by_id.find(*s.parent);
        if (it == by_id.end()) throw ValidationError("unknown parent '" + *s.parent + "'", s.id);
        if (s.time != specs[it->second].time + 1)
            throw ValidationError("node time must be parent time + 1", s.id);
        if (!s.p) throw ValidationError("missing edge probability", s.id);
        if (!std::isfinite(*s.p) || *s.p > 1.0)
            throw ValidationError("edge probability must lie in (0, 1]", s.id);
        if (*s.p <= 0.0) throw ValidationError("P must have full support", s.id);
        kids[it->second].push_back(i);
    }
    if (!root) throw ValidationError("tree has no root");

    const int horizon = levels - 1;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].time < 0 || specs[i].time > horizon)
            throw ValidationError("node time outside 0..T", specs[i].id);
        if (kids[i].empty()) {
            if (specs[i].time != horizon) throw ValidationError("leaf not at time T", specs[i].id);
        } else {
            double sum = 0.0;
            for (auto c : kids[i]) sum += *specs[c].p;
            if (std::abs(sum - 1.0) > kTransitionSumTol)
                throw ValidationError("children probabilities do not sum to 1", specs[i].id);
        }
    }

    std::shared_ptr<ScenarioTree> tree(new ScenarioTree());
    tree->levels_ = levels;
    std::vector<NodeIndex> new_index(specs.size(), 0);
    std::size_t reached = 0;
    // Iterative preorder so deep trees do not blow the stack.
    std::vector<std::pair<std::size_t, std::optional<NodeIndex>>> stack{{*root, std::nullopt}};
    while (!stack.empty()) {
        auto [spec_i, parent] = stack.back();
        stack.pop_back();
        const NodeIndex me = tree->nodes_.size();
        new_index[spec_i] = me;
        ++reached;
        Node node;
        node.id = specs[spec_i].id;
        node.time = specs[spec_i].time;
        node.parent = parent;
        node.edge_prob = parent ? *specs[spec_i].p : 1.0;
        tree->nodes_.push_back(std::move(node));
        if (parent) tree->nodes_[*parent].children.push_back(me);
        for (auto it = kids[spec_i].rbegin(); it != kids[spec_i].rend(); ++it)
            stack.emplace_back(*it, me);
    }
    if (reached != specs.size()) throw ValidationError("nodes unreachable from the root");
    tree->finalize();
    return tree;
}

TreePtr ScenarioTree::binomial(int periods, double p_up) {
    if (periods < 0) throw ValidationError("binomial tree needs periods >= 0");
    std::vector<NodeSpec> specs;
    specs.push_back({"root", 0, std::nullopt, std::nullopt});
    std::vector<std::string> frontier{""};
    for (int t = 1; t <= periods; ++t) {
        std::vector<std::string> next;
        next.reserve(frontier.size() * 2);
        for (const auto& path : frontier) {
            const std::string parent = path.empty() ? "root" : path;
            specs.push_back({path + "u", t, parent, p_up});
            specs.push_back({path + "d", t, parent, 1.0 - p_up});
            next.push_back(path + "u");
            next.push_back(path + "d");
        }
        frontier = std::move(next);
    }
    return build(periods + 1, specs);
}

void ScenarioTree::finalize() {
    const std::size_t n = nodes_.size();
    subtree_size_.assign(n, 1);
    for (std::size_t k = n; k-- > 1;) subtree_size_[*nodes_[k].parent] += subtree_size_[k];
    mass_.assign(n, 1.0);
    by_level_.assign(static_cast<std::size_t>(levels_), {});
    for (std::size_t k = 0; k < n; ++k) {
        if (nodes_[k].parent) mass_[k] = mass_[*nodes_[k].parent] * nodes_[k].edge_prob;
        by_level_[static_cast<std::size_t>(nodes_[k].time)].push_back(k);
        if (nodes_[k].children.empty()) leaves_.push_back(k);
        index_.emplace(nodes_[k].id, k);
    }
}

std::optional<NodeIndex> ScenarioTree::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

NodeIndex ScenarioTree::index_of(std::string_view id) const {
    if (auto n = find(id)) return *n;
    throw ValidationError("unknown node", std::string(id));
}

std::span<const NodeIndex> ScenarioTree::level(int t) const {
    if (t < 0 || t >= levels_) throw std::out_of_range("time outside 0..T");
    return by_level_[static_cast<std::size_t>(t)];
}

// ---------------------------------------------------------------------------
// StoppingTime

StoppingTime::StoppingTime(TreePtr tree, std::vector<NodeIndex> stop_nodes)
    : tree_(std::move(tree)), atoms_(std::move(stop_nodes)) {
    if (!tree_) throw ValidationError("stopping time without a tree");
    const auto& t = *tree_;
    std::sort(atoms_.begin(), atoms_.end());
    if (std::adjacent_find(atoms_.begin(), atoms_.end()) != atoms_.end())
        throw ValidationError("stop node listed twice");
    owner_.assign(t.size(), -1);
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const NodeIndex a = atoms_[i];
        if (a >= t.size()) throw ValidationError("stop node outside the tree");
        for (NodeIndex m = a; m < a + t.subtree_size(a); ++m) {
            if (owner_[m] >= 0)
                throw ValidationError("stop nodes are not an antichain", t.id(a));
            owner_[m] = static_cast<std::int32_t>(i);
        }
    }
    for (NodeIndex leaf : t.leaves())
        if (owner_[leaf] < 0) throw ValidationError("stop nodes do not cover leaf", t.id(leaf));
}

StoppingTime StoppingTime::at(TreePtr tree, int t) {
    if (!tree) throw ValidationError("stopping time without a tree");
    if (t < 0 || t > tree->horizon()) throw ValidationError("deterministic time outside 0..T");
    auto lvl = tree->level(t);
    return StoppingTime(tree, std::vector<NodeIndex>(lvl.begin(), lvl.end()));
}

StoppingTime StoppingTime::from_nodes(TreePtr tree, std::vector<NodeIndex> stop_nodes) {
    return StoppingTime(std::move(tree), std::move(stop_nodes));
}

StoppingTime StoppingTime::from_ids(TreePtr tree, const std::vector<std::string>& ids) {
    std::vector<NodeIndex> nodes;
    nodes.reserve(ids.size());
    for (const auto& id : ids) nodes.push_back(tree->index_of(id));
    return StoppingTime(std::move(tree), std::move(nodes));
}

std::optional<int> StoppingTime::deterministic_time() const {
    const int t = tree_->time(atoms_.front());
    for (NodeIndex a : atoms_)
        if (tree_->time(a) != t) return std::nullopt;
    return t;
}

std::string StoppingTime::label() const {
    if (auto t = deterministic_time()) return "t=" + std::to_string(*t);
    std::string out = "{";
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (i) out += ',';
        out += tree_->id(atoms_[i]);
    }
    return out + "}";
}

bool precedes(const StoppingTime& sigma, const StoppingTime& tau) {
    if (sigma.tree() != tau.tree()) return false;
    for (NodeIndex m : tau.atoms())
        if (sigma.before(m)) return false;
    return true;
}

std::vector<NodeIndex> atoms(const StoppingTime& sigma) {
    return {sigma.atoms().begin(), sigma.atoms().end()};
}

// ---------------------------------------------------------------------------
// RandomVariable

RandomVariable::RandomVariable(StoppingTime anchor, std::vector<double> values)
    : anchor_(std::move(anchor)), values_(std::move(values)) {
    if (values_.size() != anchor_.atom_count())
        throw ValidationError("value count " + std::to_string(values_.size()) +
                              " does not match atom count " +
                              std::to_string(anchor_.atom_count()));
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (!std::isfinite(values_[i]))
            throw ValidationError("non-finite value", anchor_.tree()->id(anchor_.atom(i)));
}

RandomVariable RandomVariable::constant(const StoppingTime& anchor, double c) {
    return RandomVariable(anchor, std::vector<double>(anchor.atom_count(), c));
}

double RandomVariable::at_node(NodeIndex n) const {
    auto a = anchor_.atom_of(n);
    if (!a) throw ValidationError("node lies before the anchor", anchor_.tree()->id(n));
    return values_[*a];
}

RandomVariable RandomVariable::operator-() const {
    RandomVariable r = *this;
    for (auto& v : r.values_) v = -v;
    return r;
}

void RandomVariable::require_same_anchor(const RandomVariable& other) const {
    if (!(anchor_ == other.anchor_))
        throw ValidationError("positions anchored at different stopping times");
}

RandomVariable& RandomVariable::operator+=(const RandomVariable& other) {
    require_same_anchor(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

RandomVariable& RandomVariable::operator-=(const RandomVariable& other) {
    require_same_anchor(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

RandomVariable& RandomVariable::operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
}

RandomVariable& RandomVariable::operator+=(double c) {
    for (auto& v : values_) v += c;
    return *this;
}

double RandomVariable::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const RandomVariable& a, const RandomVariable& b) {
    if (!(a.anchor() == b.anchor()))
        throw ValidationError("positions anchored at different stopping times");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

RandomVariable lift(const RandomVariable& x, const StoppingTime& tau) {
    if (!precedes(x.anchor(), tau)) throw ValidationError("lift requires anchor <= tau");
    return RandomVariable::from_nodes(tau, [&](NodeIndex n) { return x.at_node(n); });
}

RandomVariable indicator(const StoppingTime& tau, std::span<const std::size_t> atom_set,
                         double scale) {
    std::vector<double> v(tau.atom_count(), 0.0);
    for (auto a : atom_set) v.at(a) = scale;
    return RandomVariable(tau, std::move(v));
}

// ---------------------------------------------------------------------------
// Measure

Measure::Measure(TreePtr tree, std::vector<double> transitions)
    : tree_(std::move(tree)), trans_(std::move(transitions)) {
    const auto& t = *tree_;
    if (trans_.size() != t.size())
        throw ValidationError("measure needs one transition per node");
    trans_[ScenarioTree::root()] = 1.0;
    for (NodeIndex n = 1; n < t.size(); ++n) {
        const double p = trans_[n];
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            throw ValidationError("transition probability outside [0, 1]", t.id(n));
    }
    for (NodeIndex n = 0; n < t.size(); ++n) {
        const auto& kids = t.node(n).children;
        if (kids.empty()) continue;
        double sum = 0.0;
        for (auto c : kids) sum += trans_[c];
        if (std::abs(sum - 1.0) > kTransitionSumTol)
            throw ValidationError("transition probabilities do not sum to 1", t.id(n));
    }
    mass_.assign(t.size(), 1.0);
    for (NodeIndex n = 1; n < t.size(); ++n) mass_[n] = mass_[*t.node(n).parent] * trans_[n];
    double total = 0.0;
    for (NodeIndex leaf : t.leaves()) total += mass_[leaf];
    if (std::abs(total - 1.0) > kLeafMassTol) throw ValidationError("leaf masses do not sum to 1");
}

Measure Measure::reference(TreePtr tree) {
    std::vector<double> tr(tree->size());
    for (NodeIndex n = 0; n < tree->size(); ++n) tr[n] = tree->node(n).edge_prob;
    return Measure(std::move(tree), std::move(tr));
}

Measure Measure::from_transitions(TreePtr tree, std::vector<double> transitions) {
    return Measure(std::move(tree), std::move(transitions));
}

Measure Measure::with_overrides(TreePtr tree,
                                const std::vector<std::pair<std::string, double>>& edges) {
    std::vector<double> tr(tree->size());
    for (NodeIndex n = 0; n < tree->size(); ++n) tr[n] = tree->node(n).edge_prob;
    for (const auto& [id, p] : edges) {
        const NodeIndex n = tree->index_of(id);
        if (n == ScenarioTree::root()) throw ValidationError("the root has no incoming edge", id);
        tr[n] = p;
    }
    return Measure(std::move(tree), std::move(tr));
}

Measure Measure::dirac(TreePtr tree, NodeIndex leaf) {
    if (!tree->is_leaf(leaf)) throw ValidationError("dirac needs a leaf", tree->id(leaf));
    std::vector<double> tr(tree->size());
    for (NodeIndex n = 0; n < tree->size(); ++n) tr[n] = tree->node(n).edge_prob;
    for (NodeIndex n = leaf; n != ScenarioTree::root(); n = *tree->node(n).parent) {
        const NodeIndex parent = *tree->node(n).parent;
        for (auto c : tree->node(parent).children) tr[c] = (c == n) ? 1.0 : 0.0;
    }
    return Measure(std::move(tree), std::move(tr));
}

double Measure::kernel(NodeIndex n, NodeIndex m) const {
    if (!tree_->contains(n, m)) throw ValidationError("kernel target not below source");
    double p = 1.0;
    for (NodeIndex k = m; k != n; k = *tree_->node(k).parent) p *= trans_[k];
    return p;
}

std::vector<double> Measure::leaf_masses() const {
    std::vector<double> out;
    out.reserve(tree_->leaves().size());
    for (NodeIndex leaf : tree_->leaves()) out.push_back(mass_[leaf]);
    return out;
}

bool Measure::equivalent_to_reference() const {
    for (NodeIndex n = 1; n < trans_.size(); ++n)
        if (trans_[n] <= 0.0) return false;
    return true;
}

double Measure::max_transition_diff(const Measure& other) const {
    if (tree_ != other.tree_) throw ValidationError("measures live on different trees");
    double m = 0.0;
    for (NodeIndex n = 1; n < trans_.size(); ++n)
        m = std::max(m, std::abs(trans_[n] - other.trans_[n]));
    return m;
}

// ---------------------------------------------------------------------------
// Conditioning

std::vector<std::pair<std::size_t, double>> conditional_law(const Measure& q, NodeIndex n,
                                                            const StoppingTime& tau) {
    const auto& tree = *tau.tree();
    std::vector<std::pair<std::size_t, double>> law;
    if (auto a = tau.atom_of(n)) {
        law.emplace_back(*a, 1.0);
        return law;
    }
    // n lies before tau: walk its subtree, accumulating path products.
    std::vector<double> reach(tree.subtree_size(n), 0.0);
    reach[0] = 1.0;
    for (NodeIndex m = n + 1; m < n + tree.subtree_size(n); ++m) {
        const NodeIndex parent = *tree.node(m).parent;
        if (!tau.before(parent)) continue; // below a tau-atom already recorded
        reach[m - n] = reach[parent - n] * q.transition(m);
        if (!tau.before(m)) law.emplace_back(*tau.atom_of(m), reach[m - n]);
    }
    return law;
}

RandomVariable read_atoms(const std::vector<double>& node_values, const StoppingTime& sigma) {
    return RandomVariable::from_nodes(sigma, [&](NodeIndex n) { return node_values.at(n); });
}

RandomVariable kernel_expectation(const RandomVariable& x, const Measure& q,
                                  const StoppingTime& sigma) {
    if (q.tree() != sigma.tree() || x.anchor().tree() != sigma.tree())
        throw ValidationError("operands live on different trees");
    if (!precedes(sigma, x.anchor()))
        throw ValidationError("conditioning requires sigma <= anchor of X");
    const auto& tree = *sigma.tree();
    auto v = backward_induction(x, sigma, [&](NodeIndex n, std::span<const double> cv) {
        const auto& kids = tree.node(n).children;
        double s = 0.0;
        for (std::size_t c = 0; c < kids.size(); ++c) {
            const double p = q.transition(kids[c]);
            if (p > 0.0) s += p * cv[c];
        }
        return s;
    });
    return read_atoms(v, sigma);
}

RandomVariable cond_expectation(const RandomVariable& x, const Measure& q,
                                const StoppingTime& sigma) {
    RandomVariable e = kernel_expectation(x, q, sigma);
    std::vector<double> v(e.values().begin(), e.values().end());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (q.mass(sigma.atom(i)) == 0.0) v[i] = 0.0;
    return RandomVariable(sigma, std::move(v));
}

double expectation(const RandomVariable& x, const Measure& q) {
    return kernel_expectation(x, q, StoppingTime::at(x.anchor().tree(), 0))[0];
}

std::vector<double> restrict_measure(const Measure& q, const StoppingTime& sigma) {
    std::vector<double> out;
    out.reserve(sigma.atom_count());
    for (NodeIndex a : sigma.atoms()) out.push_back(q.mass(a));
    return out;
}

} // namespace dynrisk
