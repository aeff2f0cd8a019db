#pragma once

// Feeder tree: loads on vertices, protective devices on edges. Each edge is
// identified by its child vertex, which is unique because every non-root
// vertex has exactly one parent.

#include "feederstats/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace feederstats::feeder {

enum class Device { None, Fuse, Switch };

inline std::string to_string(Device d) {
    switch (d) {
        case Device::Fuse: return "fuse";
        case Device::Switch: return "switch";
        case Device::None: break;
    }
    return "none";
}

inline Device parse_device(const std::string& s) {
    if (s == "fuse") return Device::Fuse;
    if (s == "switch") return Device::Switch;
    if (s == "none" || s.empty()) return Device::None;
    throw InvalidParameter("unknown device kind '" + s + "'");
}

struct EdgeSpec {
    std::string parent;
    std::string child;
    Device device = Device::None;
    double child_load = 0.0;  // kWh
};

struct DeviceGroup {
    // Child vertex of the device edge; empty for the residual root group.
    std::string device_edge;
    Device device = Device::None;
    std::vector<std::string> members;  // sorted
    double total_load = 0.0;           // kWh

    bool is_root_residual() const noexcept { return device_edge.empty(); }
};

class FeederTree {
public:
    /// Builds and validates the tree. The root is the unique vertex that
    /// never appears as a child; its load defaults to zero.
    static FeederTree from_edges(const std::vector<EdgeSpec>& edges, double root_load = 0.0) {
        FeederTree t;
        std::map<std::string, std::size_t> index;
        auto intern = [&](const std::string& id) {
            auto [it, inserted] = index.try_emplace(id, t.ids_.size());
            if (inserted) {
                t.ids_.push_back(id);
                t.load_.push_back(0.0);
                t.parent_.push_back(npos);
                t.device_.push_back(Device::None);
            }
            return it->second;
        };
        for (const auto& e : edges) {
            if (e.parent.empty() || e.child.empty()) throw InvalidParameter("feeder edge with empty vertex id");
            if (e.parent == e.child) throw InvalidParameter("feeder self-loop at '" + e.child + "'");
            if (!(e.child_load >= 0.0) || !std::isfinite(e.child_load))
                throw InvalidParameter("load at '" + e.child + "' must be finite and >= 0");
            const auto p = intern(e.parent);
            const auto c = intern(e.child);
            if (t.parent_[c] != npos) throw InvalidParameter("vertex '" + e.child + "' has more than one parent");
            t.parent_[c] = p;
            t.device_[c] = e.device;
            t.load_[c] = e.child_load;
        }
        if (t.ids_.empty()) throw InvalidParameter("feeder tree has no edges");
        t.index_ = std::move(index);

        std::size_t root = npos;
        for (std::size_t v = 0; v < t.ids_.size(); ++v) {
            if (t.parent_[v] != npos) continue;
            if (root != npos) throw InvalidParameter("feeder tree has multiple roots: '" + t.ids_[root] + "', '" + t.ids_[v] + "'");
            root = v;
        }
        if (root == npos) throw InvalidParameter("feeder graph has no root (cycle)");
        t.root_ = root;
        if (!(root_load >= 0.0)) throw InvalidParameter("root load must be >= 0");
        t.load_[root] = root_load;

        t.children_.assign(t.ids_.size(), {});
        for (std::size_t v = 0; v < t.ids_.size(); ++v)
            if (t.parent_[v] != npos) t.children_[t.parent_[v]].push_back(v);
        for (auto& c : t.children_)
            std::sort(c.begin(), c.end(), [&](auto a, auto b) { return t.ids_[a] < t.ids_[b]; });

        // With one root and one parent per vertex, reachability from the root
        // rules out cycles and disconnected components.
        std::size_t reached = 0;
        t.visit(root, [&](std::size_t) { ++reached; });
        if (reached != t.ids_.size()) throw InvalidParameter("feeder graph is not a connected tree (cycle detected)");
        return t;
    }

    const std::string& root() const noexcept { return ids_[root_]; }
    std::size_t size() const noexcept { return ids_.size(); }

    std::vector<std::string> vertices() const {
        std::vector<std::string> v = ids_;
        std::sort(v.begin(), v.end());
        return v;
    }

    double load(const std::string& vertex) const { return load_[find(vertex)]; }

    std::optional<std::string> parent(const std::string& vertex) const {
        const auto p = parent_[find(vertex)];
        if (p == npos) return std::nullopt;
        return ids_[p];
    }

    Device device(const std::string& edge_child) const { return device_[find_edge(edge_child)]; }

    std::vector<std::string> children(const std::string& vertex) const {
        std::vector<std::string> out;
        for (auto c : children_[find(vertex)]) out.push_back(ids_[c]);
        return out;
    }

    double total_load() const {
        double s = 0.0;
        for (double l : load_) s += l;
        return s;
    }

    /// Sum of loads in the subtree hanging below the edge into `edge_child`.
    double downstream_load(const std::string& edge_child) const {
        double s = 0.0;
        visit(find_edge(edge_child), [&](std::size_t v) { s += load_[v]; });
        return s;
    }

    /// Assigns every vertex to its nearest ancestor device edge (the edge into
    /// the vertex itself counts). Vertices with no device on their root path
    /// form the residual root group, listed last. Device groups are ordered by
    /// edge id, so the result does not depend on input edge order.
    std::vector<DeviceGroup> group_by_device() const {
        std::vector<std::size_t> owner(ids_.size(), npos);  // device edge child, npos = root group
        // Pre-order walk propagating the nearest device downward.
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root_, npos}};
        while (!stack.empty()) {
            auto [v, inherited] = stack.back();
            stack.pop_back();
            const std::size_t mine = device_[v] != Device::None && parent_[v] != npos ? v : inherited;
            owner[v] = mine;
            for (auto c : children_[v]) stack.emplace_back(c, mine);
        }

        std::map<std::string, DeviceGroup> by_edge;
        DeviceGroup residual;
        for (std::size_t v = 0; v < ids_.size(); ++v) {
            DeviceGroup* g = &residual;
            if (owner[v] != npos) {
                g = &by_edge[ids_[owner[v]]];
                g->device_edge = ids_[owner[v]];
                g->device = device_[owner[v]];
            }
            g->members.push_back(ids_[v]);
        }
        std::vector<DeviceGroup> out;
        for (auto& [_, g] : by_edge) out.push_back(std::move(g));
        out.push_back(std::move(residual));
        for (auto& g : out) {
            std::sort(g.members.begin(), g.members.end());
            g.total_load = 0.0;
            for (const auto& m : g.members) g.total_load += load_[index_.at(m)];
        }
        return out;
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t find(const std::string& id) const {
        const auto it = index_.find(id);
        if (it == index_.end()) throw NotFound("unknown feeder vertex '" + id + "'");
        return it->second;
    }

    std::size_t find_edge(const std::string& child) const {
        const auto v = find(child);
        if (parent_[v] == npos) throw NotFound("no edge leads into root vertex '" + child + "'");
        return v;
    }

    template <class F>
    void visit(std::size_t start, F&& f) const {
        std::vector<std::size_t> stack{start};
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            f(v);
            for (auto c : children_[v]) stack.push_back(c);
        }
    }

    std::vector<std::string> ids_;
    std::map<std::string, std::size_t> index_;
    std::vector<double> load_;
    std::vector<std::size_t> parent_;
    std::vector<Device> device_;  // device on the edge into each vertex
    std::vector<std::vector<std::size_t>> children_;
    std::size_t root_ = 0;
};

inline double downstream_load(const FeederTree& tree, const std::string& edge_child) {
    return tree.downstream_load(edge_child);
}

inline std::vector<DeviceGroup> group_by_device(const FeederTree& tree) { return tree.group_by_device(); }

}  // namespace feederstats::feeder
