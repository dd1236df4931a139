#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "comfyflow/error.hpp"
#include "comfyflow/ir.hpp"

namespace comfyflow {

/// Decides whether an unfilled input must be fed by a broadcaster.
using RequiredInputPredicate = std::function<bool(const GraphNode&, const InputSlot&)>;

/// Default: every linkable input is required except widgets converted to inputs.
inline bool default_required_input(const GraphNode&, const InputSlot& slot) { return !slot.is_widget(); }

struct CleaningOptions {
    bool drop_note_nodes = true;
    bool splice_reroute = true;
    bool resolve_broadcasters = true;
    bool splice_bypass = true;
    bool require_connected = true;
    /// Throw instead of recording AmbiguousBroadcast / disconnection in the report.
    bool strict = false;

    std::set<std::string> note_types{"Note", "MarkdownNote"};
    std::set<std::string> reroute_types{"Reroute"};
    std::set<std::string> broadcaster_types{"Anything Everywhere", "Anything Everywhere?", "Anything Everywhere3"};
    RequiredInputPredicate is_required = default_required_input;
};

enum class CleaningIssueCode { UnsplicableBypass, DanglingReroute };

struct CleaningIssue {
    CleaningIssueCode code;
    std::int64_t node_id;
    std::string message;

    friend bool operator==(const CleaningIssue&, const CleaningIssue&) = default;
};

struct RemovedNode {
    std::int64_t id;
    std::string type_name;
    std::string reason;

    friend bool operator==(const RemovedNode&, const RemovedNode&) = default;
};

struct CleaningReport {
    std::vector<RemovedNode> removed_nodes;
    std::size_t added_links = 0;    // explicit links replacing broadcasts
    std::size_t spliced_links = 0;  // links rewired around reroute/bypass nodes
    std::size_t dropped_links = 0;
    std::vector<CleaningIssue> issues;
    std::optional<std::string> rejected;

    bool is_identity() const {
        return removed_nodes.empty() && added_links == 0 && spliced_links == 0 && dropped_links == 0 &&
               issues.empty() && !rejected;
    }
};

inline json report_to_json(const CleaningReport& r) {
    json removed = json::array();
    for (const auto& n : r.removed_nodes) removed.push_back({{"id", n.id}, {"type", n.type_name}, {"reason", n.reason}});
    json issues = json::array();
    for (const auto& i : r.issues)
        issues.push_back({{"code", i.code == CleaningIssueCode::UnsplicableBypass ? "UnsplicableBypass" : "DanglingReroute"},
                          {"node_id", i.node_id},
                          {"message", i.message}});
    return {{"removed_nodes", removed},
            {"added_links", r.added_links},
            {"spliced_links", r.spliced_links},
            {"dropped_links", r.dropped_links},
            {"issues", issues},
            {"rejected", r.rejected ? json(*r.rejected) : json()}};
}

// ---------------------------------------------------------------------------
// Graph editing primitives. They keep the link table and the slot references
// on both ends consistent.
// ---------------------------------------------------------------------------
namespace detail {

inline std::int64_t next_link_id(const GraphWorkflow& g) {
    std::int64_t hi = 0;
    for (const auto& l : g.links) hi = std::max(hi, l.id);
    if (auto it = g.extra.find("last_link_id"); it != g.extra.end() && it->is_number_integer())
        hi = std::max(hi, it->get<std::int64_t>());
    return hi + 1;
}

inline void remove_link(GraphWorkflow& g, std::int64_t link_id) {
    auto it = std::find_if(g.links.begin(), g.links.end(), [&](const GraphLink& l) { return l.id == link_id; });
    if (it == g.links.end()) return;
    if (auto* src = g.find_node(it->src_node)) std::erase(src->outputs[it->src_slot].links, link_id);
    if (auto* dst = g.find_node(it->dst_node)) dst->inputs[it->dst_slot].link.reset();
    g.links.erase(it);
}

inline std::int64_t add_link(GraphWorkflow& g, std::int64_t src_id, std::size_t src_slot, std::int64_t dst_id,
                             std::size_t dst_slot, std::string value_type) {
    const auto id = next_link_id(g);
    g.find_node(src_id)->outputs[src_slot].links.push_back(id);
    g.find_node(dst_id)->inputs[dst_slot].link = id;
    g.links.push_back({id, src_id, src_slot, dst_id, dst_slot, std::move(value_type)});
    if (auto it = g.extra.find("last_link_id"); it != g.extra.end() && it->is_number_integer()) *it = id;
    return id;
}

inline void remove_node(GraphWorkflow& g, std::int64_t node_id) {
    std::vector<std::int64_t> touching;
    for (const auto& l : g.links)
        if (l.src_node == node_id || l.dst_node == node_id) touching.push_back(l.id);
    for (auto id : touching) remove_link(g, id);
    std::erase_if(g.nodes, [&](const GraphNode& n) { return n.id == node_id; });
}

inline std::vector<std::int64_t> ids_matching(const GraphWorkflow& g, const std::function<bool(const GraphNode&)>& pred) {
    std::vector<std::int64_t> ids;
    for (const auto& n : g.nodes)
        if (pred(n)) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Rewires every outgoing link of `node_id` to a producer feeding the node,
/// then removes the node. `pick` chooses the incoming link to pass through for
/// an outgoing link, or nullptr when none qualifies.
inline void splice_node(GraphWorkflow& g, std::int64_t node_id, CleaningReport& report,
                        const std::function<const GraphLink*(const GraphWorkflow&, const GraphLink&)>& pick,
                        CleaningIssueCode failure, const std::string& reason) {
    std::vector<GraphLink> outgoing;
    for (const auto& l : g.links)
        if (l.src_node == node_id) outgoing.push_back(l);
    std::sort(outgoing.begin(), outgoing.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    const std::string type_name = g.find_node(node_id)->type_name;
    for (const auto& out : outgoing) {
        const GraphLink* through = pick(g, out);
        std::optional<GraphLink> producer;
        if (through) producer = *through;
        remove_link(g, out.id);
        if (producer && producer->src_node != out.dst_node) {
            const auto& src_type = g.find_node(producer->src_node)->outputs[producer->src_slot].value_type;
            add_link(g, producer->src_node, producer->src_slot, out.dst_node, out.dst_slot,
                     known_type(src_type) ? src_type : out.value_type);
            ++report.spliced_links;
        } else {
            ++report.dropped_links;
            report.issues.push_back({failure, node_id,
                                     "no " + (out.value_type.empty() ? std::string("matching") : out.value_type) +
                                         " producer to pass through " + type_name + " to node " +
                                         std::to_string(out.dst_node)});
        }
    }
    report.removed_nodes.push_back({node_id, type_name, reason});
    remove_node(g, node_id);
}

struct Broadcast {
    std::string value_type;
    std::int64_t src_node;
    std::size_t src_slot;

    friend auto operator<=>(const Broadcast&, const Broadcast&) = default;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Special-node processing.
// ---------------------------------------------------------------------------

/// Replaces implicit broadcasts with explicit links. A broadcaster node
/// publishes whatever its linked inputs carry; each unfilled required input of
/// a matching type gets a link from that producer, then the broadcaster nodes
/// are removed. Throws AmbiguousBroadcast when an unfilled input matches two
/// distinct producers.
inline GraphWorkflow resolve_broadcasters(GraphWorkflow g, const CleaningOptions& opts, CleaningReport& report) {
    const auto broadcasters = detail::ids_matching(g, [&](const GraphNode& n) { return opts.broadcaster_types.contains(n.type_name); });
    if (broadcasters.empty()) return g;

    const std::set<std::int64_t> is_broadcaster(broadcasters.begin(), broadcasters.end());
    std::set<detail::Broadcast> published;
    for (auto id : broadcasters) {
        for (const auto& slot : g.find_node(id)->inputs) {
            if (!slot.link) continue;
            const auto* l = g.find_link(*slot.link);
            const auto& src_type = g.find_node(l->src_node)->outputs[l->src_slot].value_type;
            const auto type = known_type(l->value_type) ? l->value_type : src_type;
            if (known_type(type)) published.insert({type, l->src_node, l->src_slot});
        }
    }

    struct Pending {
        std::int64_t node;
        std::size_t slot;
        detail::Broadcast from;
    };
    std::vector<Pending> pending;
    for (const auto& n : g.nodes) {
        if (is_broadcaster.contains(n.id) || opts.note_types.contains(n.type_name) ||
            opts.reroute_types.contains(n.type_name))
            continue;
        for (std::size_t s = 0; s < n.inputs.size(); ++s) {
            const auto& slot = n.inputs[s];
            if (slot.link || !known_type(slot.value_type) || !opts.is_required(n, slot)) continue;
            std::vector<detail::Broadcast> matches;
            for (const auto& b : published)
                if (b.value_type == slot.value_type && b.src_node != n.id) matches.push_back(b);
            if (matches.size() > 1)
                throw Error(ErrorCode::AmbiguousBroadcast, std::to_string(n.id) + "/" + slot.port,
                            std::to_string(matches.size()) + " broadcasters publish " + slot.value_type);
            if (matches.size() == 1) pending.push_back({n.id, s, matches.front()});
        }
    }

    for (const auto& p : pending) {
        detail::add_link(g, p.from.src_node, p.from.src_slot, p.node, p.slot, p.from.value_type);
        ++report.added_links;
    }
    for (auto id : broadcasters) {
        report.removed_nodes.push_back({id, g.find_node(id)->type_name, "broadcaster"});
        detail::remove_node(g, id);
    }
    return g;
}

inline GraphWorkflow resolve_broadcasters(GraphWorkflow g, const CleaningOptions& opts = {}) {
    CleaningReport ignored;
    return resolve_broadcasters(std::move(g), opts, ignored);
}

/// Removes bypassed and muted nodes. Each outgoing link of type T is wired to
/// the node's single incoming producer of type T; without exactly one such
/// producer the link is dropped and an UnsplicableBypass issue is recorded.
inline GraphWorkflow splice_bypass(GraphWorkflow g, CleaningReport& report) {
    const auto skipped = detail::ids_matching(g, [](const GraphNode& n) { return n.mode != NodeMode::Normal; });
    for (auto id : skipped) {
        detail::splice_node(
            g, id, report,
            [id](const GraphWorkflow& graph, const GraphLink& out) -> const GraphLink* {
                const GraphLink* found = nullptr;
                for (const auto& l : graph.links) {
                    if (l.dst_node != id || l.value_type != out.value_type) continue;
                    if (found) return nullptr;
                    found = &l;
                }
                return found;
            },
            CleaningIssueCode::UnsplicableBypass, "bypassed");
    }
    return g;
}

inline GraphWorkflow splice_bypass(GraphWorkflow g) {
    CleaningReport ignored;
    return splice_bypass(std::move(g), ignored);
}

/// Removes Reroute nodes, connecting the upstream producer to every consumer.
inline GraphWorkflow splice_reroutes(GraphWorkflow g, const CleaningOptions& opts, CleaningReport& report) {
    const auto reroutes = detail::ids_matching(g, [&](const GraphNode& n) { return opts.reroute_types.contains(n.type_name); });
    for (auto id : reroutes) {
        detail::splice_node(
            g, id, report,
            [id](const GraphWorkflow& graph, const GraphLink&) -> const GraphLink* {
                const GraphLink* found = nullptr;
                for (const auto& l : graph.links) {
                    if (l.dst_node != id) continue;
                    if (found) return nullptr;
                    found = &l;
                }
                return found;
            },
            CleaningIssueCode::DanglingReroute, "reroute");
    }
    return g;
}

inline GraphWorkflow drop_notes(GraphWorkflow g, const CleaningOptions& opts, CleaningReport& report) {
    for (auto id : detail::ids_matching(g, [&](const GraphNode& n) { return opts.note_types.contains(n.type_name); })) {
        report.removed_nodes.push_back({id, g.find_node(id)->type_name, "note"});
        detail::remove_node(g, id);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Connectivity.
// ---------------------------------------------------------------------------

struct Connectivity {
    std::size_t components = 0;
    bool connected() const { return components == 1; }
};

/// Counts connected components treating links as undirected edges.
inline Connectivity check_connected(const GraphWorkflow& g) {
    if (g.nodes.empty()) throw Error(ErrorCode::EmptyGraph, "/nodes", "graph has no nodes");
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) index[g.nodes[i].id] = i;
    std::vector<std::size_t> parent(g.nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::size_t components = g.nodes.size();
    for (const auto& l : g.links) {
        const auto a = find(index.at(l.src_node));
        const auto b = find(index.at(l.dst_node));
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return {components};
}

// ---------------------------------------------------------------------------
// Full cleaning pipeline.
// ---------------------------------------------------------------------------

struct CleanResult {
    GraphWorkflow graph;
    CleaningReport report;
};

/// Broadcasters, then bypass/mute, then reroutes, then notes, then the
/// connectivity check. Ambiguous broadcasts and disconnected graphs set
/// `report.rejected` (or throw when `opts.strict`).
inline CleanResult clean(GraphWorkflow g, const CleaningOptions& opts = {}) {
    CleanResult r;
    try {
        if (opts.resolve_broadcasters) g = resolve_broadcasters(std::move(g), opts, r.report);
    } catch (const Error& e) {
        if (opts.strict || e.code() != ErrorCode::AmbiguousBroadcast) throw;
        r.report.rejected = e.what();
    }
    if (opts.splice_bypass) g = splice_bypass(std::move(g), r.report);
    if (opts.splice_reroute) g = splice_reroutes(std::move(g), opts, r.report);
    if (opts.drop_note_nodes) g = drop_notes(std::move(g), opts, r.report);
    if (opts.require_connected && !r.report.rejected) {
        if (g.nodes.empty()) {
            r.report.rejected = "graph is empty after cleaning";
        } else if (const auto c = check_connected(g); !c.connected()) {
            r.report.rejected = "graph has " + std::to_string(c.components) + " connected components";
        }
        if (opts.strict && r.report.rejected) throw Error(ErrorCode::InvalidWorkflow, "", *r.report.rejected);
    }
    r.graph = std::move(g);
    return r;
}

// ---------------------------------------------------------------------------
// Lowering to the diagram representation.
// ---------------------------------------------------------------------------

/// Node refs for every node: ordinals per type name in ascending id order.
inline std::map<std::int64_t, NodeRef> assign_node_refs(const GraphWorkflow& g) {
    std::vector<const GraphNode*> order;
    for (const auto& n : g.nodes) order.push_back(&n);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    std::map<std::string, std::size_t> counts;
    std::map<std::int64_t, NodeRef> refs;
    for (const auto* n : order) refs[n->id] = NodeRef{n->type_name, counts[n->type_name]++};
    return refs;
}

/// One link per graph link, ordered by ascending link id. Nodes without links
/// do not appear in the diagram.
inline WorkflowDiagram to_diagram(const GraphWorkflow& g) {
    // Ordinals must be dense over the nodes that actually appear in links.
    std::set<std::int64_t> linked;
    for (const auto& l : g.links) {
        linked.insert(l.src_node);
        linked.insert(l.dst_node);
    }
    GraphWorkflow visible;
    for (const auto& n : g.nodes)
        if (linked.contains(n.id)) visible.nodes.push_back(n);
    const auto refs = assign_node_refs(visible);

    std::vector<const GraphLink*> order;
    for (const auto& l : g.links) order.push_back(&l);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    WorkflowDiagram d;
    for (const auto* l : order) {
        const auto* src = g.find_node(l->src_node);
        const auto* dst = g.find_node(l->dst_node);
        const auto& out_port = src->outputs.at(l->src_slot).port;
        const auto& in_port = dst->inputs.at(l->dst_slot).port;
        if (!valid_port_name(out_port))
            throw Error(ErrorCode::UnnamedPort, refs.at(src->id).str() + "/outputs/" + std::to_string(l->src_slot),
                        "output slot has no usable port name");
        if (!valid_port_name(in_port))
            throw Error(ErrorCode::UnnamedPort, refs.at(dst->id).str() + "/inputs/" + std::to_string(l->dst_slot),
                        "input slot has no usable port name");
        d.links.push_back({refs.at(src->id), out_port, refs.at(dst->id), in_port});
    }
    return d;
}

}  // namespace comfyflow
