#pragma once

// Random fixture generators shared by the property and acceptance suites.

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "comfyflow/ir.hpp"
#include "comfyflow/nodebase.hpp"

namespace testgen {

using namespace comfyflow;

struct PortDecl {
    std::string name;
    std::string type;
};

struct TypeDecl {
    std::string name;
    std::vector<PortDecl> inputs;
    std::vector<PortDecl> outputs;
};

inline const std::vector<std::string>& value_types() {
    static const std::vector<std::string> v{"IMAGE", "LATENT", "MODEL"};
    return v;
}

/// A fixed node-type catalog: one source type producing every value type,
/// plus `count` random types. Names contain spaces, digits and underscores so
/// ordinal parsing is exercised.
inline std::vector<TypeDecl> catalog(std::size_t count = 12, unsigned seed = 1234) {
    std::mt19937_64 rng(seed);
    std::vector<TypeDecl> out;
    TypeDecl hub{"Loader Hub", {}, {}};
    for (const auto& t : value_types()) hub.outputs.push_back({t, t});
    out.push_back(hub);
    const std::vector<std::string> stems{"Proc", "Mix_2", "Up Scale", "Node_7_", "Sampler"};
    for (std::size_t i = 0; i < count; ++i) {
        TypeDecl t;
        t.name = stems[i % stems.size()] + std::to_string(i);
        const auto nin = 1 + rng() % 3;
        const auto nout = 1 + rng() % 3;
        for (std::size_t k = 0; k < nin; ++k)
            t.inputs.push_back({"in" + std::to_string(k), value_types()[rng() % value_types().size()]});
        for (std::size_t k = 0; k < nout; ++k)
            t.outputs.push_back({"out" + std::to_string(k), value_types()[rng() % value_types().size()]});
        out.push_back(t);
    }
    return out;
}

/// Node specs (with port types) for every catalog type plus the special
/// node types a dirty graph may contain.
inline std::vector<NodeSpec> catalog_specs(const std::vector<TypeDecl>& types = catalog()) {
    std::vector<NodeSpec> out;
    for (const auto& t : types) {
        NodeSpec s;
        s.node_name = t.name;
        std::vector<std::string> in_types, out_types;
        for (const auto& p : t.inputs) {
            s.input_names.push_back(p.name);
            in_types.push_back(p.type);
        }
        for (const auto& p : t.outputs) {
            s.output_names.push_back(p.name);
            out_types.push_back(p.type);
        }
        s.input_types = in_types;
        s.output_types = out_types;
        out.push_back(std::move(s));
    }
    return out;
}

/// Distinct positive ids in shuffled order, so ascending-id ordering differs
/// from insertion order.
inline std::vector<std::int64_t> shuffled_ids(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 1);
    for (auto& id : ids) id = id * 3 + static_cast<std::int64_t>(rng() % 3);
    std::shuffle(ids.begin(), ids.end(), rng);
    return ids;
}

inline GraphNode instantiate(const TypeDecl& t, std::int64_t id) {
    GraphNode n;
    n.id = id;
    n.type_name = t.name;
    for (const auto& p : t.inputs) n.inputs.push_back({p.name, p.type, std::nullopt, json::object()});
    for (const auto& p : t.outputs) n.outputs.push_back({p.name, p.type, {}, json::object()});
    return n;
}

inline void connect(GraphWorkflow& g, std::size_t src_index, std::size_t src_slot, std::size_t dst_index,
                    std::size_t dst_slot, std::int64_t link_id) {
    auto& src = g.nodes[src_index];
    auto& dst = g.nodes[dst_index];
    GraphLink l{link_id, src.id, src_slot, dst.id, dst_slot, src.outputs[src_slot].value_type};
    src.outputs[src_slot].links.push_back(link_id);
    dst.inputs[dst_slot].link = link_id;
    g.links.push_back(l);
}

/// A connected DAG over `n` nodes drawn from the catalog. Node 0 is the hub;
/// every later node has its first input linked to an earlier producer.
inline GraphWorkflow random_graph(std::mt19937_64& rng, std::size_t n, const std::vector<TypeDecl>& types = catalog()) {
    GraphWorkflow g;
    const auto ids = shuffled_ids(rng, n);
    g.nodes.push_back(instantiate(types[0], ids[0]));
    std::int64_t next_link = 1 + static_cast<std::int64_t>(rng() % 5);
    for (std::size_t j = 1; j < n; ++j) {
        g.nodes.push_back(instantiate(types[1 + rng() % (types.size() - 1)], ids[j]));
        for (std::size_t s = 0; s < g.nodes[j].inputs.size(); ++s) {
            if (s > 0 && rng() % 100 >= 80) continue;
            std::vector<std::pair<std::size_t, std::size_t>> producers;
            for (std::size_t i = 0; i < j; ++i)
                for (std::size_t o = 0; o < g.nodes[i].outputs.size(); ++o)
                    if (g.nodes[i].outputs[o].value_type == g.nodes[j].inputs[s].value_type) producers.emplace_back(i, o);
            if (j == 1) std::erase_if(producers, [](auto& p) { return p.first != 0; });
            if (producers.empty()) continue;
            const auto [i, o] = producers[rng() % producers.size()];
            connect(g, i, o, j, s, next_link);
            next_link += 1 + static_cast<std::int64_t>(rng() % 3);
        }
    }
    std::shuffle(g.links.begin(), g.links.end(), rng);
    return g;
}

/// A structurally valid diagram with `links` links: dense ordinals, unique
/// input slots, no self loops.
inline WorkflowDiagram random_diagram(std::mt19937_64& rng, std::size_t links) {
    const std::vector<std::string> types{"KSampler", "VAE Decode", "Mix_2", "Load_3_x", "Save"};
    std::vector<NodeRef> refs;
    std::vector<std::size_t> counts(types.size(), 0);
    const auto nodes = 2 + rng() % (links + 1);
    for (std::size_t i = 0; i < nodes; ++i) {
        const auto t = rng() % types.size();
        refs.push_back({types[t], counts[t]++});
    }
    WorkflowDiagram d;
    std::vector<std::size_t> next_port(refs.size(), 0);
    std::vector<bool> used(refs.size(), false);
    for (std::size_t k = 0; k < links; ++k) {
        const auto a = rng() % refs.size();
        auto b = rng() % refs.size();
        if (b == a) b = (a + 1) % refs.size();
        d.links.push_back({refs[a], "OUT" + std::to_string(rng() % 3), refs[b], "in" + std::to_string(next_port[b]++)});
        used[a] = used[b] = true;
    }
    // Every ref must appear for the ordinals to stay dense.
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (used[i]) continue;
        const auto other = (i + 1) % refs.size();
        d.links.push_back({refs[i], "OUT0", refs[other], "in" + std::to_string(next_port[other]++)});
    }
    return d;
}

inline std::int64_t max_node_id(const GraphWorkflow& g) {
    std::int64_t hi = 0;
    for (const auto& n : g.nodes) hi = std::max(hi, n.id);
    return hi;
}

inline std::int64_t max_link_id(const GraphWorkflow& g) {
    std::int64_t hi = 0;
    for (const auto& l : g.links) hi = std::max(hi, l.id);
    return hi;
}

inline std::size_t index_of(const GraphWorkflow& g, std::int64_t id) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (g.nodes[i].id == id) return i;
    throw std::out_of_range("node id");
}

/// Detaches link `link_index` and returns it.
inline GraphLink detach(GraphWorkflow& g, std::size_t link_index) {
    const GraphLink l = g.links[link_index];
    std::erase(g.nodes[index_of(g, l.src_node)].outputs[l.src_slot].links, l.id);
    g.nodes[index_of(g, l.dst_node)].inputs[l.dst_slot].link.reset();
    g.links.erase(g.links.begin() + static_cast<std::ptrdiff_t>(link_index));
    return l;
}

/// A clean random graph with cosmetic and special nodes injected so that every
/// splice and broadcast is resolvable: reroutes (possibly chained) and
/// bypassed pass-through nodes on existing links, one broadcaster per value
/// type replacing an explicit link, and isolated notes.
inline GraphWorkflow random_dirty_graph(std::mt19937_64& rng, std::size_t n) {
    auto g = random_graph(rng, n);
    std::int64_t next_node = max_node_id(g) + 1;
    std::int64_t next_link = max_link_id(g) + 1;

    const auto reroutes = rng() % 4;
    for (std::size_t k = 0; k < reroutes && !g.links.empty(); ++k) {
        std::swap(g.links[rng() % g.links.size()], g.links.back());
        const auto l2 = detach(g, g.links.size() - 1);
        GraphNode mid;
        mid.type_name = "Reroute";
        mid.inputs.push_back({"", "*", std::nullopt, json::object()});
        mid.outputs.push_back({"", l2.value_type, {}, json::object()});
        mid.id = next_node++;
        g.nodes.push_back(mid);
        const auto mi = g.nodes.size() - 1;
        connect(g, index_of(g, l2.src_node), l2.src_slot, mi, 0, next_link++);
        connect(g, mi, 0, index_of(g, l2.dst_node), l2.dst_slot, next_link++);
        // Occasionally fan out: steal another consumer of the same producer.
        for (std::size_t j = 0; j < g.links.size(); ++j) {
            if (g.links[j].src_node == l2.src_node && g.links[j].src_slot == l2.src_slot &&
                g.links[j].dst_node != mid.id && rng() % 2 == 0) {
                const auto stolen = detach(g, j);
                connect(g, index_of(g, mid.id), 0, index_of(g, stolen.dst_node), stolen.dst_slot, next_link++);
                break;
            }
        }
    }

    const auto bypasses = rng() % 3;
    for (std::size_t k = 0; k < bypasses && !g.links.empty(); ++k) {
        std::swap(g.links[rng() % g.links.size()], g.links.back());
        const auto type = g.links.back().value_type;
        GraphNode b;
        b.type_name = "Upscale Pass";
        b.mode = rng() % 2 ? NodeMode::Bypass : NodeMode::Mute;
        b.inputs.push_back({"image", type, std::nullopt, json::object()});
        b.outputs.push_back({"out", type, {}, json::object()});
        b.outputs.push_back({"extra", "MASK", {}, json::object()});
        b.widget_values = json::array({"lanczos", 2});
        const auto l = detach(g, g.links.size() - 1);
        b.id = next_node++;
        g.nodes.push_back(b);
        const auto bi = g.nodes.size() - 1;
        connect(g, index_of(g, l.src_node), l.src_slot, bi, 0, next_link++);
        connect(g, bi, 0, index_of(g, l.dst_node), l.dst_slot, next_link++);
    }

    if (rng() % 3 != 0) {
        // One broadcaster per value type, each replacing one explicit link.
        std::set<std::string> used;
        const auto count = 1 + rng() % 2;
        for (std::size_t k = 0; k < count && !g.links.empty(); ++k) {
            const auto li = rng() % g.links.size();
            const auto& cand = g.links[li];
            const auto* src = &g.nodes[index_of(g, cand.src_node)];
            const auto* dst = &g.nodes[index_of(g, cand.dst_node)];
            if (used.contains(cand.value_type) || src->type_name == "Reroute" || dst->type_name == "Reroute" ||
                src->mode != NodeMode::Normal || dst->mode != NodeMode::Normal)
                continue;
            used.insert(cand.value_type);
            const auto l = detach(g, li);
            GraphNode ae;
            ae.id = next_node++;
            ae.type_name = "Anything Everywhere";
            ae.inputs.push_back({"anything", "*", std::nullopt, json::object()});
            g.nodes.push_back(ae);
            connect(g, index_of(g, l.src_node), l.src_slot, g.nodes.size() - 1, 0, next_link++);
        }
    }

    const auto notes = rng() % 3;
    for (std::size_t k = 0; k < notes; ++k) {
        GraphNode note;
        note.id = next_node++;
        note.type_name = "Note";
        note.widget_values = json::array({"remember to set the seed"});
        g.nodes.push_back(note);
    }
    std::shuffle(g.nodes.begin(), g.nodes.end(), rng);
    return g;
}

}  // namespace testgen
