#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "comfyflow/error.hpp"
#include "json.hpp"

namespace comfyflow {

using json = nlohmann::json;

/// Port names are case-sensitive, non-empty and carry no surrounding whitespace.
inline bool valid_port_name(std::string_view name) {
    if (name.empty()) return false;
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    return !is_ws(name.front()) && !is_ws(name.back());
}

// ---------------------------------------------------------------------------
// Diagram representation: a list of [out_node, out_port, in_node, in_port].
// ---------------------------------------------------------------------------

/// A node occurrence inside a diagram, rendered as `<type_name>_<ordinal>`.
struct NodeRef {
    std::string type_name;
    std::size_t ordinal = 0;

    std::string str() const { return type_name + "_" + std::to_string(ordinal); }

    /// Splits on the final underscore; the suffix must be a canonical decimal
    /// (no sign, no leading zeros), so `X_1_2` is type `X_1`, ordinal 2.
    static NodeRef parse(std::string_view text) {
        const auto cut = text.rfind('_');
        if (cut == std::string_view::npos || cut == 0 || cut + 1 == text.size())
            throw Error(ErrorCode::BadNodeRef, std::string(text), "expected <type_name>_<ordinal>");
        const auto digits = text.substr(cut + 1);
        const bool all_digits = std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
        if (!all_digits || (digits.size() > 1 && digits.front() == '0') || digits.size() > 9)
            throw Error(ErrorCode::BadNodeRef, std::string(text), "ordinal suffix is not a canonical decimal");
        NodeRef ref;
        ref.type_name = std::string(text.substr(0, cut));
        std::from_chars(digits.data(), digits.data() + digits.size(), ref.ordinal);
        return ref;
    }

    friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
    friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

struct Link {
    NodeRef out_node;
    std::string out_port;
    NodeRef in_node;
    std::string in_port;

    friend auto operator<=>(const Link&, const Link&) = default;
    friend bool operator==(const Link&, const Link&) = default;
};

/// Ordered link list. Order is preserved through parse/emit, but equality is
/// set equality: two diagrams listing the same links in different order are equal.
struct WorkflowDiagram {
    std::vector<Link> links;

    bool empty() const { return links.empty(); }

    /// Distinct node refs in first-appearance order (out node before in node).
    std::vector<NodeRef> node_refs() const {
        std::vector<NodeRef> out;
        std::set<NodeRef> seen;
        for (const auto& l : links) {
            for (const auto* r : {&l.out_node, &l.in_node})
                if (seen.insert(*r).second) out.push_back(*r);
        }
        return out;
    }

    std::set<std::string> type_names() const {
        std::set<std::string> out;
        for (const auto& l : links) {
            out.insert(l.out_node.type_name);
            out.insert(l.in_node.type_name);
        }
        return out;
    }

    friend bool operator==(const WorkflowDiagram& a, const WorkflowDiagram& b) {
        std::set<Link> sa(a.links.begin(), a.links.end());
        std::set<Link> sb(b.links.begin(), b.links.end());
        return sa == sb;
    }
};

/// Throws DuplicateInputSlot or NonDenseOrdinals when the link list breaks the
/// diagram invariants.
inline void check_diagram_invariants(const std::vector<Link>& links) {
    std::set<std::pair<NodeRef, std::string>> inputs;
    std::map<std::string, std::set<std::size_t>> ordinals;
    for (std::size_t i = 0; i < links.size(); ++i) {
        const auto& l = links[i];
        if (!inputs.emplace(l.in_node, l.in_port).second)
            throw Error(ErrorCode::DuplicateInputSlot, l.in_node.str() + "/" + l.in_port,
                        "input slot has more than one producer (link " + std::to_string(i) + ")");
        ordinals[l.out_node.type_name].insert(l.out_node.ordinal);
        ordinals[l.in_node.type_name].insert(l.in_node.ordinal);
    }
    for (const auto& [type, ords] : ordinals) {
        if (*ords.rbegin() + 1 != ords.size())
            throw Error(ErrorCode::NonDenseOrdinals, type,
                        "ordinals must be 0.." + std::to_string(ords.size() - 1) + ", highest is " +
                            std::to_string(*ords.rbegin()));
    }
}

inline WorkflowDiagram diagram_from_json(const json& doc) {
    if (!doc.is_array()) throw Error(ErrorCode::SchemaViolation, "", "diagram must be a JSON array of links");
    WorkflowDiagram d;
    d.links.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        const auto path = "/" + std::to_string(i);
        if (!e.is_array() || e.size() != 4)
            throw Error(ErrorCode::BadLinkArity, path, "each link must be an array of 4 strings");
        for (std::size_t j = 0; j < 4; ++j)
            if (!e[j].is_string())
                throw Error(ErrorCode::BadLinkArity, path + "/" + std::to_string(j), "link element is not a string");
        Link l{NodeRef::parse(e[0].get<std::string>()), e[1].get<std::string>(),
               NodeRef::parse(e[2].get<std::string>()), e[3].get<std::string>()};
        if (!valid_port_name(l.out_port))
            throw Error(ErrorCode::BadPortName, path + "/1", "invalid port name '" + l.out_port + "'");
        if (!valid_port_name(l.in_port))
            throw Error(ErrorCode::BadPortName, path + "/3", "invalid port name '" + l.in_port + "'");
        d.links.push_back(std::move(l));
    }
    check_diagram_invariants(d.links);
    return d;
}

inline WorkflowDiagram parse_diagram(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::MalformedJson, "", "diagram text is not valid JSON");
    return diagram_from_json(doc);
}

inline json diagram_to_json(const WorkflowDiagram& d) {
    json out = json::array();
    for (const auto& l : d.links) out.push_back({l.out_node.str(), l.out_port, l.in_node.str(), l.in_port});
    return out;
}

/// Compact, deterministic serialization: `[["A_0","OUT","B_0","in"]]`.
inline std::string emit_diagram(const WorkflowDiagram& d) { return diagram_to_json(d).dump(); }

/// Problems that make a parsed diagram unusable as a workflow (empty or a
/// link feeding a node into itself). Empty result means structurally valid.
inline std::vector<std::string> structural_problems(const WorkflowDiagram& d) {
    std::vector<std::string> out;
    if (d.empty()) out.emplace_back("diagram has no links");
    for (const auto& l : d.links)
        if (l.out_node == l.in_node) out.push_back("self-loop on " + l.out_node.str());
    return out;
}

// ---------------------------------------------------------------------------
// ComfyUI export representation.
// ---------------------------------------------------------------------------

enum class NodeMode { Normal, Mute, Bypass };

inline int mode_code(NodeMode m) {
    switch (m) {
        case NodeMode::Normal: return 0;
        case NodeMode::Mute: return 2;
        case NodeMode::Bypass: return 4;
    }
    return 0;
}

struct InputSlot {
    std::string port;
    std::string value_type;
    std::optional<std::int64_t> link;
    json extra = json::object();  // label, widget, shape, ...

    bool is_widget() const { return extra.contains("widget"); }

    friend bool operator==(const InputSlot&, const InputSlot&) = default;
};

struct OutputSlot {
    std::string port;
    std::string value_type;
    std::vector<std::int64_t> links;
    json extra = json::object();

    friend bool operator==(const OutputSlot&, const OutputSlot&) = default;
};

struct GraphNode {
    std::int64_t id = 0;
    std::string type_name;
    NodeMode mode = NodeMode::Normal;
    std::vector<InputSlot> inputs;
    std::vector<OutputSlot> outputs;
    json widget_values;            // null when absent
    json extra = json::object();   // pos, size, properties, ...

    std::optional<std::size_t> input_index(std::string_view port) const {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (inputs[i].port == port) return i;
        return std::nullopt;
    }
    std::optional<std::size_t> output_index(std::string_view port) const {
        for (std::size_t i = 0; i < outputs.size(); ++i)
            if (outputs[i].port == port) return i;
        return std::nullopt;
    }

    friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphLink {
    std::int64_t id = 0;
    std::int64_t src_node = 0;
    std::size_t src_slot = 0;
    std::int64_t dst_node = 0;
    std::size_t dst_slot = 0;
    std::string value_type;

    friend bool operator==(const GraphLink&, const GraphLink&) = default;
};

struct GraphWorkflow {
    std::vector<GraphNode> nodes;
    std::vector<GraphLink> links;
    json extra = json::object();  // every top-level key other than nodes/links

    const GraphNode* find_node(std::int64_t id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
    GraphNode* find_node(std::int64_t id) {
        for (auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
    const GraphLink* find_link(std::int64_t id) const {
        for (const auto& l : links)
            if (l.id == id) return &l;
        return nullptr;
    }

    friend bool operator==(const GraphWorkflow&, const GraphWorkflow&) = default;
};

/// A wildcard or empty type carries no information.
inline bool known_type(std::string_view t) { return !t.empty() && t != "*"; }

namespace detail {

inline std::int64_t require_id(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw Error(ErrorCode::SchemaViolation, path, "expected an integer");
    return v.get<std::int64_t>();
}

inline std::string require_string(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw Error(ErrorCode::SchemaViolation, path + "/" + key, "expected a string");
    return it->get<std::string>();
}

inline json extra_of(const json& obj, std::initializer_list<const char*> known) {
    json out = json::object();
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool is_known =
            std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
        if (!is_known) out[it.key()] = it.value();
    }
    return out;
}

}  // namespace detail

/// Checks the referential invariants of a graph: unique ids, in-range slots,
/// and link table entries that agree with the slot references on both ends.
inline void check_graph_invariants(const GraphWorkflow& g) {
    std::unordered_map<std::int64_t, std::size_t> node_at;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        const auto path = "/nodes/" + std::to_string(i);
        if (n.id <= 0) throw Error(ErrorCode::SchemaViolation, path + "/id", "node id must be positive");
        if (!node_at.emplace(n.id, i).second)
            throw Error(ErrorCode::SchemaViolation, path + "/id", "duplicate node id " + std::to_string(n.id));
        std::set<std::string> in_names, out_names;
        for (std::size_t s = 0; s < n.inputs.size(); ++s)
            if (!n.inputs[s].port.empty() && !in_names.insert(n.inputs[s].port).second)
                throw Error(ErrorCode::SchemaViolation, path + "/inputs/" + std::to_string(s),
                            "duplicate input name '" + n.inputs[s].port + "'");
        for (std::size_t s = 0; s < n.outputs.size(); ++s)
            if (!n.outputs[s].port.empty() && !out_names.insert(n.outputs[s].port).second)
                throw Error(ErrorCode::SchemaViolation, path + "/outputs/" + std::to_string(s),
                            "duplicate output name '" + n.outputs[s].port + "'");
    }

    std::unordered_map<std::int64_t, std::size_t> link_at;
    for (std::size_t i = 0; i < g.links.size(); ++i) {
        const auto& l = g.links[i];
        const auto path = "/links/" + std::to_string(i);
        if (l.id <= 0) throw Error(ErrorCode::SchemaViolation, path, "link id must be positive");
        if (!link_at.emplace(l.id, i).second)
            throw Error(ErrorCode::SchemaViolation, path, "duplicate link id " + std::to_string(l.id));
        auto src = node_at.find(l.src_node);
        auto dst = node_at.find(l.dst_node);
        if (src == node_at.end())
            throw Error(ErrorCode::SchemaViolation, path, "source node " + std::to_string(l.src_node) + " does not exist");
        if (dst == node_at.end())
            throw Error(ErrorCode::SchemaViolation, path,
                        "destination node " + std::to_string(l.dst_node) + " does not exist");
        const auto& sn = g.nodes[src->second];
        const auto& dn = g.nodes[dst->second];
        if (l.src_slot >= sn.outputs.size())
            throw Error(ErrorCode::SchemaViolation, path, "source slot out of range");
        if (l.dst_slot >= dn.inputs.size())
            throw Error(ErrorCode::SchemaViolation, path, "destination slot out of range");
        const auto& out_type = sn.outputs[l.src_slot].value_type;
        if (known_type(out_type) && known_type(l.value_type) && out_type != l.value_type)
            throw Error(ErrorCode::SchemaViolation, path,
                        "link type '" + l.value_type + "' differs from source output type '" + out_type + "'");
        const auto& outs = sn.outputs[l.src_slot].links;
        if (std::find(outs.begin(), outs.end(), l.id) == outs.end())
            throw Error(ErrorCode::SchemaViolation, path, "source output does not list this link");
        if (dn.inputs[l.dst_slot].link != l.id)
            throw Error(ErrorCode::SchemaViolation, path, "destination input does not reference this link");
    }

    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& n = g.nodes[i];
        const auto path = "/nodes/" + std::to_string(i);
        for (std::size_t s = 0; s < n.inputs.size(); ++s) {
            if (!n.inputs[s].link) continue;
            auto it = link_at.find(*n.inputs[s].link);
            if (it == link_at.end())
                throw Error(ErrorCode::SchemaViolation, path + "/inputs/" + std::to_string(s) + "/link",
                            "references missing link " + std::to_string(*n.inputs[s].link));
            const auto& l = g.links[it->second];
            if (l.dst_node != n.id || l.dst_slot != s)
                throw Error(ErrorCode::SchemaViolation, path + "/inputs/" + std::to_string(s) + "/link",
                            "link " + std::to_string(l.id) + " targets a different slot");
        }
        for (std::size_t s = 0; s < n.outputs.size(); ++s) {
            for (std::size_t k = 0; k < n.outputs[s].links.size(); ++k) {
                const auto id = n.outputs[s].links[k];
                const auto lpath = path + "/outputs/" + std::to_string(s) + "/links/" + std::to_string(k);
                auto it = link_at.find(id);
                if (it == link_at.end())
                    throw Error(ErrorCode::SchemaViolation, lpath, "references missing link " + std::to_string(id));
                const auto& l = g.links[it->second];
                if (l.src_node != n.id || l.src_slot != s)
                    throw Error(ErrorCode::SchemaViolation, lpath,
                                "link " + std::to_string(id) + " originates from a different slot");
            }
        }
    }
}

inline GraphWorkflow graph_from_json(const json& doc) {
    using detail::require_id;
    using detail::require_string;
    if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "", "workflow must be a JSON object");
    if (!doc.contains("nodes") || !doc["nodes"].is_array())
        throw Error(ErrorCode::SchemaViolation, "/nodes", "missing or non-array 'nodes'");
    if (!doc.contains("links") || !doc["links"].is_array())
        throw Error(ErrorCode::SchemaViolation, "/links", "missing or non-array 'links'");

    GraphWorkflow g;
    g.extra = detail::extra_of(doc, {"nodes", "links"});

    const auto& nodes = doc["nodes"];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& jn = nodes[i];
        const auto path = "/nodes/" + std::to_string(i);
        if (!jn.is_object()) throw Error(ErrorCode::SchemaViolation, path, "node must be an object");
        GraphNode n;
        n.id = require_id(jn.value("id", json()), path + "/id");
        n.type_name = require_string(jn, "type", path);
        if (n.type_name.empty()) throw Error(ErrorCode::SchemaViolation, path + "/type", "empty node type");
        const auto mode = jn.value("mode", json(0));
        if (!mode.is_number_integer()) throw Error(ErrorCode::SchemaViolation, path + "/mode", "expected an integer");
        switch (mode.get<int>()) {
            case 0: n.mode = NodeMode::Normal; break;
            case 2: n.mode = NodeMode::Mute; break;
            case 4: n.mode = NodeMode::Bypass; break;
            default: throw Error(ErrorCode::SchemaViolation, path + "/mode", "unsupported mode " + mode.dump());
        }
        if (auto it = jn.find("inputs"); it != jn.end() && !it->is_null()) {
            if (!it->is_array()) throw Error(ErrorCode::SchemaViolation, path + "/inputs", "expected an array");
            for (std::size_t s = 0; s < it->size(); ++s) {
                const auto& js = (*it)[s];
                const auto spath = path + "/inputs/" + std::to_string(s);
                if (!js.is_object()) throw Error(ErrorCode::SchemaViolation, spath, "slot must be an object");
                InputSlot slot;
                slot.port = require_string(js, "name", spath);
                slot.value_type = require_string(js, "type", spath);
                if (auto l = js.find("link"); l != js.end() && !l->is_null()) slot.link = require_id(*l, spath + "/link");
                slot.extra = detail::extra_of(js, {"name", "type", "link"});
                n.inputs.push_back(std::move(slot));
            }
        }
        if (auto it = jn.find("outputs"); it != jn.end() && !it->is_null()) {
            if (!it->is_array()) throw Error(ErrorCode::SchemaViolation, path + "/outputs", "expected an array");
            for (std::size_t s = 0; s < it->size(); ++s) {
                const auto& js = (*it)[s];
                const auto spath = path + "/outputs/" + std::to_string(s);
                if (!js.is_object()) throw Error(ErrorCode::SchemaViolation, spath, "slot must be an object");
                OutputSlot slot;
                slot.port = require_string(js, "name", spath);
                slot.value_type = require_string(js, "type", spath);
                if (auto l = js.find("links"); l != js.end() && !l->is_null()) {
                    if (!l->is_array()) throw Error(ErrorCode::SchemaViolation, spath + "/links", "expected an array");
                    for (std::size_t k = 0; k < l->size(); ++k)
                        slot.links.push_back(require_id((*l)[k], spath + "/links/" + std::to_string(k)));
                }
                slot.extra = detail::extra_of(js, {"name", "type", "links"});
                n.outputs.push_back(std::move(slot));
            }
        }
        if (auto it = jn.find("widgets_values"); it != jn.end()) n.widget_values = *it;
        n.extra = detail::extra_of(jn, {"id", "type", "mode", "inputs", "outputs", "widgets_values"});
        g.nodes.push_back(std::move(n));
    }

    const auto& links = doc["links"];
    for (std::size_t i = 0; i < links.size(); ++i) {
        const auto& jl = links[i];
        const auto path = "/links/" + std::to_string(i);
        if (!jl.is_array() || jl.size() != 6)
            throw Error(ErrorCode::SchemaViolation, path, "link entry must be a 6-element array");
        GraphLink l;
        l.id = require_id(jl[0], path + "/0");
        l.src_node = require_id(jl[1], path + "/1");
        const auto src_slot = require_id(jl[2], path + "/2");
        l.dst_node = require_id(jl[3], path + "/3");
        const auto dst_slot = require_id(jl[4], path + "/4");
        if (src_slot < 0 || dst_slot < 0) throw Error(ErrorCode::SchemaViolation, path, "negative slot index");
        l.src_slot = static_cast<std::size_t>(src_slot);
        l.dst_slot = static_cast<std::size_t>(dst_slot);
        if (!jl[5].is_string()) throw Error(ErrorCode::SchemaViolation, path + "/5", "link type must be a string");
        l.value_type = jl[5].get<std::string>();
        g.links.push_back(std::move(l));
    }

    check_graph_invariants(g);
    return g;
}

inline GraphWorkflow parse_graph_workflow(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::MalformedJson, "", "workflow text is not valid JSON");
    return graph_from_json(doc);
}

inline json graph_to_json(const GraphWorkflow& g) {
    json doc = g.extra;
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        json jn = n.extra;
        jn["id"] = n.id;
        jn["type"] = n.type_name;
        jn["mode"] = mode_code(n.mode);
        json inputs = json::array();
        for (const auto& s : n.inputs) {
            json js = s.extra;
            js["name"] = s.port;
            js["type"] = s.value_type;
            js["link"] = s.link ? json(*s.link) : json();
            inputs.push_back(std::move(js));
        }
        json outputs = json::array();
        for (const auto& s : n.outputs) {
            json js = s.extra;
            js["name"] = s.port;
            js["type"] = s.value_type;
            js["links"] = s.links;
            outputs.push_back(std::move(js));
        }
        jn["inputs"] = std::move(inputs);
        jn["outputs"] = std::move(outputs);
        if (!n.widget_values.is_null()) jn["widgets_values"] = n.widget_values;
        nodes.push_back(std::move(jn));
    }
    json links = json::array();
    for (const auto& l : g.links)
        links.push_back({l.id, l.src_node, l.src_slot, l.dst_node, l.dst_slot, l.value_type});
    doc["nodes"] = std::move(nodes);
    doc["links"] = std::move(links);
    return doc;
}

/// Deterministic: object keys sorted, arrays in stored order, 2-space indent.
inline std::string emit_graph_workflow(const GraphWorkflow& g) { return graph_to_json(g).dump(2); }

}  // namespace comfyflow
