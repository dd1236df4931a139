#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "comfyflow/detail/parallel.hpp"
#include "comfyflow/detail/uuid.hpp"
#include "comfyflow/ir.hpp"
#include "comfyflow/nodebase.hpp"
#include "comfyflow/reformat.hpp"

namespace comfyflow {

// ---------------------------------------------------------------------------
// Diagram -> graph.
// ---------------------------------------------------------------------------

/// One node per distinct NodeRef and one link per diagram link, in diagram
/// order. Node ids follow the first appearance of each type name and then the
/// ordinal, so to_diagram(lift(d)) reproduces `d` exactly. Inputs with a spec
/// default become widget inputs and the defaults fill widget_values.
inline GraphWorkflow lift(const WorkflowDiagram& d, const NodeBase& base) {
    if (d.empty()) throw Error(ErrorCode::EmptyDiagram, "", "a workflow needs at least one link");
    check_diagram_invariants(d.links);

    std::vector<std::string> type_order;
    std::map<std::string, std::set<std::size_t>> ordinals;
    for (const auto& r : d.node_refs()) {
        if (!ordinals.contains(r.type_name)) type_order.push_back(r.type_name);
        ordinals[r.type_name].insert(r.ordinal);
    }

    GraphWorkflow g;
    std::map<NodeRef, std::int64_t> ids;
    for (const auto& type : type_order) {
        const auto* spec = base.find(type);
        if (!spec) throw Error(ErrorCode::NodeUnknown, type, "not in the node base");
        for (auto ordinal : ordinals[type]) {
            GraphNode n;
            n.id = static_cast<std::int64_t>(g.nodes.size()) + 1;
            n.type_name = type;
            json widgets = json::array();
            for (std::size_t i = 0; i < spec->input_names.size(); ++i) {
                const auto& port = spec->input_names[i];
                const auto type_i = spec->input_type(i);
                InputSlot slot{port, known_type(type_i) ? type_i : "*", std::nullopt, json::object()};
                if (auto def = spec->input_defaults.find(port); def != spec->input_defaults.end()) {
                    slot.extra["widget"] = {{"name", port}};
                    widgets.push_back(def->second);
                }
                n.inputs.push_back(std::move(slot));
            }
            for (std::size_t i = 0; i < spec->output_names.size(); ++i) {
                const auto type_o = spec->output_type(i);
                n.outputs.push_back({spec->output_names[i], known_type(type_o) ? type_o : "*", {}, json::object()});
            }
            if (!widgets.empty()) n.widget_values = std::move(widgets);
            ids[NodeRef{type, ordinal}] = n.id;
            g.nodes.push_back(std::move(n));
        }
    }

    for (const auto& l : d.links) {
        auto& src = *g.find_node(ids.at(l.out_node));
        auto& dst = *g.find_node(ids.at(l.in_node));
        const auto so = src.output_index(l.out_port);
        if (!so) throw Error(ErrorCode::PortUnknown, l.out_node.str() + "/" + l.out_port, "no such output on " + src.type_name);
        const auto di = dst.input_index(l.in_port);
        if (!di) throw Error(ErrorCode::PortUnknown, l.in_node.str() + "/" + l.in_port, "no such input on " + dst.type_name);
        const auto id = static_cast<std::int64_t>(g.links.size()) + 1;
        g.links.push_back({id, src.id, *so, dst.id, *di, src.outputs[*so].value_type});
        src.outputs[*so].links.push_back(id);
        dst.inputs[*di].link = id;
    }
    g.extra = {{"last_node_id", static_cast<std::int64_t>(g.nodes.size())},
               {"last_link_id", static_cast<std::int64_t>(g.links.size())},
               {"version", 0.4}};
    return g;
}

// ---------------------------------------------------------------------------
// Static executability.
// ---------------------------------------------------------------------------

enum class IssueCode { NodeUnknown, MissingRequiredInput, TypeMismatch, CycleDetected, DuplicateInputSlot, PortUnknown };

inline std::string_view to_string(IssueCode c) {
    switch (c) {
        case IssueCode::NodeUnknown: return "NodeUnknown";
        case IssueCode::MissingRequiredInput: return "MissingRequiredInput";
        case IssueCode::TypeMismatch: return "TypeMismatch";
        case IssueCode::CycleDetected: return "CycleDetected";
        case IssueCode::DuplicateInputSlot: return "DuplicateInputSlot";
        case IssueCode::PortUnknown: return "PortUnknown";
    }
    return "";
}

inline std::optional<IssueCode> issue_code_from_string(std::string_view s) {
    for (auto c : {IssueCode::NodeUnknown, IssueCode::MissingRequiredInput, IssueCode::TypeMismatch,
                   IssueCode::CycleDetected, IssueCode::DuplicateInputSlot, IssueCode::PortUnknown})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

struct ValidationIssue {
    IssueCode code;
    std::string subject;
    std::string message;

    friend auto operator<=>(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
    bool valid = true;
    std::vector<ValidationIssue> issues;

    friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

inline json report_to_json(const ValidationReport& r) {
    json issues = json::array();
    for (const auto& i : r.issues) issues.push_back({{"code", to_string(i.code)}, {"subject", i.subject}, {"message", i.message}});
    return {{"valid", r.valid}, {"issues", issues}};
}

inline ValidationReport validation_report_from_json(const json& j) {
    ValidationReport r;
    r.valid = j.at("valid").get<bool>();
    for (const auto& i : j.at("issues")) {
        const auto code = issue_code_from_string(i.at("code").get<std::string>());
        if (!code) throw Error(ErrorCode::SchemaViolation, "/issues", "unknown issue code");
        r.issues.push_back({*code, i.at("subject").get<std::string>(), i.at("message").get<std::string>()});
    }
    return r;
}

struct ValidationOptions {
    // Also flag links whose endpoint types are not both known.
    bool strict_types = false;
};

namespace detail {

/// Nodes of every directed cycle, one group per strongly connected component.
inline std::vector<std::vector<std::int64_t>> cyclic_components(const GraphWorkflow& g) {
    std::map<std::int64_t, std::vector<std::int64_t>> adj;
    std::set<std::int64_t> self_loops;
    for (const auto& n : g.nodes) adj[n.id];
    for (const auto& l : g.links) {
        adj[l.src_node].push_back(l.dst_node);
        if (l.src_node == l.dst_node) self_loops.insert(l.src_node);
    }
    // Tarjan's algorithm.
    std::map<std::int64_t, int> index, low;
    std::set<std::int64_t> on_stack;
    std::vector<std::int64_t> stack;
    std::vector<std::vector<std::int64_t>> out;
    int counter = 0;
    std::function<void(std::int64_t)> visit = [&](std::int64_t v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack.insert(v);
        for (auto w : adj[v]) {
            if (!index.contains(w)) {
                visit(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack.contains(w)) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            std::vector<std::int64_t> comp;
            std::int64_t w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack.erase(w);
                comp.push_back(w);
            } while (w != v);
            if (comp.size() > 1 || self_loops.contains(v)) {
                std::sort(comp.begin(), comp.end());
                out.push_back(std::move(comp));
            }
        }
    };
    for (const auto& [v, _] : adj)
        if (!index.contains(v)) visit(v);
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? std::string(sep) : "") + parts[i];
    return s;
}

}  // namespace detail

/// Deterministic report; issues sorted by code, then subject, then message.
/// Subjects are node refs (`KSampler_0`), `ref/port`, or a link rendering.
inline ValidationReport validate_executable(const GraphWorkflow& g, const NodeBase& base,
                                            const ValidationOptions& opts = {}) {
    ValidationReport r;
    const auto refs = assign_node_refs(g);
    auto ref = [&](std::int64_t id) { return refs.at(id).str(); };
    auto add = [&](IssueCode c, std::string subject, std::string message) {
        r.issues.push_back({c, std::move(subject), std::move(message)});
    };

    for (const auto& n : g.nodes) {
        const auto* spec = base.find(n.type_name);
        if (!spec) {
            add(IssueCode::NodeUnknown, ref(n.id), "'" + n.type_name + "' is not in the node base");
            continue;
        }
        for (const auto& in : n.inputs)
            if (!spec->input_index(in.port)) add(IssueCode::PortUnknown, ref(n.id) + "/" + in.port, "no such input on " + n.type_name);
        for (const auto& out : n.outputs)
            if (!spec->output_index(out.port))
                add(IssueCode::PortUnknown, ref(n.id) + "/" + out.port, "no such output on " + n.type_name);
        if (spec->required_inputs) {
            for (const auto& port : *spec->required_inputs) {
                const auto i = n.input_index(port);
                const bool linked = i && n.inputs[*i].link;
                if (!linked && !spec->input_defaults.contains(port))
                    add(IssueCode::MissingRequiredInput, ref(n.id) + "/" + port, "required input has no link and no default");
            }
        }
    }

    std::map<std::pair<std::int64_t, std::size_t>, int> fed;
    for (const auto& l : g.links) {
        const auto* src = g.find_node(l.src_node);
        const auto* dst = g.find_node(l.dst_node);
        const auto& out_port = src->outputs.at(l.src_slot).port;
        const auto& in_port = dst->inputs.at(l.dst_slot).port;
        const auto rendering = ref(src->id) + "/" + out_port + " -> " + ref(dst->id) + "/" + in_port;
        if (++fed[{l.dst_node, l.dst_slot}] == 2)
            add(IssueCode::DuplicateInputSlot, ref(dst->id) + "/" + in_port, "input has more than one producer");

        // Declared spec types win over whatever the graph file says.
        std::string out_type = src->outputs[l.src_slot].value_type;
        std::string in_type = dst->inputs[l.dst_slot].value_type;
        if (const auto* s = base.find(src->type_name))
            if (auto i = s->output_index(out_port); i && known_type(s->output_type(*i))) out_type = s->output_type(*i);
        if (const auto* s = base.find(dst->type_name))
            if (auto i = s->input_index(in_port); i && known_type(s->input_type(*i))) in_type = s->input_type(*i);
        if (known_type(out_type) && known_type(in_type)) {
            if (out_type != in_type) add(IssueCode::TypeMismatch, rendering, out_type + " into " + in_type);
        } else if (opts.strict_types) {
            add(IssueCode::TypeMismatch, rendering, "endpoint type unknown");
        }
    }

    for (const auto& comp : detail::cyclic_components(g)) {
        std::vector<std::string> names;
        for (auto id : comp) names.push_back(ref(id));
        std::sort(names.begin(), names.end());
        add(IssueCode::CycleDetected, detail::join(names, ","), "nodes form a cycle");
    }

    std::sort(r.issues.begin(), r.issues.end());
    r.issues.erase(std::unique(r.issues.begin(), r.issues.end()), r.issues.end());
    r.valid = r.issues.empty();
    return r;
}

// ---------------------------------------------------------------------------
// Server prompt format.
// ---------------------------------------------------------------------------

/// `{"<id>": {"class_type": T, "inputs": {port: literal | ["<src id>", slot]}}}`.
/// Widget inputs take widget_values positionally; unlinked plain inputs are
/// left out. Throws InvalidWorkflow on inconsistent or cyclic graphs.
inline json to_api_format(const GraphWorkflow& g) {
    try {
        check_graph_invariants(g);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidWorkflow, e.subject(), e.what());
    }
    if (g.nodes.empty()) throw Error(ErrorCode::InvalidWorkflow, "/nodes", "workflow has no nodes");
    if (const auto cycles = detail::cyclic_components(g); !cycles.empty())
        throw Error(ErrorCode::InvalidWorkflow, std::to_string(cycles.front().front()), "workflow has a cycle");

    json out = json::object();
    for (const auto& n : g.nodes) {
        json inputs = json::object();
        std::size_t widget = 0;
        for (const auto& in : n.inputs) {
            if (in.link) {
                const auto* l = g.find_link(*in.link);
                inputs[in.port] = json::array({std::to_string(l->src_node), l->src_slot});
            } else if (in.is_widget() && n.widget_values.is_array() && widget < n.widget_values.size()) {
                inputs[in.port] = n.widget_values[widget];
            }
            if (in.is_widget()) ++widget;
        }
        out[std::to_string(n.id)] = {{"class_type", n.type_name}, {"inputs", inputs}};
    }
    return out;
}

inline std::string emit_api_format(const GraphWorkflow& g) { return to_api_format(g).dump(2); }

// ---------------------------------------------------------------------------
// Submission.
// ---------------------------------------------------------------------------

struct HttpReply {
    int status = 0;
    std::string body;
};

/// Minimal server transport. Throws Error(Transport) when the server cannot be
/// reached or times out. Must be safe to call concurrently.
class ServerClient {
public:
    virtual ~ServerClient() = default;
    virtual HttpReply post_json(const std::string& path, const std::string& body) = 0;
};

struct Accepted {
    std::string prompt_id;
    friend bool operator==(const Accepted&, const Accepted&) = default;
};
struct Rejected {
    std::string server_message;
    friend bool operator==(const Rejected&, const Rejected&) = default;
};
using SubmitResult = std::variant<Accepted, Rejected>;

/// Posts `{prompt, client_id}` to /prompt, retrying once on a transport error.
inline SubmitResult submit(const GraphWorkflow& g, ServerClient& server, std::string client_id = detail::uuid4()) {
    const json body = {{"prompt", to_api_format(g)}, {"client_id", std::move(client_id)}};
    const auto text = body.dump();
    HttpReply reply;
    try {
        reply = server.post_json("/prompt", text);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Transport) throw;
        reply = server.post_json("/prompt", text);
    }
    if (reply.status >= 200 && reply.status < 300) {
        auto parsed = json::parse(reply.body, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("prompt_id")) {
            const auto& id = parsed["prompt_id"];
            return Accepted{id.is_string() ? id.get<std::string>() : id.dump()};
        }
    }
    return Rejected{reply.body};
}

struct BatchSubmitItem {
    std::optional<SubmitResult> result;
    std::string error;  // set when the submission threw
};

inline std::vector<BatchSubmitItem> submit_batch(const std::vector<GraphWorkflow>& graphs, ServerClient& server,
                                                 std::size_t parallelism = 4) {
    return detail::parallel_map(graphs.size(), parallelism, [&](std::size_t i) {
        BatchSubmitItem item;
        try {
            item.result = submit(graphs[i], server);
        } catch (const std::exception& e) {
            item.error = e.what();
        }
        return item;
    });
}

}  // namespace comfyflow
