#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "comfyflow/detail/jsontext.hpp"
#include "comfyflow/detail/parallel.hpp"
#include "comfyflow/ir.hpp"
#include "comfyflow/llm.hpp"
#include "comfyflow/nodebase.hpp"
#include "comfyflow/prompts.hpp"

namespace comfyflow {

/// Node type names used in `d` that have no exact match in `base`, sorted.
inline std::vector<std::string> detect_incorrect(const WorkflowDiagram& d, const NodeBase& base) {
    std::vector<std::string> out;
    for (const auto& t : d.type_names())
        if (!base.contains(t)) out.push_back(t);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

enum class UnresolvedReason { NotInCandidates, PortMismatch, LlmFailure, ParseFailure };

inline std::string_view to_string(UnresolvedReason r) {
    switch (r) {
        case UnresolvedReason::NotInCandidates: return "NotInCandidates";
        case UnresolvedReason::PortMismatch: return "PortMismatch";
        case UnresolvedReason::LlmFailure: return "LlmFailure";
        case UnresolvedReason::ParseFailure: return "ParseFailure";
    }
    return "";
}

struct Replacement {
    std::string incorrect;
    std::string chosen;
    // old port -> new port, for ports that were remapped.
    std::map<std::string, std::string> remapped_inputs;
    std::map<std::string, std::string> remapped_outputs;

    friend bool operator==(const Replacement&, const Replacement&) = default;
};

struct Unresolved {
    std::string incorrect;
    UnresolvedReason reason;
    std::string message;

    friend bool operator==(const Unresolved&, const Unresolved&) = default;
};

struct RefineOutcome {
    std::vector<Replacement> replacements;
    std::vector<Unresolved> unresolved;
    WorkflowDiagram diagram;
    // Incorrect names whose prompt had its diagram cut down to fit.
    std::vector<std::string> truncated;
};

struct RefineOptions {
    std::size_t k = 5;
    // Extra attempts after a transport failure.
    std::size_t llm_retries = 2;
    std::size_t parallelism = 1;
    // 0 disables the limit. Over the limit, the diagram slot keeps only the
    // links touching the incorrect node.
    std::size_t max_prompt_chars = 0;
    const PromptRegistry* prompts = nullptr;
};

inline json outcome_to_json(const RefineOutcome& o) {
    json reps = json::array();
    for (const auto& r : o.replacements)
        reps.push_back({{"incorrect", r.incorrect},
                        {"chosen", r.chosen},
                        {"remapped_inputs", r.remapped_inputs},
                        {"remapped_outputs", r.remapped_outputs}});
    json unres = json::array();
    for (const auto& u : o.unresolved)
        unres.push_back({{"incorrect", u.incorrect}, {"reason", to_string(u.reason)}, {"message", u.message}});
    return {{"replacements", reps}, {"unresolved", unres}, {"truncated", o.truncated},
            {"diagram", diagram_to_json(o.diagram)}};
}

namespace detail {

inline std::string quoted_list(const std::vector<std::string>& items) {
    std::string s = "[";
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + json(items[i]).dump();
    return s + "]";
}

/// Candidate specs in the layout `[{"node_name": "X", "input_names": [...], "output_names": [...]}, ...]`.
inline std::string candidate_list(const std::vector<NodeSpec>& specs) {
    std::string s = "[";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& c = specs[i];
        s += (i ? ", " : "");
        s += "{\"node_name\": " + json(c.node_name).dump() + ", \"input_names\": " + quoted_list(c.input_names) +
             ", \"output_names\": " + quoted_list(c.output_names) + "}";
    }
    return s + "]";
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Picks a port of `names` for `port`: exact, else the unique case-insensitive
/// match, else the unique port whose declared type equals `type`.
inline std::optional<std::string> match_port(const std::string& port, const std::string& type,
                                             const std::vector<std::string>& names,
                                             const std::optional<std::vector<std::string>>& types) {
    if (std::find(names.begin(), names.end(), port) != names.end()) return port;
    std::vector<std::string> ci;
    for (const auto& n : names)
        if (lower(n) == lower(port)) ci.push_back(n);
    if (ci.size() == 1) return ci.front();
    if (ci.size() > 1 || !types || !known_type(type)) return std::nullopt;
    std::vector<std::string> typed;
    for (std::size_t i = 0; i < names.size(); ++i)
        if ((*types)[i] == type) typed.push_back(names[i]);
    if (typed.size() == 1) return typed.front();
    return std::nullopt;
}

/// Declared type of the far end of a link, when the base knows it.
inline std::string far_output_type(const NodeBase& base, const Link& l) {
    const auto* s = base.find(l.out_node.type_name);
    if (!s) return {};
    const auto i = s->output_index(l.out_port);
    return i ? s->output_type(*i) : std::string();
}
inline std::string far_input_type(const NodeBase& base, const Link& l) {
    const auto* s = base.find(l.in_node.type_name);
    if (!s) return {};
    const auto i = s->input_index(l.in_port);
    return i ? s->input_type(*i) : std::string();
}

struct Selection {
    std::string incorrect;
    std::optional<std::string> chosen;
    std::optional<Unresolved> failure;
    bool truncated = false;
};

inline Selection select_replacement(const WorkflowDiagram& d, const std::string& desc, const std::string& incorrect,
                                    const NodeBase& base, const EmbeddingProvider& provider, LlmClient& llm,
                                    const RefineOptions& opts) {
    Selection sel{incorrect, std::nullopt, std::nullopt, false};
    const auto hits = base.top_k(incorrect, opts.k, provider);
    std::vector<NodeSpec> candidates;
    for (const auto& h : hits) candidates.push_back(*base.lookup(h.node_name));

    const auto& tmpl = opts.prompts ? opts.prompts->get(TemplateId::RefineSelect) : builtin(TemplateId::RefineSelect);
    auto build = [&](const WorkflowDiagram& shown) {
        return render(tmpl, {{"Description", desc},
                             {"Diagram", emit_diagram(shown)},
                             {"Name", incorrect},
                             {"Nodes", candidate_list(candidates)}});
    };
    auto prompt = build(d);
    if (opts.max_prompt_chars && prompt.size() > opts.max_prompt_chars) {
        WorkflowDiagram local;
        for (const auto& l : d.links)
            if (l.out_node.type_name == incorrect || l.in_node.type_name == incorrect) local.links.push_back(l);
        prompt = build(local);
        sel.truncated = true;
    }

    std::string reply;
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            reply = llm.complete(prompt);
            break;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Transport && attempt < opts.llm_retries) continue;
            sel.failure = Unresolved{incorrect, UnresolvedReason::LlmFailure, e.what()};
            return sel;
        } catch (const std::exception& e) {
            sel.failure = Unresolved{incorrect, UnresolvedReason::LlmFailure, e.what()};
            return sel;
        }
    }

    const auto parsed = extract_json(reply);
    if (!parsed || !parsed->is_object() || !parsed->contains("candidate_node_name") ||
        !(*parsed)["candidate_node_name"].is_string()) {
        sel.failure = Unresolved{incorrect, UnresolvedReason::ParseFailure,
                                 "reply is not {\"candidate_node_name\": ...}: " + reply.substr(0, 200)};
        return sel;
    }
    const auto chosen = (*parsed)["candidate_node_name"].get<std::string>();
    if (std::none_of(hits.begin(), hits.end(), [&](const ScoredName& h) { return h.node_name == chosen; })) {
        sel.failure = Unresolved{incorrect, UnresolvedReason::NotInCandidates, "'" + chosen + "' was not offered"};
        return sel;
    }
    sel.chosen = chosen;
    return sel;
}

/// Renames `incorrect` to `chosen` in `d` and remaps ports onto the chosen
/// spec. Returns the failure message on a port mismatch, leaving `d` as is.
inline std::optional<std::string> apply_replacement(WorkflowDiagram& d, Replacement& rep, const NodeBase& base) {
    const auto& spec = *base.find(rep.chosen);

    // Keep ordinals dense when the chosen type already occurs in the diagram.
    std::size_t offset = 0;
    for (const auto& r : d.node_refs())
        if (r.type_name == rep.chosen) offset = std::max(offset, r.ordinal + 1);

    auto out = d;
    for (auto& l : out.links) {
        if (l.out_node.type_name == rep.incorrect) {
            const auto type = far_input_type(base, d.links[static_cast<std::size_t>(&l - out.links.data())]);
            const auto port = match_port(l.out_port, type, spec.output_names, spec.output_types);
            if (!port) return "output '" + l.out_port + "' has no counterpart on " + rep.chosen;
            if (auto [it, fresh] = rep.remapped_outputs.try_emplace(l.out_port, *port); !fresh && it->second != *port)
                return "output '" + l.out_port + "' maps ambiguously";
            l.out_node = {rep.chosen, l.out_node.ordinal + offset};
            l.out_port = *port;
        }
        if (l.in_node.type_name == rep.incorrect) {
            const auto type = far_output_type(base, d.links[static_cast<std::size_t>(&l - out.links.data())]);
            const auto port = match_port(l.in_port, type, spec.input_names, spec.input_types);
            if (!port) return "input '" + l.in_port + "' has no counterpart on " + rep.chosen;
            if (auto [it, fresh] = rep.remapped_inputs.try_emplace(l.in_port, *port); !fresh && it->second != *port)
                return "input '" + l.in_port + "' maps ambiguously";
            l.in_node = {rep.chosen, l.in_node.ordinal + offset};
            l.in_port = *port;
        }
    }
    std::erase_if(rep.remapped_inputs, [](const auto& kv) { return kv.first == kv.second; });
    std::erase_if(rep.remapped_outputs, [](const auto& kv) { return kv.first == kv.second; });
    try {
        check_diagram_invariants(out.links);
    } catch (const Error& e) {
        return std::string("remapped ports collide: ") + e.what();
    }
    d = std::move(out);
    return std::nullopt;
}

}  // namespace detail

/// Replaces every node type of `d` missing from `base` with the candidate the
/// LLM selects among the `k` nearest names. LLM calls for different names may
/// run concurrently; rewrites apply in sorted name order.
inline RefineOutcome refine(const WorkflowDiagram& d, const std::string& desc, const NodeBase& base,
                            const EmbeddingProvider& provider, LlmClient& llm, const RefineOptions& opts = {}) {
    if (opts.k == 0) throw Error(ErrorCode::InvalidArgument, "k", "k must be at least 1");
    RefineOutcome outcome;
    outcome.diagram = d;
    const auto incorrect = detect_incorrect(d, base);
    if (incorrect.empty()) return outcome;

    const auto selections = detail::parallel_map(incorrect.size(), opts.parallelism, [&](std::size_t i) {
        return detail::select_replacement(d, desc, incorrect[i], base, provider, llm, opts);
    });

    for (const auto& sel : selections) {
        if (sel.truncated) outcome.truncated.push_back(sel.incorrect);
        if (sel.failure) {
            outcome.unresolved.push_back(*sel.failure);
            continue;
        }
        Replacement rep{sel.incorrect, *sel.chosen, {}, {}};
        if (auto problem = detail::apply_replacement(outcome.diagram, rep, base)) {
            outcome.unresolved.push_back({sel.incorrect, UnresolvedReason::PortMismatch, *problem});
            continue;
        }
        outcome.replacements.push_back(std::move(rep));
    }
    return outcome;
}

}  // namespace comfyflow
