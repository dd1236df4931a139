#pragma once

#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/detail/jsontext.hpp"
#include "comfyflow/ir.hpp"
#include "comfyflow/llm.hpp"
#include "comfyflow/nodebase.hpp"
#include "comfyflow/prompts.hpp"

namespace comfyflow {

// ---------------------------------------------------------------------------
// Reward and group-relative advantages.
// ---------------------------------------------------------------------------

/// Type names of `d` missing from `valid_names`, sorted.
inline std::vector<std::string> fictitious_names(const WorkflowDiagram& d, const std::set<std::string>& valid_names) {
    std::vector<std::string> out;
    for (const auto& t : d.type_names())
        if (!valid_names.contains(t)) out.push_back(t);
    return out;
}

/// 1 when every node type of `d` is a valid name, else 0. An empty diagram
/// scores 1; structural checks reject it before scoring.
inline double reward(const WorkflowDiagram& d, const std::set<std::string>& valid_names) {
    for (const auto& l : d.links)
        if (!valid_names.contains(l.out_node.type_name) || !valid_names.contains(l.in_node.type_name)) return 0.0;
    return 1.0;
}

/// (r_i - mean) / std with the population std. A constant group maps to zeros.
inline std::vector<double> advantages(const std::vector<double>& rewards) {
    if (rewards.empty()) throw Error(ErrorCode::InvalidArgument, "rewards", "group needs at least one reward");
    for (std::size_t i = 0; i < rewards.size(); ++i)
        if (rewards[i] != 0.0 && rewards[i] != 1.0)
            throw Error(ErrorCode::InvalidArgument, "rewards/" + std::to_string(i), "reward must be 0 or 1");
    const auto g = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / g);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd == 0.0) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

// ---------------------------------------------------------------------------
// Prompting and parsing.
// ---------------------------------------------------------------------------

struct FewShotExample {
    std::string description;
    WorkflowDiagram diagram;

    friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

struct GenerationRequest {
    std::string description;
    std::vector<FewShotExample> few_shot_examples;
    std::size_t max_attempts = 3;
};

/// JSONL of {"description": ..., "diagram": [...]}; blank lines are skipped.
inline std::vector<FewShotExample> load_fewshot(std::string_view bytes) {
    std::vector<FewShotExample> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        const auto end = std::min(bytes.find('\n', pos), bytes.size());
        const auto line = detail::trim(bytes.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no);
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("description") || !j["description"].is_string() ||
            !j.contains("diagram"))
            throw Error(ErrorCode::MalformedRecord, where, "expected {\"description\": ..., \"diagram\": [...]}");
        try {
            out.push_back({j["description"].get<std::string>(), diagram_from_json(j["diagram"])});
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedRecord, where, e.what());
        }
    }
    return out;
}

/// Compact JSON array of {"description", "diagram"} objects; empty text when
/// there are no examples.
inline std::string format_examples(const std::vector<FewShotExample>& examples) {
    if (examples.empty()) return {};
    json arr = json::array();
    for (const auto& e : examples) arr.push_back({{"description", e.description}, {"diagram", diagram_to_json(e.diagram)}});
    return arr.dump();
}

inline std::string build_fewshot_prompt(const GenerationRequest& req, const PromptRegistry* prompts = nullptr) {
    const auto& t = prompts ? prompts->get(TemplateId::FewShot) : builtin(TemplateId::FewShot);
    return render(t, {{"Examples", format_examples(req.few_shot_examples)}, {"Description", req.description}});
}

/// Accepts a bare link array or {"diagram": [...]}, fenced or not.
inline WorkflowDiagram parse_generation(std::string_view text) {
    auto j = detail::extract_json(text);
    if (!j) throw Error(ErrorCode::NoJsonFound, "", "reply contains no JSON");
    if (j->is_object()) {
        if (!j->contains("diagram")) throw Error(ErrorCode::SchemaViolation, "/diagram", "object lacks a diagram key");
        return diagram_from_json((*j)["diagram"]);
    }
    return diagram_from_json(*j);
}

// ---------------------------------------------------------------------------
// Backends.
// ---------------------------------------------------------------------------

/// Produces the reply text for a generation prompt. The request description is
/// passed alongside so retrieval backends need not recover it from the prompt.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string complete(std::string_view prompt, std::string_view description) = 0;
};

/// Forwards the prompt to an LLM.
class LlmBackend final : public GenerationBackend {
public:
    explicit LlmBackend(LlmClient& llm) : llm_(llm) {}
    std::string complete(std::string_view prompt, std::string_view) override { return llm_.complete(prompt); }

private:
    LlmClient& llm_;
};

/// Offline baseline: answers with the diagram of the corpus entry whose
/// description is most similar. Ties go to the earlier entry.
class NearestNeighborBackend final : public GenerationBackend {
public:
    NearestNeighborBackend(std::vector<FewShotExample> corpus, const EmbeddingProvider& provider)
        : corpus_(std::move(corpus)), provider_(provider) {
        if (corpus_.empty()) throw Error(ErrorCode::InvalidArgument, "corpus", "nearest-neighbor corpus is empty");
        for (const auto& e : corpus_) embeddings_.push_back(provider_.embed(e.description));
    }

    const FewShotExample& nearest(std::string_view description) const {
        const auto q = provider_.embed(description);
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t i = 0; i < embeddings_.size(); ++i) {
            const double s = similarity(q, embeddings_[i]);
            if (s > best_score) {
                best = i;
                best_score = s;
            }
        }
        return corpus_[best];
    }

    std::string complete(std::string_view, std::string_view description) override {
        return json{{"diagram", diagram_to_json(nearest(description).diagram)}}.dump();
    }

private:
    std::vector<FewShotExample> corpus_;
    const EmbeddingProvider& provider_;
    std::vector<Embedding> embeddings_;
};

// ---------------------------------------------------------------------------
// Self-correcting generation.
// ---------------------------------------------------------------------------

struct GenerationOk {
    WorkflowDiagram diagram;
    std::size_t attempts_used;
};

struct GenerationFailed {
    ErrorCode code;
    std::string message;
    std::size_t attempts_used;
};

using GenerationOutcome = std::variant<GenerationOk, GenerationFailed>;

namespace detail {

inline std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

/// The checks a generated reply must pass. Returns the diagram or throws.
inline WorkflowDiagram accept_generation(std::string_view reply, const std::set<std::string>& valid_names) {
    auto d = parse_generation(reply);
    if (auto problems = structural_problems(d); !problems.empty())
        throw Error(ErrorCode::InvalidWorkflow, "", problems.front());
    if (auto bad = fictitious_names(d, valid_names); !bad.empty()) {
        std::string list;
        for (const auto& n : bad) list += (list.empty() ? "" : ", ") + n;
        throw Error(ErrorCode::NodeUnknown, list, "unknown node types: " + list);
    }
    return d;
}

}  // namespace detail

/// Prompts `backend` up to max_attempts times. After a failed attempt the next
/// prompt is the original one plus "\nPrevious reply:\n<reply>\nError: <msg>".
inline GenerationOutcome generate(const GenerationRequest& req, GenerationBackend& backend, const NodeBase& base,
                                  const PromptRegistry* prompts = nullptr) {
    if (req.description.empty()) throw Error(ErrorCode::InvalidArgument, "description", "description is empty");
    if (req.max_attempts == 0) throw Error(ErrorCode::InvalidArgument, "max_attempts", "must be at least 1");
    const auto names = base.names();
    const auto original = build_fewshot_prompt(req, prompts);
    auto prompt = original;
    GenerationFailed last{ErrorCode::LlmFailure, "", 0};
    for (std::size_t attempt = 1; attempt <= req.max_attempts; ++attempt) {
        last.attempts_used = attempt;
        std::string reply;
        try {
            reply = backend.complete(prompt, req.description);
        } catch (const Error& e) {
            last.code = e.code();
            last.message = e.what();
            continue;
        }
        try {
            return GenerationOk{detail::accept_generation(reply, names), attempt};
        } catch (const Error& e) {
            last.code = e.code();
            last.message = e.what();
            prompt = original + "\nPrevious reply:\n" + reply + "\nError: " + detail::one_line(e.what());
        }
    }
    return last;
}

}  // namespace comfyflow
