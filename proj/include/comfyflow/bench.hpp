#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/detail/parallel.hpp"
#include "comfyflow/executor.hpp"
#include "comfyflow/genflow.hpp"
#include "comfyflow/llm.hpp"
#include "comfyflow/nodebase.hpp"
#include "comfyflow/prompts.hpp"
#include "comfyflow/reformat.hpp"

namespace comfyflow {

// ---------------------------------------------------------------------------
// Taxonomy.
// ---------------------------------------------------------------------------

enum class Category { TextToImage, ImageEditing, StyleTransfer, ThreeDGeneration, VideoEditingOrGeneration, Other };

enum class Subcategory {
    HdUpscalingRestoration,
    Redrawing,
    Outpainting,
    CharacterGuidance,
    FaceSwap,
    BackgroundChangeRemove
};

inline constexpr std::array<Category, 6> all_categories{Category::TextToImage,      Category::ImageEditing,
                                                        Category::StyleTransfer,    Category::ThreeDGeneration,
                                                        Category::VideoEditingOrGeneration, Category::Other};
inline constexpr std::array<Subcategory, 6> all_subcategories{
    Subcategory::HdUpscalingRestoration, Subcategory::Redrawing, Subcategory::Outpainting,
    Subcategory::CharacterGuidance,      Subcategory::FaceSwap,  Subcategory::BackgroundChangeRemove};

inline std::string_view to_string(Category c) {
    switch (c) {
        case Category::TextToImage: return "TextToImage";
        case Category::ImageEditing: return "ImageEditing";
        case Category::StyleTransfer: return "StyleTransfer";
        case Category::ThreeDGeneration: return "ThreeDGeneration";
        case Category::VideoEditingOrGeneration: return "VideoEditingOrGeneration";
        case Category::Other: return "Other";
    }
    return "";
}

inline std::string_view display_name(Category c) {
    switch (c) {
        case Category::TextToImage: return "Text-to-Image Generation";
        case Category::ImageEditing: return "Image Editing";
        case Category::StyleTransfer: return "Style Transfer";
        case Category::ThreeDGeneration: return "3D Generation";
        case Category::VideoEditingOrGeneration: return "Video Editing or Generation";
        case Category::Other: return "Others";
    }
    return "";
}

inline std::string_view to_string(Subcategory s) {
    switch (s) {
        case Subcategory::HdUpscalingRestoration: return "HdUpscalingRestoration";
        case Subcategory::Redrawing: return "Redrawing";
        case Subcategory::Outpainting: return "Outpainting";
        case Subcategory::CharacterGuidance: return "CharacterGuidance";
        case Subcategory::FaceSwap: return "FaceSwap";
        case Subcategory::BackgroundChangeRemove: return "BackgroundChangeRemove";
    }
    return "";
}

inline std::string_view display_name(Subcategory s) {
    switch (s) {
        case Subcategory::HdUpscalingRestoration: return "HD Upscaling/Image Restoration";
        case Subcategory::Redrawing: return "Redrawing";
        case Subcategory::Outpainting: return "Outpainting";
        case Subcategory::CharacterGuidance: return "Character-Based Guidance";
        case Subcategory::FaceSwap: return "Face Swap";
        case Subcategory::BackgroundChangeRemove: return "Background Change/Remove";
    }
    return "";
}

/// Accepts the identifier or the display name.
inline std::optional<Category> category_from_string(std::string_view s) {
    for (auto c : all_categories)
        if (s == to_string(c) || s == display_name(c)) return c;
    return std::nullopt;
}

inline std::optional<Subcategory> subcategory_from_string(std::string_view s) {
    for (auto c : all_subcategories)
        if (s == to_string(c) || s == display_name(c)) return c;
    return std::nullopt;
}

/// Comma-separated display names, for the DataClassification template.
inline std::string category_list() {
    std::string out;
    for (auto c : all_categories) out += (out.empty() ? "" : ", ") + std::string(display_name(c));
    return out;
}

// ---------------------------------------------------------------------------
// Dataset.
// ---------------------------------------------------------------------------

struct BenchRecord {
    std::string description;
    std::optional<GraphWorkflow> reference_workflow;
    Category category = Category::Other;
    std::optional<Subcategory> subcategory;
};

struct Dataset {
    std::vector<BenchRecord> records;
    // One MalformedRecord error per rejected line, subject "line N".
    std::vector<Error> malformed;
};

inline BenchRecord record_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "", "record must be an object");
    BenchRecord r;
    if (!j.contains("description") || !j["description"].is_string() || j["description"].get<std::string>().empty())
        throw Error(ErrorCode::SchemaViolation, "/description", "missing description");
    r.description = j["description"].get<std::string>();
    if (!j.contains("category") || !j["category"].is_string())
        throw Error(ErrorCode::SchemaViolation, "/category", "missing category");
    const auto cat = category_from_string(j["category"].get<std::string>());
    if (!cat) throw Error(ErrorCode::SchemaViolation, "/category", "unknown category " + j["category"].dump());
    r.category = *cat;
    if (auto it = j.find("subcategory"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw Error(ErrorCode::SchemaViolation, "/subcategory", "must be a string");
        const auto sub = subcategory_from_string(it->get<std::string>());
        if (!sub) throw Error(ErrorCode::SchemaViolation, "/subcategory", "unknown subcategory " + it->dump());
        if (r.category != Category::ImageEditing)
            throw Error(ErrorCode::SchemaViolation, "/subcategory", "only Image Editing records have a subcategory");
        r.subcategory = sub;
    }
    if (auto it = j.find("workflow"); it != j.end() && !it->is_null()) r.reference_workflow = graph_from_json(*it);
    return r;
}

inline json record_to_json(const BenchRecord& r) {
    json j = {{"description", r.description}, {"category", to_string(r.category)}};
    if (r.subcategory) j["subcategory"] = to_string(*r.subcategory);
    if (r.reference_workflow) j["workflow"] = graph_to_json(*r.reference_workflow);
    return j;
}

/// JSONL, one record per line; blank lines are skipped. Bad lines are
/// collected. Throws EmptyDataset when no line yields a record.
inline Dataset load_dataset(std::string_view bytes) {
    Dataset ds;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        const auto end = std::min(bytes.find('\n', pos), bytes.size());
        const auto line = detail::trim(bytes.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no);
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            ds.malformed.emplace_back(ErrorCode::MalformedRecord, where, "not valid JSON");
            continue;
        }
        try {
            ds.records.push_back(record_from_json(j));
        } catch (const Error& e) {
            ds.malformed.emplace_back(ErrorCode::MalformedRecord, where, e.what());
        }
    }
    if (ds.records.empty())
        throw Error(ErrorCode::EmptyDataset, "",
                    ds.malformed.empty() ? "dataset has no records"
                                         : std::to_string(ds.malformed.size()) + " lines rejected, none accepted");
    return ds;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

/// Raw counts; percentages are derived. pia is absent when no judge ran.
struct Tally {
    std::size_t total = 0;
    std::size_t fv = 0;
    std::size_t pa = 0;
    std::optional<std::size_t> pia;
    std::size_t pnd = 0;

    double fv_rate() const { return total ? static_cast<double>(fv) / static_cast<double>(total) : 0.0; }
    double pa_rate() const { return total ? static_cast<double>(pa) / static_cast<double>(total) : 0.0; }
    std::optional<double> pia_rate() const {
        if (!pia) return std::nullopt;
        return total ? static_cast<double>(*pia) / static_cast<double>(total) : 0.0;
    }

    friend bool operator==(const Tally&, const Tally&) = default;
};

struct RecordResult {
    std::size_t index = 0;
    Category category = Category::Other;
    bool fv = false;
    bool pa = false;
    std::optional<bool> pia;
    // The generated diagram, once it passed FV.
    std::optional<WorkflowDiagram> diagram;

    friend bool operator==(const RecordResult&, const RecordResult&) = default;
};

struct StageFailure {
    std::size_t index = 0;
    std::string stage;  // "FV", "PA" or "PIA"
    std::string error;

    friend bool operator==(const StageFailure&, const StageFailure&) = default;
};

struct BenchReport {
    Tally overall;
    std::map<Category, Tally> per_category;
    std::vector<StageFailure> failures;
    std::vector<RecordResult> records;

    friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

struct EvaluateOptions {
    std::size_t parallelism = 8;
    std::vector<FewShotExample> few_shot_examples;
    // Use the self-correcting generate loop instead of one backend call.
    bool self_correct = false;
    std::size_t max_attempts = 3;
    const PromptRegistry* prompts = nullptr;
};

/// yes/no from a judge reply: the first alphabetic token equal to yes or no,
/// ignoring case; nullopt when there is none.
inline std::optional<bool> parse_judgement(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size()) {
        while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
        const auto start = i;
        while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
        std::string tok(reply.substr(start, i - start));
        for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (tok == "yes") return true;
        if (tok == "no") return false;
    }
    return std::nullopt;
}

/// Distinct node types of `d` in first-appearance order, as a JSON list.
inline std::string node_list(const WorkflowDiagram& d) {
    json arr = json::array();
    std::set<std::string> seen;
    for (const auto& r : d.node_refs())
        if (seen.insert(r.type_name).second) arr.push_back(r.type_name);
    return arr.dump();
}

/// Tallies of `results`, counting distinct node types over PA-passing records.
inline Tally tally(const std::vector<const RecordResult*>& results, bool judged) {
    Tally t;
    t.total = results.size();
    if (judged) t.pia = 0;
    std::set<std::string> types;
    for (const auto* r : results) {
        t.fv += r->fv;
        t.pa += r->pa;
        if (judged && r->pia.value_or(false)) ++*t.pia;
        if (r->pa && r->diagram) {
            const auto names = r->diagram->type_names();
            types.insert(names.begin(), names.end());
        }
    }
    t.pnd = types.size();
    return t;
}

namespace detail {

struct RecordRun {
    RecordResult result;
    std::vector<StageFailure> failures;
};

inline RecordRun evaluate_one(std::size_t index, const BenchRecord& rec, GenerationBackend& backend,
                              const NodeBase& base, LlmClient* judge, ServerClient* server,
                              const EvaluateOptions& opts) {
    RecordRun run;
    auto& res = run.result;
    res.index = index;
    res.category = rec.category;
    auto fail = [&](const char* stage, std::string msg) { run.failures.push_back({index, stage, std::move(msg)}); };

    const GenerationRequest req{rec.description, opts.few_shot_examples, opts.max_attempts};
    try {
        if (opts.self_correct) {
            auto out = generate(req, backend, base, opts.prompts);
            if (auto* failed = std::get_if<GenerationFailed>(&out)) {
                fail("FV", failed->message);
                return run;
            }
            res.diagram = std::get<GenerationOk>(out).diagram;
        } else {
            auto d = parse_generation(backend.complete(build_fewshot_prompt(req, opts.prompts), rec.description));
            if (auto problems = structural_problems(d); !problems.empty()) {
                fail("FV", problems.front());
                return run;
            }
            res.diagram = std::move(d);
        }
    } catch (const std::exception& e) {
        fail("FV", e.what());
        return run;
    }
    res.fv = true;

    try {
        const auto g = lift(*res.diagram, base);
        if (server) {
            const auto outcome = submit(g, *server);
            if (const auto* rej = std::get_if<Rejected>(&outcome)) {
                fail("PA", "server rejected the prompt: " + rej->server_message);
                return run;
            }
        } else {
            const auto report = validate_executable(g, base);
            if (!report.valid) {
                const auto& first = report.issues.front();
                fail("PA", std::string(to_string(first.code)) + " at " + first.subject + ": " + first.message);
                return run;
            }
        }
    } catch (const std::exception& e) {
        fail("PA", e.what());
        return run;
    }
    res.pa = true;

    if (!judge) return run;
    res.pia = false;
    try {
        const auto& t = opts.prompts ? opts.prompts->get(TemplateId::PiaJudge) : builtin(TemplateId::PiaJudge);
        const auto reply = judge->complete(render(t, {{"Description", rec.description}, {"Nodes", node_list(*res.diagram)}}));
        const auto verdict = parse_judgement(reply);
        if (!verdict) fail("PIA", "judge reply has no yes or no: " + reply.substr(0, 200));
        else if (!*verdict) fail("PIA", "judge answered no");
        res.pia = verdict.value_or(false);
    } catch (const std::exception& e) {
        fail("PIA", e.what());
    }
    return run;
}

}  // namespace detail

/// FV: one reply parses into a structurally valid diagram. PA: the lifted
/// graph validates statically, or the server accepts it when `server` is set.
/// PIA: the judge answers yes; only evaluated for PA-passing records. Rates
/// are over all records. A record's failure never aborts the run.
inline BenchReport evaluate(const std::vector<BenchRecord>& records, GenerationBackend& backend, const NodeBase& base,
                            LlmClient* judge = nullptr, ServerClient* server = nullptr,
                            const EvaluateOptions& opts = {}) {
    if (records.empty()) throw Error(ErrorCode::EmptyDataset, "", "nothing to evaluate");
    const auto runs = detail::parallel_map(records.size(), opts.parallelism, [&](std::size_t i) {
        return detail::evaluate_one(i, records[i], backend, base, judge, server, opts);
    });

    BenchReport rep;
    std::vector<const RecordResult*> all;
    std::map<Category, std::vector<const RecordResult*>> by_cat;
    for (const auto& run : runs) {
        rep.records.push_back(run.result);
        rep.failures.insert(rep.failures.end(), run.failures.begin(), run.failures.end());
    }
    for (const auto& r : rep.records) {
        all.push_back(&r);
        by_cat[r.category].push_back(&r);
    }
    const bool judged = judge != nullptr;
    rep.overall = tally(all, judged);
    for (const auto& [cat, rs] : by_cat) rep.per_category[cat] = tally(rs, judged);
    return rep;
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

namespace detail {

/// Percentage rounded to one decimal place.
inline double percent(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

inline json tally_to_json(const Tally& t) {
    json j = {{"total", t.total},
              {"fv", percent(t.fv_rate())},
              {"pa", percent(t.pa_rate())},
              {"pia", t.pia ? json(percent(*t.pia_rate())) : json(nullptr)},
              {"pnd", t.pnd},
              {"counts", {{"fv", t.fv}, {"pa", t.pa}, {"pia", t.pia ? json(*t.pia) : json(nullptr)}}}};
    return j;
}

inline Tally tally_from_json(const json& j) {
    Tally t;
    t.total = j.at("total").get<std::size_t>();
    t.pnd = j.at("pnd").get<std::size_t>();
    const auto& c = j.at("counts");
    t.fv = c.at("fv").get<std::size_t>();
    t.pa = c.at("pa").get<std::size_t>();
    if (!c.at("pia").is_null()) t.pia = c.at("pia").get<std::size_t>();
    return t;
}

}  // namespace detail

/// Deterministic JSON; rates are percentages with one decimal place.
inline std::string report_emit(const BenchReport& rep) {
    json j = detail::tally_to_json(rep.overall);
    json cats = json::object();
    for (const auto& [cat, t] : rep.per_category) cats[std::string(to_string(cat))] = detail::tally_to_json(t);
    j["per_category"] = cats;
    json fails = json::array();
    for (const auto& f : rep.failures) fails.push_back({{"index", f.index}, {"stage", f.stage}, {"error", f.error}});
    j["failures"] = fails;
    json recs = json::array();
    for (const auto& r : rep.records) {
        recs.push_back({{"index", r.index},
                        {"category", to_string(r.category)},
                        {"fv", r.fv},
                        {"pa", r.pa},
                        {"pia", r.pia ? json(*r.pia) : json(nullptr)},
                        {"diagram", r.diagram ? diagram_to_json(*r.diagram) : json(nullptr)}});
    }
    j["records"] = recs;
    return j.dump(2);
}

inline BenchReport report_parse(std::string_view text) {
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedJson, "", "report is not a JSON object");
    try {
        BenchReport rep;
        rep.overall = detail::tally_from_json(j);
        for (const auto& [name, t] : j.at("per_category").items()) {
            const auto cat = category_from_string(name);
            if (!cat) throw Error(ErrorCode::SchemaViolation, "/per_category/" + name, "unknown category");
            rep.per_category[*cat] = detail::tally_from_json(t);
        }
        for (const auto& f : j.at("failures"))
            rep.failures.push_back({f.at("index").get<std::size_t>(), f.at("stage").get<std::string>(),
                                    f.at("error").get<std::string>()});
        for (const auto& r : j.at("records")) {
            RecordResult res;
            res.index = r.at("index").get<std::size_t>();
            const auto cat = category_from_string(r.at("category").get<std::string>());
            if (!cat) throw Error(ErrorCode::SchemaViolation, "/records", "unknown category");
            res.category = *cat;
            res.fv = r.at("fv").get<bool>();
            res.pa = r.at("pa").get<bool>();
            if (!r.at("pia").is_null()) res.pia = r.at("pia").get<bool>();
            if (!r.at("diagram").is_null()) res.diagram = diagram_from_json(r.at("diagram"));
            rep.records.push_back(std::move(res));
        }
        return rep;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, "", std::string("report: ") + e.what());
    }
}

}  // namespace comfyflow
