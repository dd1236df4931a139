#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/error.hpp"

namespace comfyflow {

enum class TemplateId { SemanticEnhancement, CategorySummary, DataClassification, FewShot, RefineSelect, PiaJudge };

inline constexpr std::array<TemplateId, 6> all_templates{TemplateId::SemanticEnhancement, TemplateId::CategorySummary, TemplateId::DataClassification, TemplateId::FewShot, TemplateId::RefineSelect, TemplateId::PiaJudge};

inline std::string_view template_name(TemplateId id) {
    switch (id) {
        case TemplateId::SemanticEnhancement: return "SemanticEnhancement";
        case TemplateId::CategorySummary: return "CategorySummary";
        case TemplateId::DataClassification: return "DataClassification";
        case TemplateId::FewShot: return "FewShot";
        case TemplateId::RefineSelect: return "RefineSelect";
        case TemplateId::PiaJudge: return "PiaJudge";
    }
    return "";
}

inline std::optional<TemplateId> template_from_name(std::string_view name) {
    for (auto id : all_templates)
        if (template_name(id) == name) return id;
    return std::nullopt;
}

/// Compiled-in template text. The same bytes ship as assets/prompts/<Name>.txt.
/// Slot names are kept exactly as written in the original templates.
inline std::string_view builtin_body(TemplateId id) {
    switch (id) {
        case TemplateId::SemanticEnhancement:
            return R"PROMPT(I would like you to act as an expert in information processing. I will provide a chaotic infomation regarding an computer vision task workflow. Your task is to analyze and understand it, then summarize the core functionality. Infomation: {{Infomation}} Please return the results in pure JSON format, including the following: 1.summary: A refined description of the functionality, limited to 100 words. If you cannot analyze and extract valid any concept. you should return an empty string.
Response Example:
```json{"summary": "The workflow allows uploading photos and converting them into stylized images."} ```)PROMPT";
        case TemplateId::CategorySummary:
            return R"PROMPT(I would like you to act as an expert in information processing. I will provide a description regarding an image processing workflow. Your task is to analyze and understand it, and summary a computer vision task category about it. Description:{{Description}} Please return the results in JSON format, including the following: 1.belong_category: It indicates which task category the description belongs to. Notes: 1.You should not create categories with very broad concepts. These categories should belong to a specific task in the field of computer vision. 2.You should return the result in pure JSON format without including any other information or code.
Response Example:
```json{"belong_category": "text-to-image"}```)PROMPT";
        case TemplateId::DataClassification:
            return R"PROMPT(I would like you to act as an expert in information processing. I will provide a description regarding a computer vision task and some computer vision task categories. Your task is to analyze and understand the description and these task categories, and determine which of the task category I provided the description belongs to. Description: {{Description}} Categoryies: {{Categoryies}} Please return the results in JSON format, including the following: 1.belong_category: It indicates which category the description belongs to. This category must be included in the categories I provided. If none of them match, it should be classified as other. Notes: 1.You should return the result in pure JSON format without including any other information or code.
Response Example:
```json{"belong_category": "Text-to-image generation"}```)PROMPT";
        case TemplateId::FewShot:
            return R"PROMPT(I would like you to act as an expert in ComfyUI platform. I will provide some examples, including a description about ComfyUI workflow and a logical diagram in json format represents the comfyui workflow. The logical diagram is a edges list [edge_1, edge_2, edge_3, ... , edge_n],  each edge is consist of [output_node,output_name,input_node,input_name], represents a line between output node and input node. Examples: {{Examples}}. Now, I want you to understand these example and create a new diagram based on a new description. Description: {{Description}} Notes: 1. You only should return the diagram in pure json format without including any other information or code. Response example:
```json{"diagram": .... }```)PROMPT";
        case TemplateId::RefineSelect:
            return R"PROMPT(I would like you to act as an expert in ComfyUI platform. I will provide a example, including a description about ComfyUI workflow and a logical diagram in json format represents the comfyui workflow. The logical diagram is a links list [link_1, link_2, link_3, ... , link_n],  each link is consist of [output_node_name, output_name, input_node_name, input_name], represents a line between output node and input node. Example: Description: {{Description}}. Logical Diagram: {{Diagram}}. Now, This logical diagram has one error node name. Error Name: {{Name}}. I will give you some candidate nodes. Please combine thse above information to select the most suitable candidate node. Candidate nodes: {{Nodes}}. You just need to return you choose node name. Please return result in pure JSON format, including:
```json{"candidate_node_name": ...}```)PROMPT";
        case TemplateId::PiaJudge:
            return R"PROMPT(I would like you to act as an expert in ComfyUI platform. I will provide a example, including a description about ComfyUI workflow and a ComfyUI nodes list.  Example: Description: {{Description}} ComfyUI Nodes List: {{Nodes}}. Now, I want you to determine whether these ComfyUI nodes can complete the description. Notes: 1. You only need to answer yes or no,  without including any other information or code.)PROMPT";
    }
    return "";
}

struct PromptTemplate {
    TemplateId id{};
    std::string body;
    // Distinct `{{Name}}` placeholders in order of first occurrence.
    std::vector<std::string> slots;

    static PromptTemplate make(TemplateId id, std::string body) {
        PromptTemplate t{id, std::move(body), {}};
        std::set<std::string> seen;
        for (std::size_t pos = t.body.find("{{"); pos != std::string::npos; pos = t.body.find("{{", pos + 2)) {
            const auto end = t.body.find("}}", pos + 2);
            if (end == std::string::npos)
                throw Error(ErrorCode::SchemaViolation, std::string(template_name(id)), "unterminated placeholder");
            auto name = t.body.substr(pos + 2, end - pos - 2);
            if (name.empty() || name.find('{') != std::string::npos)
                throw Error(ErrorCode::SchemaViolation, std::string(template_name(id)), "malformed placeholder");
            if (seen.insert(name).second) t.slots.push_back(std::move(name));
        }
        return t;
    }
};

inline const PromptTemplate& builtin(TemplateId id) {
    static const auto table = [] {
        std::map<TemplateId, PromptTemplate> m;
        for (auto t : all_templates) m.emplace(t, PromptTemplate::make(t, std::string(builtin_body(t))));
        return m;
    }();
    return table.at(id);
}

/// Substitutes every placeholder in one pass; text inside bindings is never
/// re-expanded. The bindings must cover exactly the template's slots.
inline std::string render(const PromptTemplate& t, const std::map<std::string, std::string>& bindings) {
    for (const auto& [name, _] : bindings)
        if (std::find(t.slots.begin(), t.slots.end(), name) == t.slots.end())
            throw Error(ErrorCode::UnknownSlot, name, "template " + std::string(template_name(t.id)) + " has no such slot");
    for (const auto& name : t.slots)
        if (!bindings.contains(name))
            throw Error(ErrorCode::MissingSlot, name, "no binding for slot of " + std::string(template_name(t.id)));

    std::string out;
    out.reserve(t.body.size());
    std::size_t pos = 0;
    while (true) {
        const auto open = t.body.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = t.body.find("}}", open + 2);
        out.append(t.body, pos, open - pos);
        out += bindings.at(t.body.substr(open + 2, close - open - 2));
        pos = close + 2;
    }
    out.append(t.body, pos, std::string::npos);
    return out;
}

inline std::string render(TemplateId id, const std::map<std::string, std::string>& bindings) {
    return render(builtin(id), bindings);
}

/// The built-in templates, optionally overridden from `<dir>/<Name>.txt`.
/// An override must declare the same slots as the template it replaces.
class PromptRegistry {
public:
    PromptRegistry() {
        for (auto id : all_templates) templates_.emplace(id, builtin(id));
    }

    static PromptRegistry with_overrides(const std::filesystem::path& dir) {
        PromptRegistry r;
        for (auto id : all_templates) {
            const auto file = dir / (std::string(template_name(id)) + ".txt");
            if (!std::filesystem::exists(file)) continue;
            r.set(PromptTemplate::make(id, detail::read_file(file)));
        }
        return r;
    }

    void set(PromptTemplate t) {
        const auto& base = builtin(t.id);
        if (std::set<std::string>(t.slots.begin(), t.slots.end()) != std::set<std::string>(base.slots.begin(), base.slots.end()))
            throw Error(ErrorCode::SchemaViolation, std::string(template_name(t.id)), "override changes the slot set");
        templates_.insert_or_assign(t.id, std::move(t));
    }

    const PromptTemplate& get(TemplateId id) const { return templates_.at(id); }

    std::string render(TemplateId id, const std::map<std::string, std::string>& bindings) const {
        return comfyflow::render(get(id), bindings);
    }

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

}  // namespace comfyflow
