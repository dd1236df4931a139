#pragma once

// Shared hand-built fixtures.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/ir.hpp"
#include "comfyflow/nodebase.hpp"

namespace fixtures {

using namespace comfyflow;

inline std::string data_file(const std::string& name) {
    return detail::read_file(std::string(COMFYFLOW_TEST_DATA) + "/" + name);
}

/// One spec per type used in `d`, with exactly the ports the diagram uses.
inline std::vector<NodeSpec> specs_from_diagram(const WorkflowDiagram& d, const std::set<std::string>& skip = {}) {
    std::map<std::string, NodeSpec> specs;
    auto add_port = [](std::vector<std::string>& v, const std::string& p) {
        if (std::find(v.begin(), v.end(), p) == v.end()) v.push_back(p);
    };
    for (const auto& l : d.links) {
        auto& o = specs[l.out_node.type_name];
        o.node_name = l.out_node.type_name;
        add_port(o.output_names, l.out_port);
        auto& i = specs[l.in_node.type_name];
        i.node_name = l.in_node.type_name;
        add_port(i.input_names, l.in_port);
    }
    std::vector<NodeSpec> out;
    for (auto& [name, s] : specs)
        if (!skip.contains(name)) out.push_back(std::move(s));
    return out;
}

inline WorkflowDiagram outpaint_diagram() { return parse_diagram(data_file("outpaint_diagram.json")); }

/// The five retrieval candidates plus every other type of the outpainting
/// diagram, but not "ReplaceString" itself.
inline std::vector<NodeSpec> outpaint_specs() {
    auto specs = specs_from_diagram(outpaint_diagram(), {"ReplaceString"});
    for (auto& s : parse_specs(data_file("outpaint_candidates.json"))) specs.push_back(std::move(s));
    return specs;
}

}  // namespace fixtures
