#pragma once

// The comfyflow command-line tool.
//
// Exit codes: 0 success, 1 validation failure (including unusable input
// documents), 2 usage error, 3 transport error.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "comfyflow/bench.hpp"
#include "comfyflow/config.hpp"
#include "comfyflow/detail/io.hpp"
#include "comfyflow/executor.hpp"
#include "comfyflow/genflow.hpp"
#include "comfyflow/llm.hpp"
#include "comfyflow/nodebase.hpp"
#include "comfyflow/prompts.hpp"
#include "comfyflow/refine.hpp"
#include "comfyflow/reformat.hpp"
#include "comfyflow/remote.hpp"

namespace comfyflow::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kUsage = 2, kTransport = 3 };

inline int exit_code_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::Transport: return kTransport;
        case ErrorCode::InvalidArgument:
        case ErrorCode::Io: return kUsage;
        default: return kInvalid;
    }
}

namespace detail {

using comfyflow::detail::read_file;
using comfyflow::detail::write_file_atomic;

inline void write_json_file(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.ends_with('\n') ? text : text + "\n");
}

/// Live resources built from the effective configuration.
class Context {
public:
    explicit Context(Config cfg) : cfg_(std::move(cfg)) {}

    const Config& config() const { return cfg_; }

    const EmbeddingProvider& provider() {
        if (!provider_) {
            if (cfg_.embedding.provider == "remote") {
                if (cfg_.embedding.endpoint.empty())
                    throw Error(ErrorCode::InvalidArgument, "embedding.endpoint", "remote embedding needs an endpoint");
                provider_ = std::make_unique<RemoteEmbeddingProvider>(cfg_.embedding.endpoint, cfg_.embedding.model,
                                                                      cfg_.embedding.dimension);
            } else {
                provider_ = std::make_unique<TrigramEmbedder>(cfg_.embedding.dimension);
            }
        }
        return *provider_;
    }

    const NodeBase& base() {
        if (!base_) {
            if (cfg_.nodebase_path.empty())
                throw Error(ErrorCode::InvalidArgument, "nodebase", "no node base given (--nodebase or nodebase_path)");
            base_ = NodeBase::ingest(read_file(cfg_.nodebase_path), provider(),
                                     std::max<std::size_t>(1, std::thread::hardware_concurrency()));
        }
        return *base_;
    }

    LlmClient& llm() {
        if (!llm_) {
            if (!cfg_.llm.script.empty()) {
                const auto j = json::parse(read_file(cfg_.llm.script), nullptr, false);
                if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, cfg_.llm.script, "LLM script is not JSON");
                llm_ = std::make_unique<ScriptedLlm>(ScriptedLlm::from_json(j));
            } else if (!cfg_.llm.endpoint.empty()) {
                llm_ = std::make_unique<RemoteLlmClient>(
                    cfg_.llm.endpoint, cfg_.llm.model,
                    SamplingParams{cfg_.llm.temperature, cfg_.llm.top_p, cfg_.llm.max_tokens});
            } else {
                throw Error(ErrorCode::InvalidArgument, "llm", "no LLM configured (llm.script or llm.endpoint)");
            }
        }
        return *llm_;
    }

    ServerClient& server() {
        if (!server_) {
            if (cfg_.server_url.empty())
                throw Error(ErrorCode::InvalidArgument, "server.base_url", "no ComfyUI server configured");
            server_ = std::make_unique<ComfyServerClient>(cfg_.server_url);
        }
        return *server_;
    }

    const PromptRegistry& prompts() {
        if (!prompts_)
            prompts_ = cfg_.prompts_dir.empty() ? PromptRegistry() : PromptRegistry::with_overrides(cfg_.prompts_dir);
        return *prompts_;
    }

private:
    Config cfg_;
    std::unique_ptr<EmbeddingProvider> provider_;
    std::optional<NodeBase> base_;
    std::unique_ptr<LlmClient> llm_;
    std::unique_ptr<ServerClient> server_;
    std::optional<PromptRegistry> prompts_;
};

/// A graph workflow file, or a diagram file lifted through the node base.
inline GraphWorkflow load_graph(const std::string& path, Context& ctx) {
    const auto text = read_file(path);
    const auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedJson, path, "not valid JSON");
    if (j.is_array()) return lift(diagram_from_json(j), ctx.base());
    return graph_from_json(j);
}

inline std::string format_number(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << (x == 0.0 ? 0.0 : x);
    return os.str();
}

inline std::vector<double> parse_rewards(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto t = std::string(comfyflow::detail::trim(item));
        try {
            std::size_t used = 0;
            out.push_back(std::stod(t, &used));
            if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidArgument, "--rewards", "'" + t + "' is not a number");
        }
    }
    return out;
}

inline std::string percent_text(double fraction) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << fraction * 100.0;
    return os.str();
}

}  // namespace detail

/// Runs the tool on `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               const EnvLookup& env = process_env) {
    CLI::App app{"Compile, clean, validate, refine, generate and benchmark ComfyUI workflows.", "comfyflow"};
    app.require_subcommand(1);

    std::string config_path;
    std::string nodebase;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration file");
        return sub;
    };
    auto with_nodebase = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--nodebase", nodebase, "Node base specs file");
        if (required) opt->required();
        return sub;
    };

    std::string in, out_path, to, desc, backend, fewshot, dataset, report_path, rewards, diagram_path, name;
    std::vector<std::string> inputs;
    bool strict_types = false, judge = false, live_server = false, self_correct = false;
    std::size_t k = 0;

    auto* convert = common(app.add_subcommand("convert", "Convert between graph workflows and diagrams"));
    convert->add_option("--to", to, "Target format")->required()->check(CLI::IsMember({"diagram", "workflow"}));
    convert->add_option("--in", in, "Input file")->required();
    convert->add_option("--out", out_path, "Output file")->required();
    with_nodebase(convert, false);

    auto* clean_cmd = common(app.add_subcommand("clean", "Remove cosmetic and special nodes from graph workflows"));
    clean_cmd->add_option("--in", inputs, "Input workflow (repeat for a batch)")->required();
    clean_cmd->add_option("--out", out_path, "Output file, or directory for a batch")->required();
    clean_cmd->add_option("--report", report_path, "Cleaning report file");

    auto* validate = common(app.add_subcommand("validate", "Check static executability"));
    validate->add_option("--in", in, "Graph workflow or diagram")->required();
    with_nodebase(validate, true);
    validate->add_flag("--strict-types", strict_types, "Reject links whose endpoint types are unknown");

    auto* refine_cmd = common(app.add_subcommand("refine", "Replace unknown node types in a diagram"));
    refine_cmd->add_option("--in", in, "Diagram file")->required();
    refine_cmd->add_option("--desc", desc, "Workflow description")->required();
    refine_cmd->add_option("--out", out_path, "Refined diagram file")->required();
    with_nodebase(refine_cmd, true);

    auto* generate_cmd = common(app.add_subcommand("generate", "Generate a diagram from a description"));
    generate_cmd->add_option("--desc", desc, "Workflow description")->required();
    generate_cmd->add_option("--backend", backend, "Generation backend")->required()->check(CLI::IsMember({"llm", "nn"}));
    generate_cmd->add_option("--fewshot", fewshot, "Few-shot corpus (JSONL)");
    generate_cmd->add_option("--out", out_path, "Diagram file")->required();
    with_nodebase(generate_cmd, false);

    auto* bench_cmd = common(app.add_subcommand("bench", "Evaluate a backend on a dataset"));
    bench_cmd->add_option("--dataset", dataset, "Dataset (JSONL)")->required();
    bench_cmd->add_option("--backend", backend, "Generation backend")->required()->check(CLI::IsMember({"llm", "nn"}));
    bench_cmd->add_flag("--judge", judge, "Score instruction alignment with the configured LLM");
    bench_cmd->add_flag("--live-server", live_server, "Measure pass accuracy on the configured server");
    bench_cmd->add_flag("--self-correct", self_correct, "Use the self-correcting generation loop");
    bench_cmd->add_option("--fewshot", fewshot, "Few-shot corpus (JSONL)");
    bench_cmd->add_option("--out", out_path, "Report file")->required();
    with_nodebase(bench_cmd, false);

    auto* nb = app.add_subcommand("nodebase", "Manage node base files");
    nb->require_subcommand(1);
    auto* nb_ingest = common(nb->add_subcommand("ingest", "Validate specs and write a normalized snapshot"));
    nb_ingest->add_option("--in", in, "Specs file")->required();
    nb_ingest->add_option("--out", out_path, "Snapshot file")->required();
    std::string newer;
    auto* nb_merge = common(nb->add_subcommand("merge", "Union of two bases; the newer wins on collisions"));
    nb_merge->add_option("--base", in, "Older specs file")->required();
    nb_merge->add_option("--newer", newer, "Newer specs file")->required();
    nb_merge->add_option("--out", out_path, "Snapshot file")->required();
    auto* nb_query = common(nb->add_subcommand("query", "Nearest node names"));
    nb_query->add_option("--name", name, "Query name")->required();
    nb_query->add_option("--k", k, "Number of results")->check(CLI::PositiveNumber);
    with_nodebase(nb_query, true);

    auto* submit_cmd = common(app.add_subcommand("submit", "Queue a workflow on the configured server"));
    submit_cmd->add_option("--in", in, "Graph workflow or diagram")->required();
    with_nodebase(submit_cmd, false);

    auto* score = common(app.add_subcommand("score", "Reward of a diagram, or advantages of a reward group"));
    auto* score_diagram = score->add_option("--diagram", diagram_path, "Diagram file");
    auto* score_rewards = score->add_option("--rewards", rewards, "Comma-separated rewards");
    score_diagram->excludes(score_rewards);
    with_nodebase(score, false);

    std::vector<std::string> argv_store{"comfyflow"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (score->parsed() && diagram_path.empty() && rewards.empty())
            throw CLI::ValidationError("score", "give --diagram or --rewards");
    } catch (const CLI::ParseError& e) {
        const CLI::App* deepest = &app;
        for (bool descended = true; descended;) {
            descended = false;
            for (const auto* sub : deepest->get_subcommands())
                if (sub->parsed()) {
                    deepest = sub;
                    descended = true;
                    break;
                }
        }
        if (e.get_exit_code() == 0) {
            out << deepest->help();
            return kOk;
        }
        err << "error: " << e.what() << "\n" << deepest->help();
        return kUsage;
    }

    try {
        json flags = json::object();
        if (!nodebase.empty()) flags["nodebase_path"] = nodebase;
        std::optional<std::string> config_text;
        if (!config_path.empty()) config_text = detail::read_file(config_path);
        Config resolved;
        try {
            resolved = resolve_config(config_text, flags, env);
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidArgument, "config", e.what());
        }
        detail::Context ctx(std::move(resolved));
        const auto& cfg = ctx.config();

        if (convert->parsed()) {
            if (to == "diagram") {
                auto result = clean(parse_graph_workflow(detail::read_file(in)));
                if (result.report.rejected)
                    throw Error(ErrorCode::InvalidWorkflow, in, *result.report.rejected);
                const auto d = to_diagram(result.graph);
                detail::write_json_file(out_path, emit_diagram(d));
                out << "wrote " << d.links.size() << " links to " << out_path << "\n";
            } else {
                const auto g = lift(parse_diagram(detail::read_file(in)), ctx.base());
                detail::write_json_file(out_path, emit_graph_workflow(g));
                out << "wrote " << g.nodes.size() << " nodes to " << out_path << "\n";
            }
            return kOk;
        }

        if (clean_cmd->parsed()) {
            const bool batch = inputs.size() > 1;
            if (batch) std::filesystem::create_directories(out_path);
            auto results = comfyflow::detail::parallel_map(inputs.size(), cfg.parallelism.clean, [&](std::size_t i) {
                return clean(parse_graph_workflow(detail::read_file(inputs[i])));
            });
            json reports = json::object();
            bool rejected = false;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const auto& r = results[i];
                const auto target =
                    batch ? (std::filesystem::path(out_path) / std::filesystem::path(inputs[i]).filename()).string()
                          : out_path;
                detail::write_json_file(target, emit_graph_workflow(r.graph));
                reports[inputs[i]] = report_to_json(r.report);
                if (r.report.rejected) {
                    rejected = true;
                    err << inputs[i] << ": rejected: " << *r.report.rejected << "\n";
                }
                out << inputs[i] << ": removed " << r.report.removed_nodes.size() << " nodes, spliced "
                    << r.report.spliced_links << " links, added " << r.report.added_links << " links\n";
            }
            if (!report_path.empty())
                detail::write_json_file(report_path, (batch ? reports : reports[inputs[0]]).dump(2));
            return rejected ? kInvalid : kOk;
        }

        if (validate->parsed()) {
            const auto g = detail::load_graph(in, ctx);
            const auto report = validate_executable(g, ctx.base(), {strict_types});
            out << report_to_json(report).dump(2) << "\n";
            return report.valid ? kOk : kInvalid;
        }

        if (refine_cmd->parsed()) {
            RefineOptions opts;
            opts.k = cfg.refine_k;
            opts.parallelism = cfg.parallelism.bench;
            opts.prompts = &ctx.prompts();
            const auto outcome =
                refine(parse_diagram(detail::read_file(in)), desc, ctx.base(), ctx.provider(), ctx.llm(), opts);
            detail::write_json_file(out_path, emit_diagram(outcome.diagram));
            out << outcome_to_json(outcome).dump(2) << "\n";
            return outcome.unresolved.empty() ? kOk : kInvalid;
        }

        if (generate_cmd->parsed()) {
            std::vector<FewShotExample> corpus;
            if (!fewshot.empty()) corpus = load_fewshot(detail::read_file(fewshot));
            std::unique_ptr<GenerationBackend> be;
            GenerationRequest req{desc, {}, cfg.max_attempts};
            if (backend == "nn") {
                if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "--fewshot", "the nn backend needs a corpus");
                be = std::make_unique<NearestNeighborBackend>(corpus, ctx.provider());
            } else {
                req.few_shot_examples = corpus;
                be = std::make_unique<LlmBackend>(ctx.llm());
            }
            const auto outcome = generate(req, *be, ctx.base(), &ctx.prompts());
            if (const auto* failed = std::get_if<GenerationFailed>(&outcome)) {
                err << "generation failed after " << failed->attempts_used << " attempts: " << failed->message << "\n";
                return failed->code == ErrorCode::Transport ? kTransport : kInvalid;
            }
            const auto& ok = std::get<GenerationOk>(outcome);
            detail::write_json_file(out_path, emit_diagram(ok.diagram));
            out << "wrote " << ok.diagram.links.size() << " links after " << ok.attempts_used << " attempt"
                << (ok.attempts_used == 1 ? "" : "s") << "\n";
            return kOk;
        }

        if (bench_cmd->parsed()) {
            const auto ds = load_dataset(detail::read_file(dataset));
            for (const auto& m : ds.malformed) err << "skipped: " << m.what() << "\n";
            std::vector<FewShotExample> corpus;
            if (!fewshot.empty()) corpus = load_fewshot(detail::read_file(fewshot));
            EvaluateOptions opts;
            opts.parallelism = cfg.parallelism.bench;
            opts.self_correct = self_correct;
            opts.max_attempts = cfg.max_attempts;
            opts.prompts = &ctx.prompts();
            std::unique_ptr<GenerationBackend> be;
            if (backend == "nn") {
                if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "--fewshot", "the nn backend needs a corpus");
                be = std::make_unique<NearestNeighborBackend>(corpus, ctx.provider());
            } else {
                opts.few_shot_examples = corpus;
                be = std::make_unique<LlmBackend>(ctx.llm());
            }
            const auto& base = ctx.base();
            LlmClient* judge_llm = judge ? &ctx.llm() : nullptr;
            ServerClient* server = live_server ? &ctx.server() : nullptr;
            const auto rep = evaluate(ds.records, *be, base, judge_llm, server, opts);
            detail::write_json_file(out_path, report_emit(rep));
            const auto& t = rep.overall;
            out << "records " << t.total << "  FV " << detail::percent_text(t.fv_rate()) << "%  PA "
                << detail::percent_text(t.pa_rate()) << "%  PIA "
                << (t.pia ? detail::percent_text(*t.pia_rate()) + "%" : std::string("n/a")) << "  PND " << t.pnd
                << "\n";
            return kOk;
        }

        if (nb_ingest->parsed()) {
            const auto base = NodeBase::ingest(detail::read_file(in), ctx.provider());
            detail::write_json_file(out_path, emit_snapshot(base));
            out << base.size() << " specs\n";
            return kOk;
        }
        if (nb_merge->parsed()) {
            const auto older = NodeBase::ingest(detail::read_file(in), ctx.provider());
            const auto fresh = NodeBase::ingest(detail::read_file(newer), ctx.provider());
            const auto merged = older.merge(fresh);
            detail::write_json_file(out_path, emit_snapshot(merged));
            out << merged.size() << " specs\n";
            return kOk;
        }
        if (nb_query->parsed()) {
            json arr = json::array();
            for (const auto& s : ctx.base().top_k(name, k ? k : cfg.refine_k, ctx.provider()))
                arr.push_back({{"node_name", s.node_name}, {"score", s.score}});
            out << arr.dump(2) << "\n";
            return kOk;
        }

        if (submit_cmd->parsed()) {
            const auto result = submit(detail::load_graph(in, ctx), ctx.server());
            if (const auto* ok = std::get_if<Accepted>(&result)) {
                out << json{{"prompt_id", ok->prompt_id}}.dump() << "\n";
                return kOk;
            }
            out << std::get<Rejected>(result).server_message << "\n";
            return kInvalid;
        }

        if (score->parsed()) {
            if (!rewards.empty()) {
                const auto adv = advantages(detail::parse_rewards(rewards));
                for (std::size_t i = 0; i < adv.size(); ++i) out << (i ? " " : "") << detail::format_number(adv[i]);
                out << "\n";
                return kOk;
            }
            const auto d = parse_diagram(detail::read_file(diagram_path));
            const auto names = ctx.base().names();
            const auto r = reward(d, names);
            out << detail::format_number(r) << "\n";
            for (const auto& n : fictitious_names(d, names)) err << "unknown node type: " << n << "\n";
            return kOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    }
    return kUsage;
}

}  // namespace comfyflow::cli
