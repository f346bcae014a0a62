#include "callsim/error.hpp"
#include "callsim/harness.hpp"
#include "callsim/service.hpp"
#include "callsim/text.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace callsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ServiceConfig load_service_config(const std::string& path) { return path.empty() ? ServiceConfig{} : ServiceConfig::load(path); }

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

ServiceDeps service_deps(const Runtime& rt) {
    ServiceDeps d;
    d.client = rt.client.get();
    d.knowledge = rt.knowledge.get();
    d.classifier = rt.classifier.get();
    d.answerer = rt.answerer.get();
    d.profiles = &rt.profiles;
    d.paraphrases = &rt.paraphrases;
    return d;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& taxonomy_path, const std::string& corpus_path, const std::string& out) {
    auto taxonomy = TagTaxonomy::load(taxonomy_path);
    auto calls = parse_corpus(corpus_path, taxonomy);
    std::map<std::string, int> by_type;
    std::size_t turns = 0;
    for (const auto& c : calls) {
        ++by_type[c.is.incident_type];
        turns += c.turns.size();
    }
    std::cout << calls.size() << " calls, " << turns << " turns, " << by_type.size() << " incident types\n";
    for (const auto& [type, n] : by_type) std::cout << "  " << type << "\t" << n << "\n";
    if (!out.empty()) {
        write_text(out, serialize_corpus(calls));
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_build_kb(const std::string& config_path, const std::string& out) {
    auto cfg = load_service_config(config_path);
    auto taxonomy = TagTaxonomy::load(cfg.taxonomy);
    auto corpus = parse_corpus(cfg.corpus, taxonomy);
    auto kb = build_knowledge(std::move(taxonomy), std::move(corpus),
                              KnowledgePaths{cfg.gazetteer, cfg.connectivity, cfg.protocols});
    auto model = train_centroid_classifier(kb->corpus);
    fs::create_directories(out);
    auto model_path = (fs::path(out) / "classifier.model").string();
    model.save(model_path);
    json summary{{"calls", kb->corpus.size()},
                 {"gazetteer_addresses", kb->gazetteer.size()},
                 {"connectivity_edges", kb->connectivity.edge_count()},
                 {"protocol_trees", kb->protocols.size()},
                 {"classifier", model_path},
                 {"classifier_fingerprint", model.fingerprint()}};
    write_text(fs::path(out) / "kb.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

HttpApi* g_api = nullptr;

void on_signal(int) {
    if (g_api) g_api->stop();
}

int cmd_serve(const std::string& config_path, const std::string& host, int port) {
    auto cfg = load_service_config(config_path);
    if (!host.empty()) cfg.host = host;
    if (port >= 0) cfg.port = port;
    auto rt = build_runtime(cfg);
    SessionService svc(service_deps(rt), cfg.data_dir, cfg.threshold, cfg.ablation);
    auto recovered = svc.recover();
    auto token = cfg.instructor_token();
    HttpApi api(svc, token);
    int bound = api.bind(cfg.host, cfg.port);
    g_api = &api;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "callsim listening on " << cfg.host << ":" << bound << " (backend " << rt.client->name() << ", "
              << recovered << " sessions recovered, instructor view " << (token ? "enabled" : "disabled") << ")\n";
    api.listen();
    g_api = nullptr;
    return 0;
}

void print_turn(const json& t) {
    std::cout << "[" << t.at("index").get<std::size_t>() << "] " << t.at("speaker").get<std::string>() << ": "
              << t.at("text").get<std::string>();
    if (t.contains("report")) std::cout << "   (" << t["report"]["status"].get<std::string>() << ")";
    std::cout << "\n";
}

int cmd_simulate(const std::string& config_path, const std::string& instruction_path, const std::string& data_dir) {
    auto cfg = load_service_config(config_path);
    auto rt = build_runtime(cfg);
    auto instruction = parse_instruction(json::parse(text::read_file(instruction_path)), rt.knowledge->taxonomy);
    SessionService svc(service_deps(rt), data_dir.empty() ? cfg.data_dir : data_dir, cfg.threshold, cfg.ablation);
    auto created = svc.create(instruction);
    auto id = created.at("id").get<std::string>();
    std::cout << "session " << id << "\n"
              << "type a line to speak; :rate <turn> <1-5> [reject], :show, :end\n";
    print_turn(created.at("turns").back());
    std::string line;
    while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
        line = text::trim(line);
        if (line.empty()) continue;
        try {
            if (line == ":end") break;
            if (line == ":show") {
                auto view = svc.get(id);
                for (const auto& t : view.at("turns")) print_turn(t);
                continue;
            }
            if (line.rfind(":rate", 0) == 0) {
                std::istringstream in(line.substr(5));
                std::size_t turn = 0;
                int rating = 0;
                std::string flag;
                if (!(in >> turn >> rating)) throw ValidationError("usage: :rate <turn> <1-5> [reject]");
                in >> flag;
                auto r = svc.post_feedback(id, turn, rating, std::nullopt, flag == "reject");
                std::cout << "feedback recorded\n";
                if (r.contains("turn")) print_turn(r.at("turn"));
                continue;
            }
            print_turn(svc.post_turn(id, line).at("turn"));
        } catch (const ValidationError& e) {
            std::cout << "error: " << e.what() << "\n";
        } catch (const StateError& e) {
            std::cout << "error: " << e.what() << "\n";
        }
    }
    auto ended = svc.end(id);
    std::cout << "session ended after " << ended.at("active_seconds").get<double>() << " s\n";
    return 0;
}

int cmd_replay(const std::string& config_path, const std::string& out, const std::string& service_path) {
    auto cfg = load_service_config(service_path);
    auto rt = build_runtime(cfg);
    auto configs = load_runtime_configs(config_path, rt.knowledge->taxonomy);
    ReplayDeps deps;
    deps.client = rt.client.get();
    deps.knowledge = rt.knowledge.get();
    deps.classifier = rt.classifier.get();
    deps.answerer = rt.answerer.get();
    deps.profiles = &rt.profiles;
    deps.prompt.paraphrases = &rt.paraphrases;
    std::size_t files = 0;
    for (const auto& c : configs) {
        auto logs = replay(c, deps);
        files += write_session_logs(logs, out).size();
        std::cout << c.name << " [" << c.ablation.name() << "]: " << logs.size() << " sessions\n";
    }
    std::cout << "wrote " << files << " session logs to " << out << "\n";
    return 0;
}

struct EvalPaths {
    std::string grammar = "data/grammar.cfg";
    std::string sentiment = "data/lexicons/sentiment.tsv";
    std::string emotion = "data/lexicons/emotion.tsv";
};

int cmd_eval(const std::string& sessions_dir, const std::string& refs, const std::string& report,
             const std::string& service_path, const EvalPaths& paths) {
    auto cfg = load_service_config(service_path);
    auto taxonomy = TagTaxonomy::load(cfg.taxonomy);
    auto corpus = parse_corpus(cfg.corpus, taxonomy);
    auto kb = build_knowledge(taxonomy, std::move(corpus), KnowledgePaths{cfg.gazetteer, cfg.connectivity, cfg.protocols});
    auto classifier = cfg.classifier.empty() ? train_centroid_classifier(kb->corpus) : CentroidModel::load(cfg.classifier);
    LexicalAnswerer answerer;
    answerer.attach_gazetteer(&kb->gazetteer);
    auto grammar = Grammar::load(paths.grammar);
    auto sentiment = SentimentLexicon::load(paths.sentiment);
    auto emotion = EmotionLexicon::load(paths.emotion);

    auto sessions = load_session_logs(sessions_dir, taxonomy);
    auto references = parse_corpus(refs, taxonomy);
    EvaluationDeps deps;
    deps.knowledge = kb.get();
    deps.classifier = &classifier;
    deps.answerer = &answerer;
    deps.grammar = &grammar;
    deps.sentiment = &sentiment;
    deps.emotion = &emotion;
    auto result = evaluate(sessions, references, deps);

    fs::path rp(report);
    write_text(rp, result.to_json().dump(2) + "\n");
    auto tsv = rp, txt = rp;
    write_text(tsv.replace_extension(".tsv"), result.to_tsv());
    write_text(txt.replace_extension(".txt"), result.render());
    std::cout << result.render();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emergency-call simulation engine"};
    app.require_subcommand(1);

    std::string taxonomy = "data/taxonomy.json", corpus, out, config, service, instruction, data_dir, host;
    std::string sessions, refs, report;
    int port = -1;
    EvalPaths eval_paths;

    auto* ingest = app.add_subcommand("ingest", "Validate an annotated corpus");
    ingest->add_option("--taxonomy", taxonomy, "Tag taxonomy")->check(CLI::ExistingFile);
    ingest->add_option("--corpus", corpus, "Line-delimited JSON corpus")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out, "Write the normalized corpus here");

    auto* build_kb = app.add_subcommand("build-kb", "Build the knowledge base and train the incident classifier");
    build_kb->add_option("--config", config, "Service config")->check(CLI::ExistingFile);
    build_kb->add_option("--out", out, "Output directory")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config, "Service config")->check(CLI::ExistingFile);
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--port", port, "Listen port (0 picks one)");

    auto* simulate = app.add_subcommand("simulate", "Interactive session in the terminal");
    simulate->add_option("--config", config, "Service config")->check(CLI::ExistingFile);
    simulate->add_option("--instruction", instruction, "Simulation instruction (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--data-dir", data_dir, "Session log directory");

    auto* replay_cmd = app.add_subcommand("replay", "Run pre-configured runtimes");
    replay_cmd->add_option("--config", config, "Runtime config")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--out", out, "Session log directory")->required();
    replay_cmd->add_option("--service", service, "Service config")->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "Score session logs against reference calls");
    eval->add_option("--sessions", sessions, "Session log directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--refs", refs, "Reference corpus")->required()->check(CLI::ExistingFile);
    eval->add_option("--report", report, "Report path (JSON; .tsv and .txt written alongside)")->required();
    eval->add_option("--service", service, "Service config")->check(CLI::ExistingFile);
    eval->add_option("--grammar", eval_paths.grammar, "Grammar file")->check(CLI::ExistingFile);
    eval->add_option("--sentiment", eval_paths.sentiment, "Sentiment lexicon")->check(CLI::ExistingFile);
    eval->add_option("--emotion", eval_paths.emotion, "Emotion lexicon")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(taxonomy, corpus, out);
        if (*build_kb) return cmd_build_kb(config, out);
        if (*serve) return cmd_serve(config, host, port);
        if (*simulate) return cmd_simulate(config, instruction, data_dir);
        if (*replay_cmd) return cmd_replay(config, out, service);
        if (*eval) return cmd_eval(sessions, refs, report, service, eval_paths);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
