#include "path/optimizer.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "path/common.hpp"
#include "path/rng.hpp"

#include <nlohmann/json.hpp>

namespace path {

void PathConfig::validate() const {
    if (trials < 1) throw ConfigError("path: trials must be >= 1");
    if (depth != 1 && depth != 2) throw ConfigError("path: depth must be 1 or 2");
    if (depth == 2) {
        if (breadth < 1) throw ConfigError("path: breadth must be >= 1 at depth 2");
        if (breadth > trials) {
            throw ConfigError("path: breadth " + std::to_string(breadth) +
                              " exceeds the trial budget " + std::to_string(trials));
        }
    }
    if (dprime_size < 1) throw ConfigError("path: dprime_size must be >= 1");
    if (jobs < 1) throw ConfigError("path: jobs must be >= 1");
}

const char* const kProposalSystemPrompt =
    "You optimize instructions for a system that writes search queries from passages.";

namespace {

const char* const kProposalRequest =
    "Write a new instruction that leads to higher accuracy. "
    "Respond with only the instruction text.";

}  // namespace

std::string depth1_meta_prompt(const PromptTemplate& current) {
    return "Here is the current instruction for generating a search query from a passage:\n\n"
           "Instruction: " +
           current.instruction + "\n\n" + kProposalRequest;
}

std::string depth2_meta_prompt(const std::vector<AttemptRecord>& scored_attempts) {
    std::vector<const AttemptRecord*> ordered;
    for (const AttemptRecord& a : scored_attempts) {
        if (a.ok) ordered.push_back(&a);
    }
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const AttemptRecord* a, const AttemptRecord* b) {
                         return a->score < b->score;  // ascending, best last
                     });
    std::string out =
        "Here are previous instructions for generating a search query from a passage, "
        "with their validation scores (higher is better):\n\n";
    size_t n = 0;
    for (const AttemptRecord* a : ordered) {
        ++n;
        out += "Instruction #" + std::to_string(n) + " (score " + format_fixed(a->score, 3) +
               "): " + a->prompt.instruction + "\n";
    }
    out += "\n";
    out += kProposalRequest;
    return out;
}

namespace {

std::string strip_quotes(std::string text) {
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
        text = trim(std::string_view(text).substr(1, text.size() - 2));
    }
    return text;
}

PromptTemplate propose_from_meta(const PromptTemplate& initial,
                                 const std::string& meta_prompt,
                                 LmClient& lm,
                                 const LmRequest& request_defaults,
                                 RequestLog* log,
                                 size_t attempt_index) {
    LmRequest request = request_defaults;
    request.messages = {LmMessage{"system", kProposalSystemPrompt},
                        LmMessage{"user", meta_prompt}};
    std::string instruction;
    for (int round = 0; round < 2 && instruction.empty(); ++round) {
        LmResponse response = lm.complete(request);
        if (log) {
            LmLogRecord record;
            record.template_hash_hex = to_hex(template_hash(initial));
            record.passage_id = "proposal:" + std::to_string(attempt_index);
            record.model = request.model;
            record.temperature = request.temperature;
            record.max_tokens = request.max_tokens;
            record.prompt = request.messages;
            record.completion = response.text;
            record.attempts = response.attempts;
            record.parse_status = "proposal";
            log->append(record);
        }
        instruction = strip_quotes(trim(response.text));
    }
    if (instruction.empty()) {
        throw TrialError("attempt " + std::to_string(attempt_index) +
                         ": the LM proposed an empty instruction twice");
    }
    PromptTemplate proposed = initial;
    proposed.instruction = instruction;
    return proposed;
}

}  // namespace

PromptTemplate propose_prompt_depth1(const PromptTemplate& initial,
                                     LmClient& lm,
                                     const LmRequest& request_defaults,
                                     RequestLog* log,
                                     size_t attempt_index) {
    return propose_from_meta(initial, depth1_meta_prompt(initial), lm, request_defaults, log,
                             attempt_index);
}

PromptTemplate propose_prompt_depth2(const PromptTemplate& initial,
                                     const std::vector<AttemptRecord>& ledger,
                                     LmClient& lm,
                                     const LmRequest& request_defaults,
                                     RequestLog* log,
                                     size_t attempt_index) {
    bool any_scored = false;
    for (const AttemptRecord& a : ledger) any_scored = any_scored || a.ok;
    if (!any_scored) {
        throw Error("propose_prompt_depth2: no scored attempts to condition on");
    }
    return propose_from_meta(initial, depth2_meta_prompt(ledger), lm, request_defaults, log,
                             attempt_index);
}

namespace {

nlohmann::json template_to_json(const PromptTemplate& tmpl) {
    return {{"instruction", tmpl.instruction},
            {"input_field_name", tmpl.input_field_name},
            {"output_prefix", tmpl.output_prefix},
            {"cot_enabled", tmpl.cot_enabled}};
}

PromptTemplate template_from_json(const nlohmann::json& j) {
    PromptTemplate tmpl;
    tmpl.instruction = j.at("instruction").get<std::string>();
    tmpl.input_field_name = j.at("input_field_name").get<std::string>();
    tmpl.output_prefix = j.at("output_prefix").get<std::string>();
    tmpl.cot_enabled = j.at("cot_enabled").get<bool>();
    return tmpl;
}

nlohmann::json attempt_to_json(const AttemptRecord& a) {
    return {{"index", a.index},
            {"status", a.ok ? "ok" : "failed"},
            {"template", template_to_json(a.prompt)},
            {"score", a.score},
            {"checkpoint", a.checkpoint_path},
            {"triplets", a.triplets_path},
            {"triplets_digest", a.triplets_digest},
            {"generation",
             {{"requested", a.generation.requested},
              {"generated", a.generation.generated},
              {"dropped", a.generation.dropped},
              {"fallback_parses", a.generation.fallback_parses}}},
            {"mining",
             {{"window_extended", a.mining.window_extended},
              {"random_filled", a.mining.random_filled}}},
            {"failure", a.failure}};
}

AttemptRecord attempt_from_json(const nlohmann::json& j) {
    AttemptRecord a;
    a.index = j.at("index").get<size_t>();
    a.ok = j.at("status").get<std::string>() == "ok";
    a.prompt = template_from_json(j.at("template"));
    a.score = j.at("score").get<double>();
    a.checkpoint_path = j.at("checkpoint").get<std::string>();
    a.triplets_path = j.at("triplets").get<std::string>();
    a.triplets_digest = j.at("triplets_digest").get<std::string>();
    a.generation.requested = j.at("generation").at("requested").get<size_t>();
    a.generation.generated = j.at("generation").at("generated").get<size_t>();
    a.generation.dropped = j.at("generation").at("dropped").get<size_t>();
    a.generation.fallback_parses = j.at("generation").at("fallback_parses").get<size_t>();
    a.mining.window_extended = j.at("mining").at("window_extended").get<size_t>();
    a.mining.random_filled = j.at("mining").at("random_filled").get<size_t>();
    a.failure = j.at("failure").get<std::string>();
    return a;
}

nlohmann::json config_snapshot(const PathConfig& cfg,
                               const PathModuleConfigs& modules,
                               const PromptTemplate& initial) {
    nlohmann::json j;
    j["path"] = {{"trials", cfg.trials},
                 {"depth", cfg.depth},
                 {"breadth", cfg.breadth},
                 {"include_initial", cfg.include_initial},
                 {"dprime_size", cfg.dprime_size},
                 {"seed", cfg.seed},
                 {"jobs", cfg.jobs}};
    j["initial_template"] = template_to_json(initial);
    j["mining"] = {{"m", modules.mining.m},
                   {"window_lo", modules.mining.window_lo},
                   {"window_hi", modules.mining.window_hi}};
    j["trainer"] = {{"learning_rate", modules.trainer.learning_rate},
                    {"warmup_ratio", modules.trainer.warmup_ratio},
                    {"epochs", modules.trainer.epochs},
                    {"validate_every", modules.trainer.validate_every},
                    {"batch", modules.trainer.batch},
                    {"optimizer",
                     modules.trainer.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"}};
    j["eval"] = {{"k", modules.eval.k},
                 {"rerank_depth", modules.eval.rerank_depth},
                 {"gain", gain_name(modules.eval.gain)}};
    j["model"] = {{"kind", model_kind_name(modules.model.kind)},
                  {"hidden", modules.model.hidden}};
    j["lm"] = {{"generation",
                {{"model", modules.generation_request.model},
                 {"temperature", modules.generation_request.temperature},
                 {"max_tokens", modules.generation_request.max_tokens}}},
               {"proposal",
                {{"model", modules.proposal_request.model},
                 {"temperature", modules.proposal_request.temperature},
                 {"max_tokens", modules.proposal_request.max_tokens}}}};
    return j;
}

struct Ledger {
    std::string path;
    std::string config_digest;
    std::vector<AttemptRecord> attempts;

    void append(const AttemptRecord& a) {
        append_file(path, attempt_to_json(a).dump() + "\n");
        attempts.push_back(a);
    }
};

Ledger open_ledger(const std::string& out_dir, const std::string& config_digest) {
    Ledger ledger;
    ledger.path = out_dir + "/ledger.jsonl";
    ledger.config_digest = config_digest;
    if (!file_exists(ledger.path)) {
        nlohmann::json header = {{"header", true}, {"config_digest", config_digest}};
        write_file(ledger.path, header.dump() + "\n");
        return ledger;
    }
    std::istringstream in(read_file(ledger.path));
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError(ledger.path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (line_no == 1) {
            if (!j.is_object() || !j.value("header", false)) {
                throw IoError(ledger.path + ": first line must be the ledger header");
            }
            const std::string found = j.value("config_digest", "");
            if (found != config_digest) {
                throw Error("ledger " + ledger.path +
                            " was written by a different configuration (digest " + found +
                            " vs " + config_digest + "); use a fresh --out-dir");
            }
            continue;
        }
        try {
            ledger.attempts.push_back(attempt_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(ledger.path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ledger;
}

}  // namespace

PathResult run_path(const Bm25Index& index,
                    const JudgmentSet& judgments,
                    const PromptTemplate& initial,
                    const PathConfig& cfg,
                    const PathModuleConfigs& modules,
                    LmClient& lm,
                    const std::string& out_dir) {
    cfg.validate();
    modules.mining.validate();
    modules.trainer.validate();
    modules.eval.validate();
    if (judgments.positive_query_ids().empty()) {
        throw Error("run_path: the judgment set has no positive judgments to validate against");
    }
    if (index.doc_count() == 0) throw Error("run_path: empty index");
    ensure_dir(out_dir);

    const nlohmann::json config = config_snapshot(cfg, modules, initial);
    const std::string config_digest = digest_hex(config.dump());
    RequestLog log(out_dir + "/lm_requests.jsonl", lm.deterministic());

    // D' is drawn once; every trial trains on the same passages so score
    // differences are attributable to the prompt alone.
    const std::vector<Document>& docs = index.docs();
    const size_t sample_size = std::min(cfg.dprime_size, docs.size());
    Rng dprime_rng(Rng::derive_seed(cfg.seed, fnv1a64("dprime")));
    std::vector<Document> dprime;
    std::string dprime_ids_joined;
    nlohmann::json dprime_ids = nlohmann::json::array();
    for (size_t i : dprime_rng.sample_indices(docs.size(), sample_size)) {
        dprime.push_back(docs[i]);
        dprime_ids_joined += docs[i].doc_id;
        dprime_ids_joined += '\n';
        dprime_ids.push_back(docs[i].doc_id);
    }

    Ledger ledger = open_ledger(out_dir, config_digest);
    const size_t expected_attempts = cfg.attempt_count();
    if (ledger.attempts.size() > expected_attempts) {
        throw Error("ledger " + ledger.path + " holds " +
                    std::to_string(ledger.attempts.size()) + " attempts but the configuration " +
                    "allows only " + std::to_string(expected_attempts));
    }

    const uint64_t model_init_seed = Rng::derive_seed(cfg.seed, fnv1a64("model-init"));

    auto run_trial = [&](size_t attempt_index, const PromptTemplate& prompt) {
        AttemptRecord record;
        record.index = attempt_index;
        record.prompt = prompt;
        const std::string attempt_dir = "attempt_" + std::to_string(attempt_index);
        try {
            GenerationResult gen = generate_queries(prompt, dprime, lm,
                                                    modules.generation_request, &log, cfg.jobs);
            record.generation = gen.summary;
            TripletResult data =
                build_triplets(gen.queries, index, modules.mining,
                               Rng::derive_seed(cfg.seed, fnv1a64("mining") + attempt_index));
            record.mining = data.counters;
            ensure_dir(out_dir + "/" + attempt_dir);
            record.triplets_path = attempt_dir + "/triplets.tsv";
            write_triplets(data.triplets, out_dir + "/" + record.triplets_path);
            record.triplets_digest = digest_hex(read_file(out_dir + "/" + record.triplets_path));

            TrainerConfig trainer = modules.trainer;
            trainer.seed = Rng::derive_seed(cfg.seed, fnv1a64("trainer") + attempt_index);
            RerankerModel model = train(init_model(modules.model, model_init_seed),
                                        data.triplets, trainer, judgments, index, modules.eval);
            record.checkpoint_path = attempt_dir + "/checkpoint.json";
            save_checkpoint(model, out_dir + "/" + record.checkpoint_path);
            record.score = model.meta.selected_score;
            record.ok = true;
        } catch (const Error& e) {
            record.ok = false;
            record.failure = e.what();
            record.score = 0.0;
        }
        ledger.append(record);
    };

    // Attempt plan: attempt 0 is the unmodified initial instruction when
    // include_initial; the remaining cfg.trials attempts are LM proposals,
    // chunked into rounds of cfg.breadth at depth 2. A round's proposals all
    // see the ledger as of the round start.
    size_t next_attempt = ledger.attempts.size();
    if (cfg.include_initial && next_attempt == 0) {
        run_trial(0, initial);
        next_attempt = 1;
    }
    const size_t first_proposal = cfg.include_initial ? 1 : 0;
    const size_t round_size = cfg.depth == 2 ? cfg.breadth : cfg.trials;
    while (next_attempt < expected_attempts) {
        const size_t proposal_ordinal = next_attempt - first_proposal;
        const size_t round_begin = first_proposal + (proposal_ordinal / round_size) * round_size;
        const size_t round_end = std::min(round_begin + round_size, expected_attempts);
        std::vector<AttemptRecord> snapshot(ledger.attempts.begin(),
                                            ledger.attempts.begin() +
                                                static_cast<long>(std::min(round_begin,
                                                                           ledger.attempts.size())));
        bool snapshot_scored = false;
        for (const AttemptRecord& a : snapshot) snapshot_scored = snapshot_scored || a.ok;
        for (size_t i = next_attempt; i < round_end; ++i) {
            try {
                PromptTemplate prompt =
                    (cfg.depth == 2 && snapshot_scored)
                        ? propose_prompt_depth2(initial, snapshot, lm, modules.proposal_request,
                                                &log, i)
                        : propose_prompt_depth1(initial, lm, modules.proposal_request, &log, i);
                run_trial(i, prompt);
            } catch (const Error& e) {
                AttemptRecord record;
                record.index = i;
                record.ok = false;
                record.prompt = initial;
                record.failure = e.what();
                ledger.append(record);
            }
        }
        next_attempt = round_end;
    }

    // Selection: highest score among successful attempts, earliest index wins
    // ties.
    const AttemptRecord* selected = nullptr;
    for (const AttemptRecord& a : ledger.attempts) {
        if (a.ok && (!selected || a.score > selected->score)) selected = &a;
    }
    if (!selected) {
        throw Error("run_path: every attempt failed; see " + ledger.path);
    }

    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["config"] = config;
    manifest["config_digest"] = config_digest;
    manifest["corpus_digest"] = index.corpus_digest();
    manifest["dprime"] = {{"seed_stream", "dprime"},
                          {"size", sample_size},
                          {"doc_ids", std::move(dprime_ids)},
                          {"digest", digest_hex(dprime_ids_joined)}};
    nlohmann::json attempts = nlohmann::json::array();
    for (const AttemptRecord& a : ledger.attempts) attempts.push_back(attempt_to_json(a));
    manifest["attempts"] = std::move(attempts);
    manifest["selected_index"] = selected->index;
    manifest["selected_checkpoint"] = selected->checkpoint_path;
    manifest["selected_score"] = selected->score;
    const std::string manifest_path = out_dir + "/manifest.json";
    write_file(manifest_path, manifest.dump(2) + "\n");

    PathResult result;
    result.selected = load_checkpoint(out_dir + "/" + selected->checkpoint_path);
    result.selected_index = selected->index;
    result.attempts = ledger.attempts;
    result.manifest_path = manifest_path;
    result.ledger_path = ledger.path;
    return result;
}

EvalReport evaluate_final(const RerankerModel& selected,
                          const JudgmentSet& test,
                          const JudgmentSet& validation,
                          const Bm25Index& index,
                          const EvalConfig& cfg,
                          const std::string& ledger_digest) {
    std::unordered_set<std::string> validation_ids(validation.query_ids().begin(),
                                                   validation.query_ids().end());
    for (const std::string& query_id : test.query_ids()) {
        if (validation_ids.count(query_id)) {
            throw Error("evaluate_final: test query \"" + query_id +
                        "\" also appears in the validation set; held-out evaluation "
                        "requires disjoint queries");
        }
    }
    EvalReport report = avg_ndcg(selected, test, index, cfg);
    report.ledger_digest = ledger_digest;
    return report;
}

}  // namespace path
