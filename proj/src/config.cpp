#include "path/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "path/common.hpp"

namespace path {

namespace {

struct RawValue {
    enum class Kind { String, Number, Bool } kind;
    std::string text;   // String
    double number = 0;  // Number
    bool flag = false;  // Bool
};

std::string type_name(RawValue::Kind kind) {
    switch (kind) {
        case RawValue::Kind::String: return "string";
        case RawValue::Kind::Number: return "number";
        case RawValue::Kind::Bool: return "boolean";
    }
    return "?";
}

// One setter per known key; throws on type mismatch so the message names the
// exact key.
class Schema {
public:
    using Setter = std::function<void(const RawValue&)>;

    void add(const std::string& key, Setter setter) { setters_[key] = std::move(setter); }

    void apply(const std::string& origin, const std::string& key, const RawValue& value) const {
        auto it = setters_.find(key);
        if (it == setters_.end()) {
            throw ConfigError(origin + ": unknown key \"" + key + "\"");
        }
        try {
            it->second(value);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(origin + ": " + key + ": " + e.what());
        }
    }

private:
    std::map<std::string, Setter> setters_;
};

Error type_error(const std::string& expected, const RawValue& got) {
    return Error("expected " + expected + ", got " + type_name(got.kind));
}

Schema::Setter set_string(std::string& target) {
    return [&target](const RawValue& v) {
        if (v.kind != RawValue::Kind::String) throw type_error("string", v);
        target = v.text;
    };
}

Schema::Setter set_double(double& target) {
    return [&target](const RawValue& v) {
        if (v.kind != RawValue::Kind::Number) throw type_error("number", v);
        target = v.number;
    };
}

Schema::Setter set_bool(bool& target) {
    return [&target](const RawValue& v) {
        if (v.kind != RawValue::Kind::Bool) throw type_error("true/false", v);
        target = v.flag;
    };
}

template <typename Int>
Schema::Setter set_integer(Int& target) {
    return [&target](const RawValue& v) {
        if (v.kind != RawValue::Kind::Number) throw type_error("integer", v);
        const Int cast = static_cast<Int>(v.number);
        if (static_cast<double>(cast) != v.number) {
            throw Error("expected a whole number, got " + format_fixed(v.number, 6));
        }
        target = cast;
    };
}

Schema build_schema(RunConfig& cfg) {
    Schema schema;
    schema.add("corpus.path", set_string(cfg.corpus_path));
    schema.add("corpus.qrels", set_string(cfg.qrels_path));
    schema.add("corpus.queries", set_string(cfg.queries_path));
    schema.add("corpus.format", set_string(cfg.corpus_format));
    schema.add("corpus.positive_floor", set_double(cfg.positive_floor));

    schema.add("bm25.k1", set_double(cfg.bm25.k1));
    schema.add("bm25.b", set_double(cfg.bm25.b));
    schema.add("bm25.lowercase", set_bool(cfg.tokenizer.lowercase));

    schema.add("lm.endpoint", set_string(cfg.http.endpoint));
    schema.add("lm.api_key_env", set_string(cfg.http.api_key_env));
    schema.add("lm.max_retries", set_integer(cfg.http.max_retries));
    schema.add("lm.initial_backoff_ms", set_integer(cfg.http.initial_backoff_ms));
    schema.add("lm.max_backoff_ms", set_integer(cfg.http.max_backoff_ms));
    schema.add("lm.timeout_seconds", set_integer(cfg.http.timeout_seconds));
    schema.add("lm.model", set_string(cfg.lm_model));
    schema.add("lm.temperature", set_double(cfg.temperature));
    schema.add("lm.proposal_temperature", set_double(cfg.proposal_temperature));
    schema.add("lm.max_tokens", set_integer(cfg.max_tokens));

    schema.add("prompt.instruction", set_string(cfg.prompt.instruction));
    schema.add("prompt.input_field", set_string(cfg.prompt.input_field_name));
    schema.add("prompt.output_prefix", set_string(cfg.prompt.output_prefix));
    schema.add("prompt.cot", set_bool(cfg.prompt.cot_enabled));

    schema.add("mining.m", set_integer(cfg.mining.m));
    schema.add("mining.window_lo", set_integer(cfg.mining.window_lo));
    schema.add("mining.window_hi", set_integer(cfg.mining.window_hi));

    schema.add("trainer.learning_rate", set_double(cfg.trainer.learning_rate));
    schema.add("trainer.warmup_ratio", set_double(cfg.trainer.warmup_ratio));
    schema.add("trainer.epochs", set_integer(cfg.trainer.epochs));
    schema.add("trainer.validate_every", set_double(cfg.trainer.validate_every));
    schema.add("trainer.batch", set_integer(cfg.trainer.batch));
    schema.add("trainer.optimizer", Schema::Setter([&cfg](const RawValue& v) {
                   if (v.kind != RawValue::Kind::String) throw type_error("string", v);
                   if (v.text == "sgd") {
                       cfg.trainer.optimizer = OptimizerKind::Sgd;
                   } else if (v.text == "adam") {
                       cfg.trainer.optimizer = OptimizerKind::Adam;
                   } else {
                       throw Error("expected \"sgd\" or \"adam\", got \"" + v.text + "\"");
                   }
               }));
    schema.add("trainer.max_steps", Schema::Setter([&cfg](const RawValue& v) {
                   if (v.kind != RawValue::Kind::Number) throw type_error("integer", v);
                   const auto steps = static_cast<uint64_t>(v.number);
                   if (static_cast<double>(steps) != v.number) {
                       throw Error("expected a whole number");
                   }
                   if (steps == 0) {
                       cfg.trainer.max_steps.reset();  // 0 = no cap
                   } else {
                       cfg.trainer.max_steps = steps;
                   }
               }));
    schema.add("trainer.model", Schema::Setter([&cfg](const RawValue& v) {
                   if (v.kind != RawValue::Kind::String) throw type_error("string", v);
                   cfg.model.kind = model_kind_from_name(v.text);
               }));
    schema.add("trainer.hidden", set_integer(cfg.model.hidden));

    schema.add("eval.k", set_integer(cfg.eval.k));
    schema.add("eval.rerank_depth", set_integer(cfg.eval.rerank_depth));
    schema.add("eval.gain", Schema::Setter([&cfg](const RawValue& v) {
                   if (v.kind != RawValue::Kind::String) throw type_error("string", v);
                   cfg.eval.gain = gain_from_name(v.text);
               }));

    schema.add("path.trials", set_integer(cfg.path.trials));
    schema.add("path.depth", set_integer(cfg.path.depth));
    schema.add("path.breadth", set_integer(cfg.path.breadth));
    schema.add("path.include_initial", set_bool(cfg.path.include_initial));
    schema.add("path.dprime_size", set_integer(cfg.path.dprime_size));

    schema.add("external.command", set_string(cfg.external_command));
    schema.add("external.timeout_seconds", set_integer(cfg.external_timeout_seconds));

    schema.add("run.seed", set_integer(cfg.seed));
    schema.add("run.jobs", set_integer(cfg.jobs));
    return schema;
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (c == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

RawValue parse_value(const std::string& text, const std::string& origin) {
    RawValue v{};
    if (text.empty()) throw ConfigError(origin + ": missing value");
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"') {
            throw ConfigError(origin + ": unterminated string");
        }
        v.kind = RawValue::Kind::String;
        for (size_t i = 1; i + 1 < text.size(); ++i) {
            char c = text[i];
            if (c == '\\') {
                if (i + 2 >= text.size()) throw ConfigError(origin + ": dangling escape");
                const char e = text[++i];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default:
                        throw ConfigError(origin + ": unsupported escape \\" + std::string(1, e));
                }
            }
            v.text.push_back(c);
        }
        return v;
    }
    if (text == "true" || text == "false") {
        v.kind = RawValue::Kind::Bool;
        v.flag = text == "true";
        return v;
    }
    try {
        size_t consumed = 0;
        v.number = std::stod(text, &consumed);
        if (consumed != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ConfigError(origin + ": cannot parse value \"" + text +
                          "\" (strings need double quotes)");
    }
    v.kind = RawValue::Kind::Number;
    return v;
}

}  // namespace

RunConfig parse_config(const std::string& content, const std::string& origin) {
    RunConfig cfg;
    Schema schema = build_schema(cfg);
    std::istringstream in(content);
    std::string line;
    std::string section;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        const std::string stripped = trim(strip_comment(line));
        if (stripped.empty()) continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']' || stripped.size() < 3) {
                throw ConfigError(where + ": malformed section header \"" + stripped + "\"");
            }
            section = trim(std::string_view(stripped).substr(1, stripped.size() - 2));
            continue;
        }
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected key = value");
        }
        const std::string key = trim(std::string_view(stripped).substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (section.empty()) {
            throw ConfigError(where + ": key \"" + key + "\" appears before any [section]");
        }
        const RawValue value =
            parse_value(trim(std::string_view(stripped).substr(eq + 1)), where);
        schema.apply(where, section + "." + key, value);
    }
    cfg.resolve();
    return cfg;
}

RunConfig load_config(const std::string& file_path) {
    return parse_config(read_file(file_path), file_path);
}

void RunConfig::resolve() {
    path.seed = seed;
    path.jobs = jobs;
    trainer.seed = seed;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["corpus"] = {{"path", corpus_path},
                   {"qrels", qrels_path},
                   {"queries", queries_path},
                   {"format", corpus_format},
                   {"positive_floor", positive_floor}};
    j["bm25"] = {{"k1", bm25.k1}, {"b", bm25.b}, {"lowercase", tokenizer.lowercase}};
    j["lm"] = {{"endpoint", http.endpoint},
               {"api_key_env", http.api_key_env},
               {"max_retries", http.max_retries},
               {"initial_backoff_ms", http.initial_backoff_ms},
               {"max_backoff_ms", http.max_backoff_ms},
               {"timeout_seconds", http.timeout_seconds},
               {"model", lm_model},
               {"temperature", temperature},
               {"proposal_temperature", proposal_temperature},
               {"max_tokens", max_tokens}};
    j["prompt"] = {{"instruction", prompt.instruction},
                   {"input_field", prompt.input_field_name},
                   {"output_prefix", prompt.output_prefix},
                   {"cot", prompt.cot_enabled}};
    j["mining"] = {{"m", mining.m},
                   {"window_lo", mining.window_lo},
                   {"window_hi", mining.window_hi}};
    j["trainer"] = {{"learning_rate", trainer.learning_rate},
                    {"warmup_ratio", trainer.warmup_ratio},
                    {"epochs", trainer.epochs},
                    {"validate_every", trainer.validate_every},
                    {"batch", trainer.batch},
                    {"optimizer", trainer.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
                    {"max_steps", trainer.max_steps ? nlohmann::json(*trainer.max_steps)
                                                    : nlohmann::json(0)},
                    {"model", model_kind_name(model.kind)},
                    {"hidden", model.hidden}};
    j["eval"] = {{"k", eval.k},
                 {"rerank_depth", eval.rerank_depth},
                 {"gain", gain_name(eval.gain)}};
    j["path"] = {{"trials", path.trials},
                 {"depth", path.depth},
                 {"breadth", path.breadth},
                 {"include_initial", path.include_initial},
                 {"dprime_size", path.dprime_size}};
    j["external"] = {{"command", external_command},
                     {"timeout_seconds", external_timeout_seconds}};
    j["run"] = {{"seed", seed}, {"jobs", jobs}};
    return j;
}

LmRequest RunConfig::generation_request() const {
    LmRequest request;
    request.model = lm_model;
    request.temperature = temperature;
    request.max_tokens = max_tokens;
    return request;
}

LmRequest RunConfig::proposal_request() const {
    LmRequest request;
    request.model = lm_model;
    request.temperature = proposal_temperature;
    request.max_tokens = max_tokens;
    return request;
}

}  // namespace path
