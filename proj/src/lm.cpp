#include "path/lm.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "path/common.hpp"
#include "path/rng.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace path {

uint64_t template_hash(const PromptTemplate& tmpl) {
    uint64_t h = fnv1a64(tmpl.instruction);
    h = fnv1a64(tmpl.input_field_name, h);
    h = fnv1a64(tmpl.output_prefix, h);
    h = fnv1a64(tmpl.cot_enabled ? "cot" : "plain", h);
    return h;
}

std::vector<LmMessage> render_prompt(const PromptTemplate& tmpl, std::string_view passage) {
    if (passage.empty()) throw Error("render_prompt: empty passage");
    if (tmpl.cot_enabled && tmpl.output_prefix.empty()) {
        throw ConfigError("prompt template: output_prefix must be non-empty when "
                          "chain-of-thought is enabled");
    }
    std::string user = tmpl.input_field_name + ": " + std::string(passage) + "\n\n";
    if (tmpl.cot_enabled) {
        user += "Reasoning: Let's think step by step.\n";
    }
    user += tmpl.output_prefix;
    return {LmMessage{"system", tmpl.instruction}, LmMessage{"user", std::move(user)}};
}

ParsedQuery parse_query(const PromptTemplate& tmpl, std::string_view completion) {
    std::string_view extracted;
    bool fallback = false;
    size_t pos = tmpl.output_prefix.empty() ? std::string_view::npos
                                            : completion.rfind(tmpl.output_prefix);
    if (pos == std::string_view::npos) {
        extracted = completion;
        fallback = true;
    } else {
        extracted = completion.substr(pos + tmpl.output_prefix.size());
        size_t eol = extracted.find('\n');
        if (eol != std::string_view::npos) extracted = extracted.substr(0, eol);
    }
    std::string text = trim(extracted);
    if (text.empty()) {
        throw LmError("parse_query: no query text after prefix \"" + tmpl.output_prefix + "\"");
    }
    return ParsedQuery{std::move(text), fallback};
}

// --- Mock LM -----------------------------------------------------------

namespace {

MockMode parse_mode(const std::string& s, const std::string& where) {
    if (s == "fixed") return MockMode::Fixed;
    if (s == "echo_head") return MockMode::EchoHead;
    if (s == "junk_hash") return MockMode::JunkHash;
    throw ConfigError(where + ": unknown mock mode \"" + s +
                      "\" (expected fixed | echo_head | junk_hash)");
}

MockRule parse_rule(const nlohmann::json& j, const std::string& where) {
    MockRule rule;
    rule.contains = j.value("contains", "");
    rule.mode = parse_mode(j.value("mode", "echo_head"), where);
    rule.k = j.value("k", rule.mode == MockMode::JunkHash ? size_t{4} : size_t{8});
    if (rule.k == 0) throw ConfigError(where + ": k must be >= 1");
    rule.text = j.value("text", "");
    if (rule.mode == MockMode::Fixed && rule.text.empty()) {
        throw ConfigError(where + ": fixed rule needs non-empty \"text\"");
    }
    return rule;
}

// The user message is always "{field}: {passage}\n\n{tail}" where the tail
// contains no blank line, so the final "\n\n" delimits the passage exactly.
std::string_view passage_of(std::string_view user_content) {
    size_t start = user_content.find(": ");
    start = start == std::string_view::npos ? 0 : start + 2;
    size_t end = user_content.rfind("\n\n");
    if (end == std::string_view::npos || end < start) end = user_content.size();
    return user_content.substr(start, end - start);
}

std::string_view cue_of(std::string_view user_content) {
    size_t nl = user_content.rfind('\n');
    return nl == std::string_view::npos ? user_content : user_content.substr(nl + 1);
}

}  // namespace

MockLmScript load_mock_script(const std::string& file_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("mock script " + file_path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("mock script " + file_path + ": expected an object");
    MockLmScript script;
    if (j.contains("default")) {
        script.fallback = parse_rule(j["default"], file_path + " (default)");
    }
    size_t n = 0;
    for (const auto& rj : j.value("rules", nlohmann::json::array())) {
        MockRule rule = parse_rule(rj, file_path + " (rule " + std::to_string(n) + ")");
        if (rule.contains.empty()) {
            throw ConfigError(file_path + " (rule " + std::to_string(n) +
                              "): \"contains\" must be non-empty");
        }
        script.rules.push_back(std::move(rule));
        ++n;
    }
    return script;
}

LmResponse MockLm::complete(const LmRequest& request) {
    std::string matched;  // system + user content, the matching surface
    std::string user_content;
    for (const LmMessage& m : request.messages) {
        if (!matched.empty()) matched += "\n";
        matched += m.content;
        if (m.role == "user") user_content = m.content;
    }
    const MockRule* rule = &script_.fallback;
    for (const MockRule& r : script_.rules) {
        if (matched.find(r.contains) != std::string::npos) {
            rule = &r;
            break;
        }
    }

    std::string completion;
    switch (rule->mode) {
        case MockMode::Fixed:
            completion = rule->text;
            break;
        case MockMode::EchoHead: {
            std::vector<std::string> tokens = split_ws(passage_of(user_content));
            std::string cue(cue_of(user_content));
            completion = cue;
            for (size_t i = 0; i < tokens.size() && i < rule->k; ++i) {
                completion += " " + tokens[i];
            }
            break;
        }
        case MockMode::JunkHash: {
            uint64_t h = fnv1a64(matched);
            std::string cue(cue_of(user_content));
            completion = cue;
            for (size_t i = 0; i < rule->k; ++i) {
                completion += " qz" + to_hex(Rng::mix(h + i)).substr(0, 8);
            }
            break;
        }
    }
    LmResponse response;
    response.text = std::move(completion);
    response.prompt_tokens = static_cast<int>(split_ws(matched).size());
    response.completion_tokens = static_cast<int>(split_ws(response.text).size());
    response.attempts = 1;
    return response;
}

// --- HTTP LM -----------------------------------------------------------

HttpLm::HttpLm(HttpLmConfig config) : config_(std::move(config)) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

LmResponse HttpLm::complete(const LmRequest& request) {
    nlohmann::json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    nlohmann::json messages = nlohmann::json::array();
    for (const LmMessage& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_failure = "no attempt made";
    int backoff_ms = config_.initial_backoff_ms;
    const int max_attempts = config_.max_retries + 1;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms = std::min(backoff_ms * 2, config_.max_backoff_ms);
        }
        httplib::Client client(config_.endpoint);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);

        httplib::Result result =
            client.Post("/v1/chat/completions", headers, payload, "application/json");
        if (!result) {
            last_failure = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        const int status = result->status;
        if (status == 401 || status == 403) {
            throw LmError("lm endpoint rejected credentials (HTTP " + std::to_string(status) +
                          "); check $" + config_.api_key_env);
        }
        if (status == 408 || status == 429 || status >= 500) {
            last_failure = "HTTP " + std::to_string(status);
            continue;
        }
        if (status != 200) {
            throw LmError("lm endpoint returned HTTP " + std::to_string(status) + ": " +
                          result->body.substr(0, 200));
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(result->body);
            LmResponse response;
            response.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                response.prompt_tokens = j["usage"].value("prompt_tokens", 0);
                response.completion_tokens = j["usage"].value("completion_tokens", 0);
            }
            response.attempts = attempt;
            return response;
        } catch (const nlohmann::json::exception& e) {
            throw LmError(std::string("lm endpoint returned malformed completion JSON: ") +
                          e.what());
        }
    }
    throw LmError("lm request failed after " + std::to_string(max_attempts) +
                  " attempts; last failure: " + last_failure);
}

// --- Request log -------------------------------------------------------

RequestLog::RequestLog(std::string file_path, bool deterministic_timestamps)
    : file_path_(std::move(file_path)), deterministic_(deterministic_timestamps) {
    ensure_parent_dir(file_path_);
}

void RequestLog::append(LmLogRecord record) {
    std::lock_guard<std::mutex> lock(mutex_);
    record.seq = next_seq_++;
    record.timestamp = deterministic_ ? "" : rfc3339_utc_now();
    nlohmann::json j;
    j["seq"] = record.seq;
    j["timestamp"] = record.timestamp;
    j["template_hash"] = record.template_hash_hex;
    j["passage_id"] = record.passage_id;
    j["model"] = record.model;
    j["temperature"] = record.temperature;
    j["max_tokens"] = record.max_tokens;
    nlohmann::json prompt = nlohmann::json::array();
    for (const LmMessage& m : record.prompt) {
        prompt.push_back({{"role", m.role}, {"content", m.content}});
    }
    j["prompt"] = std::move(prompt);
    j["completion"] = record.completion;
    j["attempts"] = record.attempts;
    j["parse_status"] = record.parse_status;
    append_file(file_path_, j.dump() + "\n");
}

std::string rfc3339_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

}  // namespace path
