#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace path {

// Prompt scaffolding for synthetic-query generation. The instruction is the
// piece the optimizer rewrites; the structural fields stay fixed.
struct PromptTemplate {
    std::string instruction;
    std::string input_field_name = "Passage";
    std::string output_prefix = "Query:";
    bool cot_enabled = true;

    bool operator==(const PromptTemplate&) const = default;
};

uint64_t template_hash(const PromptTemplate& tmpl);

struct LmMessage {
    std::string role;
    std::string content;

    bool operator==(const LmMessage&) const = default;
};

struct LmRequest {
    std::vector<LmMessage> messages;
    std::string model = "mock";
    double temperature = 0.7;
    int max_tokens = 256;
};

struct LmResponse {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    int attempts = 1;  // transport attempts it took to obtain this response
};

// Rendered layout (fixed; the parser depends on it):
//   system: {instruction}
//   user:   {input_field_name}: {passage}\n\nReasoning: Let's think step by step.\n{output_prefix}
// or without the Reasoning line when cot_enabled is false.
std::vector<LmMessage> render_prompt(const PromptTemplate& tmpl, std::string_view passage);

struct ParsedQuery {
    std::string text;
    bool fallback = false;  // true when output_prefix was absent from the completion
};

// Extracts the query: text after the last occurrence of output_prefix, first
// line only, trimmed. Missing prefix falls back to the whole completion
// trimmed (flagged). Empty extraction throws LmError — the caller skips and
// counts the passage.
ParsedQuery parse_query(const PromptTemplate& tmpl, std::string_view completion);

class LmClient {
public:
    virtual ~LmClient() = default;
    virtual LmResponse complete(const LmRequest& request) = 0;
    // Deterministic clients promise identical responses for identical
    // requests; the request log drops wall-clock timestamps for them so whole
    // runs stay byte-reproducible.
    virtual bool deterministic() const = 0;
};

// --- Mock LM -----------------------------------------------------------

enum class MockMode { Fixed, EchoHead, JunkHash };

struct MockRule {
    std::string contains;  // substring matched against system + user content
    MockMode mode = MockMode::EchoHead;
    size_t k = 8;       // tokens taken (EchoHead) or emitted (JunkHash)
    std::string text;   // Fixed mode payload
};

struct MockLmScript {
    std::vector<MockRule> rules;  // first match wins
    MockRule fallback{"", MockMode::EchoHead, 8, ""};
};

MockLmScript load_mock_script(const std::string& file_path);

// Deterministic, offline stand-in for a chat endpoint. EchoHead answers with
// the cue line plus the first k whitespace tokens of the passage; JunkHash
// answers with k tokens derived from a hash of the request, so they match
// nothing in any natural corpus. Stateless, hence safe for concurrent calls.
class MockLm : public LmClient {
public:
    explicit MockLm(MockLmScript script) : script_(std::move(script)) {}

    LmResponse complete(const LmRequest& request) override;
    bool deterministic() const override { return true; }

private:
    MockLmScript script_;
};

// --- HTTP LM -----------------------------------------------------------

struct HttpLmConfig {
    std::string endpoint = "http://localhost:8000";  // scheme://host[:port]
    std::string api_key_env = "LM_API_KEY";
    int max_retries = 5;       // retries after the first attempt
    int initial_backoff_ms = 500;
    int max_backoff_ms = 8000;
    int timeout_seconds = 60;
};

// OpenAI-style chat-completions client: POST {endpoint}/v1/chat/completions.
// Retries transport failures and retryable statuses (408/429/5xx) with
// exponential backoff; authentication failures abort immediately.
class HttpLm : public LmClient {
public:
    explicit HttpLm(HttpLmConfig config);

    LmResponse complete(const LmRequest& request) override;
    bool deterministic() const override { return false; }

private:
    HttpLmConfig config_;
    std::string api_key_;
};

// --- Request log -------------------------------------------------------

struct LmLogRecord {
    uint64_t seq = 0;
    std::string timestamp;  // RFC3339 UTC; empty for deterministic clients
    std::string template_hash_hex;
    std::string passage_id;  // source doc id, or a label like "proposal:3"
    std::string model;
    double temperature = 0.0;
    int max_tokens = 0;
    std::vector<LmMessage> prompt;
    std::string completion;
    int attempts = 1;
    std::string parse_status;  // "parsed" | "fallback" | "empty" | "proposal"
};

// Append-only JSONL log of every LM call. Thread-safe; seq numbers reflect
// append order.
class RequestLog {
public:
    RequestLog(std::string file_path, bool deterministic_timestamps);

    void append(LmLogRecord record);  // fills seq and timestamp
    const std::string& file_path() const { return file_path_; }

private:
    std::string file_path_;
    bool deterministic_;
    uint64_t next_seq_ = 0;
    std::mutex mutex_;
};

std::string rfc3339_utc_now();

}  // namespace path
