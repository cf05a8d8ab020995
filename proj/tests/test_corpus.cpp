#include <doctest.h>

#include <algorithm>
#include <set>

#include "path/common.hpp"
#include "path/corpus.hpp"
#include "support/temp_dir.hpp"

using namespace path;
using testsupport::TempDir;

TEST_CASE("jsonl corpus round-trips through load and save") {
    TempDir dir("corpus");
    const std::string raw =
        R"({"doc_id": "a", "text": "alpha beta"})" "\n"
        R"({"doc_id": "b", "text": "gamma"})" "\n";
    write_file(dir.file("corpus.jsonl"), raw);

    Corpus corpus = load_corpus(dir.file("corpus.jsonl"));
    REQUIRE(corpus.size() == 2);
    CHECK(corpus.at(0).doc_id == "a");
    CHECK(corpus.at(0).text == "alpha beta");
    CHECK(corpus.at(1).doc_id == "b");
    CHECK(corpus.source_digest() == digest_hex(raw));
    CHECK(corpus.contains("b"));
    CHECK_FALSE(corpus.contains("c"));
    CHECK(corpus.ordinal_of("b") == size_t{1});

    save_corpus(corpus, dir.file("copy.jsonl"));
    Corpus copy = load_corpus(dir.file("copy.jsonl"));
    CHECK(copy.documents() == corpus.documents());
}

TEST_CASE("corpus loader rejects malformed input") {
    TempDir dir("corpus_bad");

    SUBCASE("duplicate doc_id") {
        write_file(dir.file("c.jsonl"),
                   R"({"doc_id": "a", "text": "x"})" "\n"
                   R"({"doc_id": "a", "text": "y"})" "\n");
        CHECK_THROWS_AS(load_corpus(dir.file("c.jsonl")), IoError);
    }
    SUBCASE("missing text field") {
        write_file(dir.file("c.jsonl"), R"({"doc_id": "a"})" "\n");
        CHECK_THROWS_AS(load_corpus(dir.file("c.jsonl")), IoError);
    }
    SUBCASE("broken json carries the line number") {
        write_file(dir.file("c.jsonl"),
                   R"({"doc_id": "a", "text": "x"})" "\n" "{nope\n");
        try {
            load_corpus(dir.file("c.jsonl"));
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SUBCASE("unknown format name") {
        write_file(dir.file("c.jsonl"), "");
        CHECK_THROWS_AS(load_corpus(dir.file("c.jsonl"), "xml"), ConfigError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_corpus(dir.file("absent.jsonl")), IoError);
    }
}

namespace {

Corpus tiny_corpus() {
    return Corpus({{"d1", "one"}, {"d2", "two"}, {"d3", "three"}, {"d4", "four"}}, "digest");
}

void write_fixture_judgments(const TempDir& dir) {
    write_file(dir.file("qrels.txt"),
               "q1 0 d1 2\n"
               "q1 0 d2 0\n"
               "q2 0 d3 1\n"
               "q3 0 d4 0\n");
    write_file(dir.file("queries.jsonl"),
               R"({"query_id": "q1", "text": "first query"})" "\n"
               R"({"query_id": "q2", "text": "second query"})" "\n"
               R"({"query_id": "q3", "text": "third query"})" "\n");
}

}  // namespace

TEST_CASE("qrels and query sidecar load into a judgment set") {
    TempDir dir("judgments");
    write_fixture_judgments(dir);
    Corpus corpus = tiny_corpus();

    JudgmentSet set = load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus);
    REQUIRE(set.size() == 4);
    CHECK(set.query_ids() == std::vector<std::string>{"q1", "q2", "q3"});
    CHECK(set.text_of("q2") == "second query");
    CHECK(set.judgments_for("q1").size() == 2);
    CHECK(set.judgments()[0].grade == doctest::Approx(2.0));

    // q3's only judgment is grade 0: judged, but not a positive.
    CHECK(set.positive_query_ids() == std::vector<std::string>{"q1", "q2"});
    std::vector<RelevanceJudgment> positives = set.positive_judgments();
    REQUIRE(positives.size() == 2);
    CHECK(positives[0].doc_id == "d1");
    CHECK(positives[1].doc_id == "d3");

    SUBCASE("a higher positive floor shrinks the positive pool") {
        JudgmentSet strict =
            load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus, 2.0);
        CHECK(strict.positive_query_ids() == std::vector<std::string>{"q1"});
        CHECK(strict.size() == 4);  // low grades are kept for evaluation
    }

    SUBCASE("round-trips through save_judgments") {
        save_judgments(set, dir.file("qrels2.txt"), dir.file("queries2.jsonl"));
        JudgmentSet again =
            load_judgments(dir.file("qrels2.txt"), dir.file("queries2.jsonl"), corpus);
        CHECK(again.judgments() == set.judgments());
        CHECK(again.query_ids() == set.query_ids());
    }
}

TEST_CASE("judgment loading verifies references") {
    TempDir dir("judgments_bad");
    Corpus corpus = tiny_corpus();

    SUBCASE("judged doc missing from corpus") {
        write_file(dir.file("qrels.txt"), "q1 0 ghost 1\n");
        write_file(dir.file("queries.jsonl"), R"({"query_id": "q1", "text": "t"})" "\n");
        CHECK_THROWS_AS(
            load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus), IoError);
    }
    SUBCASE("judged query missing from the sidecar") {
        write_file(dir.file("qrels.txt"), "q1 0 d1 1\n");
        write_file(dir.file("queries.jsonl"), R"({"query_id": "qX", "text": "t"})" "\n");
        CHECK_THROWS_AS(
            load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus), IoError);
    }
    SUBCASE("short qrels line") {
        write_file(dir.file("qrels.txt"), "q1 0 d1\n");
        write_file(dir.file("queries.jsonl"), R"({"query_id": "q1", "text": "t"})" "\n");
        CHECK_THROWS_AS(
            load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus), IoError);
    }
    SUBCASE("non-numeric grade") {
        write_file(dir.file("qrels.txt"), "q1 0 d1 high\n");
        write_file(dir.file("queries.jsonl"), R"({"query_id": "q1", "text": "t"})" "\n");
        CHECK_THROWS_AS(
            load_judgments(dir.file("qrels.txt"), dir.file("queries.jsonl"), corpus), IoError);
    }
}

TEST_CASE("judgment sampling is seeded and keeps whole queries") {
    std::vector<RelevanceJudgment> judgments;
    std::map<std::string, std::string> texts;
    for (int i = 0; i < 30; ++i) {
        std::string qid = "q" + std::to_string(i);
        judgments.push_back({qid, "d1", 1.0});
        judgments.push_back({qid, "d2", 0.0});
        texts[qid] = "text " + std::to_string(i);
    }
    JudgmentSet set(judgments, texts, 1.0);

    JudgmentSet a = sample_judgments(set, 10, 42);
    JudgmentSet b = sample_judgments(set, 10, 42);
    JudgmentSet c = sample_judgments(set, 10, 43);

    CHECK(a.query_ids().size() == 10);
    CHECK(a.size() == 20);  // both judgments of each sampled query survive
    CHECK(a.judgments() == b.judgments());
    CHECK(a.judgments() != c.judgments());
    for (const std::string& qid : a.query_ids()) {
        CHECK(set.has_query(qid));
        CHECK(a.text_of(qid) == set.text_of(qid));
    }

    SUBCASE("asking for more positives than exist is an error, not a clamp") {
        CHECK_THROWS_WITH_AS(sample_judgments(set, 100, 7),
                             doctest::Contains("only 30 positive queries"), Error);
    }
}

TEST_CASE("document sampling is seeded, distinct, and clamped") {
    std::vector<Document> docs;
    for (int i = 0; i < 100; ++i) {
        docs.push_back({"d" + std::to_string(i), "text"});
    }
    Corpus corpus(docs, "digest");

    std::vector<Document> a = sample_documents(corpus, 25, 9);
    std::vector<Document> b = sample_documents(corpus, 25, 9);
    CHECK(a == b);
    CHECK(a.size() == 25);

    std::set<std::string> ids;
    for (const Document& d : a) ids.insert(d.doc_id);
    CHECK(ids.size() == 25);

    CHECK(sample_documents(corpus, 500, 9).size() == 100);
}

TEST_CASE("sample manifest records seed, size, and chosen ids") {
    TempDir dir("manifest");
    Corpus corpus = tiny_corpus();
    std::vector<Document> sample = sample_documents(corpus, 2, 5);
    write_sample_manifest(corpus, sample, 5, dir.file("sample.json"));

    const std::string body = read_file(dir.file("sample.json"));
    CHECK(body.find("\"seed\"") != std::string::npos);
    CHECK(body.find(corpus.source_digest()) != std::string::npos);
    for (const Document& d : sample) {
        CHECK(body.find("\"" + d.doc_id + "\"") != std::string::npos);
    }
}
