// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <formbench/errors.hpp>
#include <formbench/synthetic.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace formbench;

namespace {

constexpr char kTerminate[] = R"([{"action": "Terminate"}])";

FormDocument one_field_doc()
{
    return test::document("one", { test::field("one:name", BBox(0.2, 0.2, 0.6, 0.3), test::normalized_spec("name"),
                                               "Name") });
}

Persona ann()
{
    return test::persona_of("ann", { { "name", "Ann Lee" } });
}

RunConfig iterative(int rounds = 5)
{
    RunConfig c;
    c.mode = EpisodeMode::Iterative;
    c.max_rounds = rounds;
    return c;
}

int count_parts_starting(const ModelRequest& req, std::string_view prefix)
{
    int n = 0;
    for (auto const& p: req.parts)
        if (p.kind == MessagePart::Kind::Text && p.text.starts_with(prefix))
            ++n;
    return n;
}

int count_images(const ModelRequest& req)
{
    int n = 0;
    for (auto const& p: req.parts)
        n += p.kind == MessagePart::Kind::Image ? 1 : 0;
    return n;
}

/// Fails with a retriable error `failures` times, then answers.
class FlakyClient final: public ModelClient
{
  public:
    FlakyClient(int failures, bool retriable): failures_(failures), retriable_(retriable) {}

    ModelResponse complete(const ModelRequest&) override
    {
        ++calls;
        if (calls <= failures_)
            throw ModelClientError("transient", retriable_);
        return { kTerminate, 1, 1 };
    }

    int calls = 0;

  private:
    int failures_;
    bool retriable_;
};

} // namespace

// {{{ prompt

TEST(Prompt, FirstIterativeRound)
{
    auto const doc = one_field_doc();
    auto const req = build_prompt(doc, ann(), iterative(), {}, 0);
    auto const text = req.text();
    EXPECT_NE(text.find("Feedback 1: []"), std::string::npos);
    EXPECT_NE(text.find("4 more rounds"), std::string::npos);
    EXPECT_EQ(text.find("This is your final action."), std::string::npos);
    EXPECT_NE(text.find("The name is: Ann Lee"), std::string::npos);
    EXPECT_GE(count_images(req), 1);
    EXPECT_EQ(req.doc_id, "one");
    EXPECT_EQ(req.persona_id, "ann");
}

TEST(Prompt, OneShotAndLastRound)
{
    auto const doc = one_field_doc();
    EXPECT_NE(build_prompt(doc, ann(), RunConfig {}, {}, 0).text().find("This is your final action."),
              std::string::npos);
    std::vector<std::vector<ActionFeedback>> history(4, std::vector<ActionFeedback> { {} });
    auto const last = build_prompt(doc, ann(), iterative(), history, 4).text();
    EXPECT_NE(last.find("This is your final action."), std::string::npos);
    EXPECT_NE(last.find("Feedback 4: "), std::string::npos);
    EXPECT_EQ(last.find("Feedback 5: "), std::string::npos);
}

TEST(Prompt, ToolsetDocumentation)
{
    auto const doc = one_field_doc();
    RunConfig ff;
    ff.toolset = Toolset::FieldFinder;
    auto const req = build_prompt(doc, ann(), ff, {}, 0);
    EXPECT_EQ(count_parts_starting(req, "PlaceText:"), 0);
    EXPECT_EQ(count_parts_starting(req, "SignOrInitial:"), 0);
    EXPECT_EQ(count_parts_starting(req, "PlaceByFieldName:"), 1);
    EXPECT_EQ(count_parts_starting(req, "DeleteText:"), 1);
    EXPECT_EQ(count_parts_starting(req, "Terminate:"), 1);

    auto const coords = build_prompt(doc, ann(), RunConfig {}, {}, 0);
    EXPECT_EQ(count_parts_starting(coords, "PlaceText:"), 1);
    EXPECT_EQ(count_parts_starting(coords, "PlaceByFieldName:"), 0);
}

TEST(Prompt, GroundTruthCentroids)
{
    auto const doc = one_field_doc();
    RunConfig gt;
    gt.toolset = Toolset::GtCoords;
    EXPECT_NE(build_prompt(doc, ann(), gt, {}, 0).text().find("Name: (0.4000, 0.2500)"), std::string::npos);
    EXPECT_EQ(build_prompt(doc, ann(), RunConfig {}, {}, 0).text().find("(0.4000, 0.2500)"), std::string::npos);
}

TEST(Prompt, SetOfMarksImage)
{
    auto const doc = one_field_doc();
    RunConfig som;
    som.toolset = Toolset::BaselineSom;
    auto const req = build_prompt(doc, ann(), som, {}, 0);
    ASSERT_EQ(count_images(req), 1);
    for (auto const& p: req.parts)
        if (p.kind == MessagePart::Kind::Image)
        {
            EXPECT_FALSE(identical(p.image, doc.image));
            EXPECT_TRUE(identical(p.image, overlay_set_of_marks(doc.image, som.grid_n)));
        }
}

TEST(Prompt, ImagePersonaMode)
{
    auto const doc = one_field_doc();
    RunConfig cfg;
    cfg.persona_mode = PersonaMode::Image;
    EXPECT_THROW(build_prompt(doc, ann(), cfg, {}, 0), ConfigError);
    Persona p = ann();
    p.source_images.push_back({ "lic", test::solid(10, 10, { 1, 2, 3 }), "images/lic.png" });
    EXPECT_EQ(count_images(build_prompt(doc, p, cfg, {}, 0)), 2);
}

TEST(Prompt, DigestIsStable)
{
    auto const doc = one_field_doc();
    auto const a = build_prompt(doc, ann(), iterative(), {}, 0);
    auto const b = build_prompt(doc, ann(), iterative(), {}, 0);
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_NE(a.digest(), build_prompt(doc, ann(), iterative(), {}, 1).digest());
}

// }}}
// {{{ episodes

TEST(Episode, TerminateOnly)
{
    auto const doc = one_field_doc();
    test::SequenceClient client({ kTerminate });
    auto const r = run_episode(doc, ann(), iterative(), client, nullptr);
    EXPECT_EQ(r.transcript.rounds.size(), 1u);
    EXPECT_TRUE(r.canvas.items().empty());
    EXPECT_TRUE(r.transcript.terminated_early);
    EXPECT_FALSE(r.transcript.failed);
    EXPECT_EQ(client.calls, 1);
}

TEST(Episode, PerfectScriptScoresFull)
{
    auto const split = synthetic_corpus();
    for (auto toolset: { Toolset::BaselineCoords, Toolset::FieldFinder, Toolset::GtCoords, Toolset::BaselineSom })
        for (auto mode: { EpisodeMode::OneShot, EpisodeMode::Iterative })
        {
            ReplayClient client(perfect_script(split, toolset, mode));
            OracleLocalizer const oracle(split.documents);
            RunConfig cfg;
            cfg.toolset = toolset;
            cfg.mode = mode;
            for (auto const& doc: split.documents)
                for (auto const* persona: split.personas_for(doc))
                {
                    auto const r = run_episode(doc, *persona, cfg, client, &oracle, { 1, std::chrono::milliseconds(1) });
                    ASSERT_FALSE(r.transcript.failed) << r.transcript.failure;
                    auto const outcomes = score_form(r.canvas, doc, *persona);
                    auto const t = tally(outcomes);
                    EXPECT_EQ(t.correct, t.fields) << doc.doc_id << "@" << persona->persona_id << " "
                                                   << to_string(toolset);
                    EXPECT_GT(t.fields, 0);
                }
        }
}

TEST(Episode, DeleteAndCorrect)
{
    auto const doc = one_field_doc();
    test::SequenceClient client({
        R"([{"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "Anne Lee"}])",
        R"([{"action": "DeleteText", "x": 0.4, "y": 0.25},
            {"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "Ann Lee"}])",
        kTerminate,
    });
    auto const r = run_episode(doc, ann(), iterative(), client, nullptr);
    ASSERT_EQ(r.transcript.rounds.size(), 3u);
    ASSERT_EQ(r.canvas.items().size(), 1u);
    EXPECT_EQ(r.canvas.items()[0].value, "Ann Lee");
    EXPECT_EQ(r.canvas.items()[0].round_placed, 1);
    EXPECT_EQ(r.transcript.rounds[1].feedback[0].deleted_count, 1);
    auto const outcomes = score_form(r.canvas, doc, ann());
    ASSERT_EQ(outcomes.size(), 1u);
    EXPECT_TRUE(outcomes[0].correct);
    EXPECT_EQ(r.transcript.placements(), 2);
    // The second prompt reports the first round's result.
    EXPECT_NE(client.requests[1].find("Feedback 1: [{\"action_index\":0,\"status\":\"OK\""), std::string::npos);
}

TEST(Episode, NeverTerminatingClientIsCapped)
{
    auto const doc = one_field_doc();
    test::SequenceClient client({ R"([{"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "x"}])" });
    auto const r = run_episode(doc, ann(), iterative(5), client, nullptr);
    EXPECT_EQ(r.transcript.rounds.size(), 5u);
    EXPECT_EQ(client.calls, 5);
    EXPECT_FALSE(r.transcript.terminated_early);

    test::SequenceClient once({ R"([{"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "x"}])" });
    EXPECT_EQ(run_episode(doc, ann(), RunConfig {}, once, nullptr).transcript.rounds.size(), 1u);
}

TEST(Episode, MalformedClientStops)
{
    auto const doc = one_field_doc();
    test::SequenceClient client({ "I would rather not." });
    auto const r = run_episode(doc, ann(), iterative(5), client, nullptr);
    EXPECT_LE(client.calls, 5);
    ASSERT_EQ(r.transcript.rounds.size(), 1u);
    ASSERT_EQ(r.transcript.rounds[0].feedback.size(), 1u);
    EXPECT_EQ(r.transcript.rounds[0].feedback[0].action_index, -1);
    EXPECT_EQ(r.transcript.rounds[0].feedback[0].status, FeedbackStatus::ParseError);
}

TEST(Episode, FeedbackIsIndexAligned)
{
    auto const doc = one_field_doc();
    test::SequenceClient client({ R"([
        {"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "a"},
        {"bogus": 1},
        {"action": "DeleteText", "x": 0.9, "y": 0.9},
        {"action": "Terminate"},
        {"action": "PlaceText", "cx": 0.1, "cy": 0.1, "value": "b"}
    ])" });
    auto const r = run_episode(doc, ann(), iterative(), client, nullptr);
    ASSERT_EQ(r.transcript.rounds.size(), 1u);
    auto const& fb = r.transcript.rounds[0].feedback;
    ASSERT_EQ(fb.size(), 5u);
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(fb[static_cast<std::size_t>(i)].action_index, i);
    EXPECT_EQ(fb[0].status, FeedbackStatus::Ok);
    EXPECT_EQ(fb[1].status, FeedbackStatus::ParseError);
    EXPECT_EQ(fb[2].status, FeedbackStatus::NothingDeleted);
    EXPECT_EQ(fb[3].status, FeedbackStatus::Ok);
    EXPECT_EQ(fb[4].status, FeedbackStatus::AfterTerminate);
    EXPECT_EQ(r.canvas.items().size(), 1u);
    EXPECT_TRUE(r.transcript.terminated_early);
}

TEST(Episode, WrongToolsetBothWays)
{
    auto const doc = one_field_doc();
    std::vector<FormDocument> docs { doc };
    OracleLocalizer const oracle(docs);

    RunConfig ff;
    ff.toolset = Toolset::FieldFinder;
    test::SequenceClient a({ R"([{"action": "PlaceText", "cx": 0.4, "cy": 0.25, "value": "a"},
                                 {"action": "SignOrInitial", "cx": 0.4, "cy": 0.25, "value": "a"},
                                 {"action": "PlaceByFieldName", "field_name": "Name", "value": "Ann Lee"},
                                 {"action": "Terminate"}])" });
    auto const ra = run_episode(doc, ann(), ff, a, &oracle);
    auto const& fa = ra.transcript.rounds[0].feedback;
    EXPECT_EQ(fa[0].status, FeedbackStatus::WrongToolset);
    EXPECT_EQ(fa[1].status, FeedbackStatus::WrongToolset);
    EXPECT_EQ(fa[2].status, FeedbackStatus::Ok);
    EXPECT_EQ(ra.canvas.items().size(), 1u);

    test::SequenceClient b({ R"([{"action": "PlaceByFieldName", "field_name": "Name", "value": "Ann Lee"}])" });
    auto const rb = run_episode(doc, ann(), RunConfig {}, b, &oracle);
    EXPECT_EQ(rb.transcript.rounds[0].feedback[0].status, FeedbackStatus::WrongToolset);
    EXPECT_TRUE(rb.canvas.items().empty());

    test::SequenceClient c({ "[]" });
    EXPECT_THROW(run_episode(doc, ann(), ff, c, nullptr), ConfigError);
}

TEST(Episode, Retries)
{
    auto const doc = one_field_doc();
    RetryPolicy const fast { 3, std::chrono::milliseconds(1) };

    FlakyClient recovers(2, true);
    auto const r1 = run_episode(doc, ann(), RunConfig {}, recovers, nullptr, fast);
    EXPECT_FALSE(r1.transcript.failed);
    EXPECT_EQ(recovers.calls, 3);
    EXPECT_TRUE(r1.transcript.terminated_early);

    FlakyClient always(100, true);
    auto const r2 = run_episode(doc, ann(), iterative(), always, nullptr, fast);
    EXPECT_TRUE(r2.transcript.failed);
    EXPECT_EQ(always.calls, 3);
    EXPECT_TRUE(r2.transcript.rounds.empty());

    FlakyClient fatal(1, false);
    auto const r3 = run_episode(doc, ann(), RunConfig {}, fatal, nullptr, fast);
    EXPECT_TRUE(r3.transcript.failed);
    EXPECT_EQ(fatal.calls, 1);
}

TEST(Episode, ParallelRunsMatchSerial)
{
    auto const split = synthetic_corpus();
    ReplayClient client(perfect_script(split, Toolset::BaselineCoords, EpisodeMode::Iterative));
    std::vector<EpisodeTask> tasks;
    for (auto const& doc: split.documents)
        for (auto const* p: split.personas_for(doc))
            tasks.push_back({ &doc, p });
    auto const serial = run_episodes(tasks, iterative(), client, nullptr, 1);
    auto const parallel = run_episodes(tasks, iterative(), client, nullptr, 4);
    ASSERT_EQ(serial.size(), tasks.size());
    ASSERT_EQ(parallel.size(), tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
    {
        EXPECT_EQ(transcript_to_json(serial[i].transcript, false).dump(),
                  transcript_to_json(parallel[i].transcript, false).dump());
        EXPECT_TRUE(identical(render(serial[i].canvas), render(parallel[i].canvas)));
        EXPECT_EQ(serial[i].transcript.episode_id,
                  episode_id(*tasks[i].doc, *tasks[i].persona, split.personas_for(*tasks[i].doc).size() > 1));
    }
}

// }}}
// {{{ clients

TEST(ReplayClient, KeyPrecedence)
{
    ReplayClient client({ { "d/0", "generic" }, { "d@p/0", "specific" }, { "d/1", "later" } });
    ModelRequest req { "d", "p", 0, {} };
    EXPECT_EQ(client.complete(req).text, "specific");
    req.persona_id = "q";
    EXPECT_EQ(client.complete(req).text, "generic");
    req.round_index = 1;
    EXPECT_EQ(client.complete(req).text, "later");
    req.round_index = 2;
    try
    {
        client.complete(req);
        FAIL() << "missing key answered";
    }
    catch (const ModelClientError& e)
    {
        EXPECT_FALSE(e.retriable());
    }
}

TEST(ReplayClient, FromFile)
{
    test::TempDir dir("replay");
    {
        std::ofstream f(dir / "r.json");
        f << R"({"d/0": "[]", "d/1": [{"action": "Terminate"}]})";
    }
    auto client = ReplayClient::from_file(dir / "r.json");
    ModelRequest req { "d", "p", 1, {} };
    EXPECT_EQ(parse_actions(client.complete(req).text).actions.size(), 1u);
    EXPECT_THROW(ReplayClient::from_file(dir / "missing.json"), ConfigError);
    {
        std::ofstream f(dir / "bad.json");
        f << "[1, 2";
    }
    EXPECT_THROW(ReplayClient::from_file(dir / "bad.json"), ConfigError);
}

TEST(Tokens, Estimate)
{
    EXPECT_EQ(estimate_tokens(""), 0);
    EXPECT_EQ(estimate_tokens("abcd"), 1);
    EXPECT_EQ(estimate_tokens("abcde"), 2);
    ModelRequest req { "d", "p", 0, { MessagePart::of_text("12345678"), MessagePart::of_image(test::solid(4, 4)) } };
    EXPECT_EQ(estimate_tokens(req), 2 + 1500);
}

TEST(Cost, Example)
{
    Transcript t;
    t.input_tokens = 1'000'000;
    t.output_tokens = 100'000;
    std::vector<Transcript> ts { t };
    auto const c = compute_cost(ts, { 3e-6, 15e-6 }, 10'000);
    EXPECT_NEAR(c.usd_total, 4.5, 1e-9);
    EXPECT_NEAR(c.usd_per_thousand_fields, 0.45, 1e-12);
    EXPECT_EQ(c.fields_attempted, 10'000);

    EXPECT_EQ(compute_cost(std::vector<Transcript> { Transcript {} }, { 3e-6, 15e-6 }, 5).usd_total, 0.0);
    EXPECT_THROW(compute_cost(ts, { 3e-6, 15e-6 }, 0), EvaluationInputError);
}

TEST(Cost, Additive)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::int64_t> tok(0, 2'000'000);
    for (int i = 0; i < 100; ++i)
    {
        Transcript a, b;
        a.input_tokens = tok(rng);
        a.output_tokens = tok(rng);
        b.input_tokens = tok(rng);
        b.output_tokens = tok(rng);
        TokenPrices const prices { 2.5e-6, 1e-5 };
        double const sum = compute_cost(std::vector<Transcript> { a }, prices, 7).usd_total
                           + compute_cost(std::vector<Transcript> { b }, prices, 7).usd_total;
        EXPECT_NEAR(compute_cost(std::vector<Transcript> { a, b }, prices, 7).usd_total, sum, 1e-9);
    }
}

TEST(HttpChatClient, WireFormat)
{
    test::LocalServer server;
    std::string auth;
    nlohmann::json body;
    server.server.Post("/api/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        body = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        std::string const model = body.at("model");
        if (model == "busy")
            res.status = 429;
        else if (model == "broken")
            res.status = 400;
        else if (model == "odd")
            res.set_content("{}", "application/json");
        else
            res.set_content(R"({"choices":[{"message":{"content":"[]"}}],"usage":{"prompt_tokens":11,"completion_tokens":2}})",
                            "application/json");
    });
    server.start();
    ::setenv("FORMBENCH_TEST_KEY", "sekret", 1);

    HttpClientConfig cfg { server.url() + "/api", "FORMBENCH_TEST_KEY", "m1", 42, std::chrono::seconds(10), 512 };
    HttpChatClient client(cfg);
    ModelRequest req { "d", "p", 0, { MessagePart::of_text("hello"), MessagePart::of_image(test::solid(4, 4)) } };
    auto const r = client.complete(req);
    EXPECT_EQ(r.text, "[]");
    EXPECT_EQ(r.input_tokens, 11);
    EXPECT_EQ(r.output_tokens, 2);
    EXPECT_EQ(auth, "Bearer sekret");
    EXPECT_EQ(body["model"], "m1");
    EXPECT_EQ(body["seed"], 42);
    auto const& content = body["messages"][0]["content"];
    ASSERT_EQ(content.size(), 2u);
    EXPECT_EQ(content[0]["text"], "hello");
    std::string const url = content[1]["image_url"]["url"];
    ASSERT_TRUE(url.starts_with("data:image/png;base64,"));
    EXPECT_TRUE(identical(decode_image(base64_decode(url.substr(22))), test::solid(4, 4)));

    auto retriable_of = [&](std::string model) {
        HttpClientConfig c = cfg;
        c.model_id = std::move(model);
        try
        {
            HttpChatClient(c).complete(req);
        }
        catch (const ModelClientError& e)
        {
            return e.retriable();
        }
        ADD_FAILURE() << "request succeeded";
        return false;
    };
    EXPECT_TRUE(retriable_of("busy"));
    EXPECT_FALSE(retriable_of("broken"));
    EXPECT_TRUE(retriable_of("odd"));

    HttpClientConfig unset = cfg;
    unset.api_key_env = "FORMBENCH_TEST_KEY_UNSET";
    ::unsetenv("FORMBENCH_TEST_KEY_UNSET");
    try
    {
        HttpChatClient(unset).complete(req);
        FAIL() << "missing credential accepted";
    }
    catch (const ModelClientError& e)
    {
        EXPECT_FALSE(e.retriable());
    }
}

// }}}
