// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <formbench/errors.hpp>
#include <formbench/localization.hpp>
#include <formbench/synthetic.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <random>
#include <thread>

using namespace formbench;

namespace {

FormDocument labeled_page()
{
    auto doc = test::document("page", { test::field("page:name", BBox(0.2, 0.1, 0.6, 0.12), test::normalized_spec("n"),
                                                    "Name"),
                                        test::field("page:date", BBox(0.7, 0.1, 0.9, 0.12), test::normalized_spec("d"),
                                                    "Date") });
    doc.fields[0].hierarchical_name = "Applicant | Name";
    doc.words = { { "Name:", BBox(0.1, 0.1, 0.2, 0.12) },
                  { "Date", BBox(0.6, 0.1, 0.7, 0.12) },
                  { "Signature", BBox(0.1, 0.5, 0.25, 0.52) } };
    return doc;
}

LocalizationQuery query(const FormDocument& doc, std::string name)
{
    return { doc.doc_id, doc.image, std::move(name) };
}

LocalizationErrorCode code_of(const Localizer& loc, const LocalizationQuery& q)
{
    try
    {
        loc.locate(q);
    }
    catch (const LocalizationError& e)
    {
        return e.code();
    }
    ADD_FAILURE() << "locate succeeded";
    return LocalizationErrorCode::BackendUnavailable;
}

} // namespace

TEST(OracleLocalizer, ExactAndCaseInsensitive)
{
    std::vector<FormDocument> docs { labeled_page() };
    OracleLocalizer const oracle(docs);
    EXPECT_EQ(oracle.locate(query(docs[0], "Applicant | Name")).bbox, docs[0].fields[0].bbox);
    EXPECT_EQ(oracle.locate(query(docs[0], "applicant | NAME")).bbox, docs[0].fields[0].bbox);
    EXPECT_EQ(oracle.locate(query(docs[0], "Applicant | Name")).backend, LocalizerBackend::Oracle);
    EXPECT_EQ(code_of(oracle, query(docs[0], "No Such Field")), LocalizationErrorCode::FieldNotFound);
    EXPECT_EQ(code_of(oracle, query(docs[0], "Name")), LocalizationErrorCode::FieldNotFound);
}

TEST(HeuristicLocalizer, GapToNextWord)
{
    std::vector<FormDocument> docs { labeled_page() };
    HeuristicLocalizer const h(docs);
    auto const r = h.locate(query(docs[0], "Applicant | Name"));
    EXPECT_EQ(r.bbox, BBox(0.2, 0.1, 0.6, 0.12));
    EXPECT_EQ(r.backend, LocalizerBackend::Heuristic);
    // Nothing to the right: the field runs to the margin.
    EXPECT_EQ(h.locate(query(docs[0], "Signature")).bbox, BBox(0.25, 0.5, 1.0, 0.52));
    EXPECT_EQ(code_of(h, query(docs[0], "Occupation")), LocalizationErrorCode::FieldNotFound);
    // Deterministic.
    EXPECT_EQ(h.locate(query(docs[0], "Applicant | Name")).bbox, r.bbox);
}

TEST(HeuristicLocalizer, NeedsWordAnnotations)
{
    auto doc = labeled_page();
    doc.words.clear();
    std::vector<FormDocument> docs { doc };
    HeuristicLocalizer const h(docs);
    EXPECT_EQ(code_of(h, query(docs[0], "Name")), LocalizationErrorCode::UnsupportedDocument);
}

TEST(HeuristicLocalizer, TiesGoToTopmost)
{
    auto doc = labeled_page();
    doc.words = { { "Name", BBox(0.1, 0.5, 0.2, 0.52) }, { "Name", BBox(0.1, 0.3, 0.2, 0.32) } };
    std::vector<FormDocument> docs { doc };
    HeuristicLocalizer const h(docs);
    EXPECT_EQ(h.locate(query(docs[0], "Name")).bbox.y0(), 0.3);
}

TEST(MakeLocalizer, Descriptors)
{
    std::vector<FormDocument> docs { labeled_page() };
    EXPECT_EQ(make_localizer("oracle", docs)->backend(), LocalizerBackend::Oracle);
    EXPECT_EQ(make_localizer("heuristic", docs)->backend(), LocalizerBackend::Heuristic);
    auto const remote = make_localizer("remote:http://127.0.0.1:9", docs);
    EXPECT_EQ(remote->backend(), LocalizerBackend::Remote);
    EXPECT_EQ(remote->describe(), "remote:http://127.0.0.1:9");
    EXPECT_THROW(make_localizer("magic", docs), ConfigError);
    EXPECT_THROW(make_localizer("remote:", docs), ConfigError);
}

TEST(LocalizationAccuracy, Basics)
{
    std::map<QueryKey, BBox> truth { { { "d", "a" }, BBox(0.1, 0.1, 0.2, 0.2) },
                                     { { "d", "b" }, BBox(0.5, 0.5, 0.6, 0.6) } };
    std::vector<LocalizationPrediction> preds {
        { { "d", "a" }, LocalizationResult { BBox(0.1, 0.1, 0.2, 0.2), std::nullopt, LocalizerBackend::Oracle } },
        { { "d", "b" }, std::nullopt },
    };
    EXPECT_DOUBLE_EQ(localization_accuracy(preds, truth), 0.5);
    preds.push_back({ { "d", "zzz" }, std::nullopt });
    EXPECT_THROW(localization_accuracy(preds, truth), EvaluationInputError);
}

TEST(LocalizationAccuracy, PerDatasetMean)
{
    double const mean = (0.805 + 0.574 + 0.249) / 3.0;
    EXPECT_NEAR(mean, 0.543, 0.0005);
}

TEST(LocalizationAccuracyProperty, BruteForceRecountAndPermutation)
{
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int round = 0; round < 20; ++round)
    {
        // 100 disjoint truth cells on a 10x10 grid.
        std::map<QueryKey, BBox> truth;
        std::vector<LocalizationPrediction> preds;
        for (int i = 0; i < 100; ++i)
        {
            double const x = (i % 10) / 10.0;
            double const y = (i / 10) / 10.0;
            QueryKey const key { "doc", "f" + std::to_string(i) };
            truth.emplace(key, BBox(x + 0.01, y + 0.01, x + 0.09, y + 0.09));
            if (u(rng) < 0.1)
                preds.push_back({ key, std::nullopt });
            else
                preds.push_back({ key, LocalizationResult { test::random_box(rng), u(rng), LocalizerBackend::Remote } });
        }
        int correct = 0;
        for (auto const& p: preds)
        {
            if (!p.result)
                continue;
            auto const& t = truth.at(p.query);
            double const cx = (p.result->bbox.x0() + p.result->bbox.x1()) / 2;
            double const cy = (p.result->bbox.y0() + p.result->bbox.y1()) / 2;
            correct += (cx >= t.x0() && cx <= t.x1() && cy >= t.y0() && cy <= t.y1()) ? 1 : 0;
        }
        double const acc = localization_accuracy(preds, truth);
        EXPECT_DOUBLE_EQ(acc, correct / 100.0);
        std::shuffle(preds.begin(), preds.end(), rng);
        EXPECT_DOUBLE_EQ(localization_accuracy(preds, truth), acc);
    }
}

TEST(PlaceByFieldName, OracleLandsInField)
{
    auto const split = synthetic_corpus();
    auto const& doc = split.documents.front();
    OracleLocalizer const oracle(split.documents);
    Canvas canvas(doc.image);
    for (auto const& f: doc.fields)
    {
        auto const fb = place_by_field_name(canvas, doc, f.hierarchical_name, "v", oracle);
        ASSERT_EQ(fb.status, FeedbackStatus::Ok) << f.hierarchical_name;
        auto const& item = canvas.items().back();
        EXPECT_TRUE(contains(f.bbox, item.center));
        EXPECT_LE(item.bbox.height(), f.bbox.height() + 1e-12);
        // Only this field receives the item.
        for (auto const& other: doc.fields)
            if (other.field_id != f.field_id)
            {
                EXPECT_FALSE(contains(other.bbox, item.center)) << f.field_id << " vs " << other.field_id;
            }
    }
}

TEST(PlaceByFieldName, AdjacentFieldsStayDistinct)
{
    auto doc = test::document("adj", { test::field("left", BBox(0.1, 0.1, 0.3, 0.15), test::normalized_spec("k")),
                                       test::field("right", BBox(0.3, 0.1, 0.5, 0.15), test::normalized_spec("k")) });
    std::vector<FormDocument> docs { doc };
    OracleLocalizer const oracle(docs);
    Canvas canvas(doc.image);
    place_by_field_name(canvas, doc, "left", "a", oracle);
    place_by_field_name(canvas, doc, "right", "b", oracle);
    ASSERT_EQ(canvas.items().size(), 2u);
    EXPECT_TRUE(contains(doc.fields[0].bbox, canvas.items()[0].center));
    EXPECT_FALSE(contains(doc.fields[1].bbox, canvas.items()[0].center));
    EXPECT_TRUE(contains(doc.fields[1].bbox, canvas.items()[1].center));
    EXPECT_FALSE(contains(doc.fields[0].bbox, canvas.items()[1].center));
}

TEST(PlaceByFieldName, UnknownNameLeavesCanvas)
{
    std::vector<FormDocument> docs { labeled_page() };
    OracleLocalizer const oracle(docs);
    Canvas canvas(docs[0].image);
    auto const fb = place_by_field_name(canvas, docs[0], "Nope", "v", oracle);
    EXPECT_EQ(fb.status, FeedbackStatus::LocalizationFailed);
    EXPECT_TRUE(canvas.items().empty());
}

// {{{ wire protocol

TEST(RemoteLocalizer, WireProtocol)
{
    test::LocalServer server;
    std::atomic<int> calls { 0 };
    std::string seen_name;
    cv::Size seen_size;
    server.server.Post("/v1/locate", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        auto const body = nlohmann::json::parse(req.body);
        std::string const name = body.at("field_name");
        Image const img = decode_image(base64_decode(body.at("image")));
        seen_name = name;
        seen_size = img.size();
        if (name == "ok")
            res.set_content(R"({"bbox":[0.1,0.2,0.3,0.4],"confidence":0.9})", "application/json");
        else if (name == "null-confidence")
            res.set_content(R"({"bbox":[0.1,0.2,0.3,0.4],"confidence":null})", "application/json");
        else if (name == "missing")
        {
            res.status = 422;
            res.set_content(R"({"error":"no field"})", "application/json");
        }
        else if (name == "outside")
            res.set_content(R"({"bbox":[0.5,0.5,1.2,0.9],"confidence":0.5})", "application/json");
        else if (name == "garbage")
            res.set_content("not json", "text/plain");
        else
            res.status = 500;
    });
    server.server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.start();

    RemoteLocalizer const remote(server.url(), { 4, std::chrono::milliseconds(5000) });
    EXPECT_TRUE(remote.healthy());
    Image const img = test::solid(64, 48);
    auto const r = remote.locate({ "d", img, "ok" });
    EXPECT_EQ(r.bbox, BBox(0.1, 0.2, 0.3, 0.4));
    EXPECT_EQ(r.confidence, 0.9);
    EXPECT_EQ(r.backend, LocalizerBackend::Remote);
    EXPECT_EQ(seen_name, "ok");
    EXPECT_EQ(seen_size, cv::Size(64, 48));
    EXPECT_FALSE(remote.locate({ "d", img, "null-confidence" }).confidence);

    EXPECT_EQ(code_of(remote, { "d", img, "missing" }), LocalizationErrorCode::FieldNotFound);
    EXPECT_EQ(code_of(remote, { "d", img, "outside" }), LocalizationErrorCode::BackendUnavailable);
    EXPECT_EQ(code_of(remote, { "d", img, "garbage" }), LocalizationErrorCode::BackendUnavailable);
    EXPECT_EQ(code_of(remote, { "d", img, "boom" }), LocalizationErrorCode::BackendUnavailable);
    EXPECT_EQ(calls.load(), 6);
}

TEST(RemoteLocalizer, PathPrefixAndUnreachable)
{
    test::LocalServer server;
    server.server.Post("/svc/v1/locate", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"bbox":[0,0,1,1],"confidence":null})", "application/json");
    });
    server.server.Get("/svc/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.start();
    RemoteLocalizer const remote(server.url() + "/svc/");
    EXPECT_TRUE(remote.healthy());
    EXPECT_EQ(remote.locate({ "d", test::solid(8, 8), "x" }).bbox, BBox(0, 0, 1, 1));

    server.server.stop();
    RemoteLocalizer const gone("http://127.0.0.1:1", { 1, std::chrono::milliseconds(500) });
    EXPECT_FALSE(gone.healthy());
    EXPECT_EQ(code_of(gone, { "d", test::solid(8, 8), "x" }), LocalizationErrorCode::BackendUnavailable);
}

TEST(RemoteLocalizer, CapsRequestsInFlight)
{
    test::LocalServer server;
    std::atomic<int> active { 0 };
    std::atomic<int> peak { 0 };
    server.server.new_task_queue = [] { return new httplib::ThreadPool(8); };
    server.server.Post("/v1/locate", [&](const httplib::Request&, httplib::Response& res) {
        int const now = ++active;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now))
        {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(60));
        --active;
        res.set_content(R"({"bbox":[0.1,0.1,0.2,0.2],"confidence":null})", "application/json");
    });
    server.start();
    RemoteLocalizer const remote(server.url(), { 2, std::chrono::milliseconds(5000) });
    Image const img = test::solid(16, 16);
    std::vector<std::future<LocalizationResult>> futures;
    for (int i = 0; i < 8; ++i)
        futures.push_back(std::async(std::launch::async, [&] { return remote.locate({ "d", img, "f" }); }));
    for (auto& f: futures)
        EXPECT_EQ(f.get().bbox, BBox(0.1, 0.1, 0.2, 0.2));
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}

// }}}
