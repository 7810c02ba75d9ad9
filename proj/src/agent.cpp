// SPDX-License-Identifier: Apache-2.0

#include <formbench/agent.hpp>
#include <formbench/errors.hpp>

#include <httplib.h>

#include "url.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace formbench {

namespace {

constexpr std::int64_t kTokensPerImage = 1500;

const char* const kPlaceTextDoc = R"(PlaceText: writes `value` on the page so that its center sits at (cx, cy).
Coordinates are fractions of the page: (0, 0) is the top-left pixel, (1, 1) the bottom-right.
Args:
- cx: horizontal center of the text, 0 to 1 from the left edge
- cy: vertical center of the text, 0 to 1 from the top edge
- value: string to write
Example input:
{"action": "PlaceText", "cx": 0.5, "cy": 0.5, "value": "Hello World!"})";

const char* const kDeleteTextDoc = R"(DeleteText: removes every piece of text you placed whose box covers the point (x, y), in the same page coordinates.
Args:
- x: horizontal position, 0 to 1
- y: vertical position, 0 to 1
Example input:
{"action": "DeleteText", "x": 0.5, "y": 0.5})";

const char* const kSignDoc = R"(SignOrInitial: signs the page with `value` (a full name or initials) centered at (cx, cy).
Args:
- cx: horizontal center of the signature, 0 to 1
- cy: vertical center of the signature, 0 to 1
- value: name or initials
Example input:
{"action": "SignOrInitial", "cx": 0.5, "cy": 0.5, "value": "John Doe"})";

const char* const kPlaceByFieldNameDoc = R"(PlaceByFieldName: writes `value` into the form field called `field_name`; the field's position is found for you. If a label appears more than once, qualify it with its enclosing headers joined by " | ".
Args:
- field_name: label of the field, e.g. "Employment | Employer Name"
- value: string to write
Example input:
{"action": "PlaceByFieldName", "field_name": "Applicant | Full Name", "value": "John Doe"})";

const char* const kTerminateDoc = R"(Terminate: ends the session. Later actions are ignored.
Example input:
{"action": "Terminate"})";

const char* const kRules = R"(Fill in the form for the person described above, signatures included. All personal data here is fictional. Leave a field blank when neither the profile nor the attached document provides its value.

Fill checkboxes with a single "x".
Format all dates as "MM/DD/YYYY".
Names should be "First Middle Last" unless otherwise specified.)";

std::string feedback_line(int k, const std::vector<ActionFeedback>& feedback)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto const& f: feedback)
        arr.push_back({ { "action_index", f.action_index }, { "status", to_string(f.status) }, { "detail", f.detail } });
    return fmt::format("Feedback {}: {}", k, arr.dump());
}

bool is_placement(const Action& a)
{
    return std::holds_alternative<PlaceText>(a) || std::holds_alternative<SignOrInitial>(a)
           || std::holds_alternative<PlaceByFieldName>(a);
}

ActionFeedback route(Canvas& canvas, const FormDocument& doc, const RunConfig& config, const Localizer* localizer,
                     const IndexedAction& ia)
{
    if (canvas.terminated())
        return { ia.index, FeedbackStatus::AfterTerminate, "action follows Terminate; ignored", 0 };

    bool const field_finder = config.toolset == Toolset::FieldFinder;
    ActionFeedback fb;
    if (auto const* p = std::get_if<PlaceByFieldName>(&ia.action))
    {
        if (!field_finder)
            fb = { 0, FeedbackStatus::WrongToolset, "PlaceByFieldName is not available in this toolset", 0 };
        else
            fb = place_by_field_name(canvas, doc, p->field_name, p->value, *localizer);
    }
    else if (field_finder && !std::holds_alternative<DeleteText>(ia.action)
             && !std::holds_alternative<Terminate>(ia.action))
    {
        fb = { 0, FeedbackStatus::WrongToolset, fmt::format("{} is not available in this toolset", action_name(ia.action)),
               0 };
    }
    else
    {
        fb = apply_action(canvas, ia.action, ia.index);
    }
    fb.action_index = ia.index;
    return fb;
}

} // namespace

std::string_view to_string(EpisodeMode mode)
{
    return mode == EpisodeMode::OneShot ? "ONE_SHOT" : "ITERATIVE";
}

EpisodeMode episode_mode_from_string(std::string_view text)
{
    if (text == "ONE_SHOT" || text == "one-shot" || text == "one_shot")
        return EpisodeMode::OneShot;
    if (text == "ITERATIVE" || text == "iterative")
        return EpisodeMode::Iterative;
    throw ConfigError(fmt::format("unknown episode mode '{}'", text));
}

std::string_view to_string(Toolset toolset)
{
    switch (toolset)
    {
        case Toolset::BaselineCoords: return "BASELINE_COORDS";
        case Toolset::BaselineSom: return "BASELINE_SOM";
        case Toolset::FieldFinder: return "FIELDFINDER";
        case Toolset::GtCoords: return "GT_COORDS";
    }
    return "BASELINE_COORDS";
}

Toolset toolset_from_string(std::string_view text)
{
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) {
        return c == '-' ? '_' : static_cast<char>(std::toupper(c));
    });
    for (auto t: { Toolset::BaselineCoords, Toolset::BaselineSom, Toolset::FieldFinder, Toolset::GtCoords })
        if (upper == to_string(t))
            return t;
    // Short flag spellings.
    if (upper == "COORDS")
        return Toolset::BaselineCoords;
    if (upper == "SOM")
        return Toolset::BaselineSom;
    if (upper == "FF")
        return Toolset::FieldFinder;
    throw ConfigError(fmt::format("unknown toolset '{}'", text));
}

// {{{ requests and clients

std::string ModelRequest::text() const
{
    std::string out;
    for (auto const& part: parts)
    {
        if (!out.empty())
            out += "\n\n";
        out += part.kind == MessagePart::Kind::Text ? part.text : std::string("<image>");
    }
    return out;
}

std::string ModelRequest::digest() const
{
    std::string material;
    for (auto const& part: parts)
    {
        material += part.kind == MessagePart::Kind::Text ? "T:" + part.text : "I:" + image_digest(part.image);
        material += '\0';
    }
    return sha256_hex(material);
}

std::int64_t estimate_tokens(std::string_view text)
{
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::int64_t estimate_tokens(const ModelRequest& request)
{
    std::int64_t total = 0;
    for (auto const& part: request.parts)
        total += part.kind == MessagePart::Kind::Text ? estimate_tokens(part.text) : kTokensPerImage;
    return total;
}

ReplayClient::ReplayClient(std::map<std::string, std::string> responses): responses_(std::move(responses))
{
}

ReplayClient ReplayClient::from_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open replay file {}", path.string()));
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ConfigError(fmt::format("replay file {} is not valid JSON: {}", path.string(), e.what()));
    }
    if (!j.is_object())
        throw ConfigError(fmt::format("replay file {} must hold an object", path.string()));
    std::map<std::string, std::string> responses;
    for (auto const& [key, value]: j.items())
        responses[key] = value.is_string() ? value.get<std::string>() : value.dump();
    return ReplayClient(std::move(responses));
}

ModelResponse ReplayClient::complete(const ModelRequest& request)
{
    auto const specific = fmt::format("{}@{}/{}", request.doc_id, request.persona_id, request.round_index);
    auto it = responses_.find(specific);
    if (it == responses_.end())
        it = responses_.find(fmt::format("{}/{}", request.doc_id, request.round_index));
    if (it == responses_.end())
        throw ModelClientError(fmt::format("replay has no response for {}", specific), false);
    return { it->second, estimate_tokens(request), estimate_tokens(it->second) };
}

HttpChatClient::HttpChatClient(HttpClientConfig config): config_(std::move(config))
{
    if (config_.base_url.empty())
        throw ConfigError("chat client needs a base URL");
}

nlohmann::json HttpChatClient::request_body(const ModelRequest& request) const
{
    nlohmann::json content = nlohmann::json::array();
    for (auto const& part: request.parts)
    {
        if (part.kind == MessagePart::Kind::Text)
            content.push_back({ { "type", "text" }, { "text", part.text } });
        else
            content.push_back({ { "type", "image_url" },
                                { "image_url",
                                  { { "url", "data:image/png;base64," + base64_encode(encode_png(part.image)) } } } });
    }
    return { { "model", config_.model_id },
             { "seed", config_.seed },
             { "max_tokens", config_.max_tokens },
             { "messages", nlohmann::json::array({ { { "role", "user" }, { "content", content } } }) } };
}

ModelResponse HttpChatClient::complete(const ModelRequest& request)
{
    std::string token;
    if (!config_.api_key_env.empty())
    {
        char const* value = std::getenv(config_.api_key_env.c_str());
        if (!value || !*value)
            throw ModelClientError(fmt::format("environment variable {} is not set", config_.api_key_env), false);
        token = value;
    }

    auto const [host, prefix] = detail::split_url(config_.base_url);
    httplib::Client client(host);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!token.empty())
        headers.emplace("Authorization", "Bearer " + token);

    auto const response = client.Post(prefix + "/chat/completions", headers, request_body(request).dump(),
                                      "application/json");
    if (!response)
        throw ModelClientError(fmt::format("model endpoint unreachable: {}", httplib::to_string(response.error())));
    if (response->status == 429 || response->status >= 500)
        throw ModelClientError(fmt::format("model endpoint answered HTTP {}", response->status));
    if (response->status != 200)
        throw ModelClientError(fmt::format("model endpoint rejected the request (HTTP {}): {}", response->status,
                                           response->body.substr(0, 200)),
                               false);
    try
    {
        auto const j = nlohmann::json::parse(response->body);
        ModelResponse out;
        auto const& message = j.at("choices").at(0).at("message");
        out.text = message.at("content").is_string() ? message["content"].get<std::string>() : std::string();
        if (j.contains("usage") && j["usage"].is_object())
        {
            out.input_tokens = j["usage"].value("prompt_tokens", std::int64_t { 0 });
            out.output_tokens = j["usage"].value("completion_tokens", std::int64_t { 0 });
        }
        else
        {
            out.input_tokens = estimate_tokens(request);
            out.output_tokens = estimate_tokens(out.text);
        }
        return out;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ModelClientError(fmt::format("malformed model response: {}", e.what()));
    }
}

// }}}
// {{{ transcripts and cost

int Transcript::placements() const
{
    int n = 0;
    for (auto const& round: rounds)
        for (auto const& ia: round.actions)
            if (is_placement(ia.action))
                for (auto const& fb: round.feedback)
                    if (fb.action_index == ia.index && fb.status == FeedbackStatus::Ok)
                        ++n;
    return n;
}

nlohmann::ordered_json transcript_to_json(const Transcript& t, bool include_timing)
{
    nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
    for (auto const& r: t.rounds)
    {
        nlohmann::ordered_json actions = nlohmann::ordered_json::array();
        for (auto const& ia: r.actions)
        {
            nlohmann::ordered_json a { { "index", ia.index } };
            auto const body = action_to_json(ia.action);
            for (auto const& [k, v]: body.items())
                a[k] = v;
            actions.push_back(std::move(a));
        }
        nlohmann::ordered_json feedback = nlohmann::ordered_json::array();
        for (auto const& fb: r.feedback)
            feedback.push_back(feedback_to_json(fb));
        rounds.push_back({ { "round_index", r.round_index },
                           { "request_digest", r.request_digest },
                           { "response_text", r.response_text },
                           { "actions", std::move(actions) },
                           { "feedback", std::move(feedback) },
                           { "input_tokens", r.input_tokens },
                           { "output_tokens", r.output_tokens } });
    }
    nlohmann::ordered_json j { { "episode_id", t.episode_id },
                               { "doc_id", t.doc_id },
                               { "persona_id", t.persona_id },
                               { "terminated_early", t.terminated_early },
                               { "failed", t.failed } };
    if (t.failed)
        j["failure"] = t.failure;
    j["input_tokens"] = t.input_tokens;
    j["output_tokens"] = t.output_tokens;
    if (include_timing)
        j["wall_seconds"] = t.wall_seconds;
    j["rounds"] = std::move(rounds);
    return j;
}

CostReport compute_cost(std::span<const Transcript> transcripts, TokenPrices prices, std::int64_t fields)
{
    if (fields <= 0)
        throw EvaluationInputError("cost per field needs at least one attempted field");
    CostReport report;
    report.fields_attempted = fields;
    for (auto const& t: transcripts)
        report.usd_total += static_cast<double>(t.input_tokens) * prices.per_input_token
                            + static_cast<double>(t.output_tokens) * prices.per_output_token;
    report.usd_per_thousand_fields = report.usd_total / static_cast<double>(fields) * 1000.0;
    return report;
}

// }}}
// {{{ prompt

ModelRequest build_prompt(const FormDocument& doc, const Persona& persona, const RunConfig& config,
                          std::span<const std::vector<ActionFeedback>> history, int round_index)
{
    ModelRequest req { doc.doc_id, persona.persona_id, round_index, {} };
    auto text = [&](std::string s) { req.parts.push_back(MessagePart::of_text(std::move(s))); };

    text("Your task is to fill in the attached form image for the person described below.\n\nAvailable "
         "actions:");
    if (config.toolset == Toolset::FieldFinder)
    {
        text(kPlaceByFieldNameDoc);
        text(kDeleteTextDoc);
    }
    else
    {
        text(kPlaceTextDoc);
        text(kDeleteTextDoc);
        text(kSignDoc);
    }
    text(kTerminateDoc);

    auto const profile = render_persona_prompt(persona, config.persona_mode);
    text("Profile of the person:\n" + profile.text());
    if (config.persona_mode == PersonaMode::Image)
    {
        text("An already completed document for the same person is attached; it holds further details "
             "about them.");
        for (auto const& img: profile.images)
            req.parts.push_back(MessagePart::of_image(img.image));
    }

    if (config.toolset == Toolset::GtCoords)
    {
        std::string lines = "The form has the following fields, given as name followed by the (x, y) center of its "
                            "input area:\n";
        for (auto const& f: doc.fields)
        {
            auto const c = center(f.bbox);
            lines += fmt::format("{}: ({:.4f}, {:.4f})\n", f.hierarchical_name, c.x, c.y);
        }
        text(std::move(lines));
    }

    text(kRules);

    std::string feedback = "Results of your earlier actions:";
    if (history.empty())
        feedback += "\n" + feedback_line(1, {});
    for (std::size_t k = 0; k < history.size(); ++k)
        feedback += "\n" + feedback_line(static_cast<int>(k) + 1, history[k]);
    text(std::move(feedback));

    int const remaining = config.rounds() - 1 - round_index;
    std::string next = "Reply with your next actions; a single reply may hold as many as you need.\n\n";
    if (remaining <= 0)
        next += "This is your final action.";
    else
        next += fmt::format("After this reply you get {} more round{} to read the results and fix errors.",
                            remaining, remaining == 1 ? "" : "s");
    text(std::move(next));

    if (config.toolset == Toolset::BaselineSom)
    {
        text("The form image is overlaid with a grid; each interior vertex is labeled with its (x, y) coordinates.");
        req.parts.push_back(MessagePart::of_image(overlay_set_of_marks(doc.image, config.grid_n)));
    }
    else
    {
        req.parts.push_back(MessagePart::of_image(doc.image));
    }
    text("Return a form-filling API call as a JSON list of dictionaries.");
    return req;
}

// }}}
// {{{ episodes

EpisodeResult run_episode(const FormDocument& doc, const Persona& persona, const RunConfig& config,
                          ModelClient& client, const Localizer* localizer, RetryPolicy retry)
{
    if (config.max_rounds < 1)
        throw ConfigError("max_rounds must be at least 1");
    if (config.toolset == Toolset::FieldFinder && !localizer)
        throw ConfigError("the field-name toolset needs a localizer");
    if (doc.image.empty())
        throw ConfigError(fmt::format("document {} has no image loaded", doc.doc_id));

    auto const started = std::chrono::steady_clock::now();
    EpisodeResult result { Canvas(doc.image), {} };
    Transcript& t = result.transcript;
    t.doc_id = doc.doc_id;
    t.persona_id = persona.persona_id;
    t.episode_id = doc.doc_id;
    std::vector<std::vector<ActionFeedback>> history;

    for (int r = 0; r < config.rounds(); ++r)
    {
        result.canvas.set_round(r);
        auto const request = build_prompt(doc, persona, config, history, r);

        std::optional<ModelResponse> response;
        for (int attempt = 1; !response; ++attempt)
        {
            try
            {
                response = client.complete(request);
            }
            catch (const ModelClientError& e)
            {
                if (!e.retriable() || attempt >= std::max(1, retry.attempts))
                {
                    t.failed = true;
                    t.failure = fmt::format("round {}: {}", r, e.what());
                    break;
                }
                std::this_thread::sleep_for(retry.base_delay * (1 << (attempt - 1)));
            }
        }
        if (!response)
            break;

        auto parsed = parse_actions(response->text);
        RoundRecord rec;
        rec.round_index = r;
        rec.request_digest = request.digest();
        rec.response_text = response->text;
        rec.input_tokens = response->input_tokens;
        rec.output_tokens = response->output_tokens;

        if (parsed.element_count == 0)
        {
            rec.feedback = parsed.errors;
        }
        else
        {
            rec.feedback.resize(static_cast<std::size_t>(parsed.element_count));
            for (auto const& e: parsed.errors)
                rec.feedback.at(static_cast<std::size_t>(e.action_index)) = e;
            std::sort(parsed.actions.begin(), parsed.actions.end(),
                      [](const IndexedAction& a, const IndexedAction& b) { return a.index < b.index; });
            for (auto const& ia: parsed.actions)
                rec.feedback.at(static_cast<std::size_t>(ia.index)) = route(result.canvas, doc, config, localizer, ia);
        }
        rec.actions = std::move(parsed.actions);

        t.input_tokens += rec.input_tokens;
        t.output_tokens += rec.output_tokens;
        history.push_back(rec.feedback);
        bool const no_actions = rec.actions.empty();
        t.rounds.push_back(std::move(rec));

        if (result.canvas.terminated())
        {
            t.terminated_early = true;
            break;
        }
        if (config.mode == EpisodeMode::Iterative && no_actions)
            break;
    }
    t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

std::string episode_id(const FormDocument& doc, const Persona& persona, bool multi_persona)
{
    return multi_persona ? fmt::format("{}@{}", doc.doc_id, persona.persona_id) : doc.doc_id;
}

std::vector<EpisodeResult> run_episodes(std::span<const EpisodeTask> tasks, const RunConfig& config,
                                        ModelClient& client, const Localizer* localizer, int parallelism,
                                        RetryPolicy retry)
{
    std::map<const FormDocument*, int> per_doc;
    for (auto const& task: tasks)
        ++per_doc[task.doc];

    std::vector<std::optional<EpisodeResult>> slots(tasks.size());
    std::atomic<std::size_t> next { 0 };
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
        {
            auto const& task = tasks[i];
            std::string const id = episode_id(*task.doc, *task.persona, per_doc[task.doc] > 1);
            try
            {
                slots[i].emplace(run_episode(*task.doc, *task.persona, config, client, localizer, retry));
            }
            catch (const std::exception& e)
            {
                Transcript t;
                t.doc_id = task.doc->doc_id;
                t.persona_id = task.persona->persona_id;
                t.failed = true;
                t.failure = e.what();
                slots[i].emplace(EpisodeResult { Canvas(task.doc->image), std::move(t) });
            }
            slots[i]->transcript.episode_id = id;
        }
    };
    {
        std::vector<std::jthread> pool;
        int const n = std::clamp(parallelism, 1, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
        for (int w = 1; w < n; ++w)
            pool.emplace_back(worker);
        worker();
    }

    std::vector<EpisodeResult> results;
    results.reserve(tasks.size());
    for (auto& slot: slots)
        results.push_back(std::move(*slot));
    return results;
}

std::map<std::string, std::string> perfect_script(const CorpusSplit& split, Toolset toolset, EpisodeMode mode)
{
    std::map<std::string, std::string> script;
    for (auto const& doc: split.documents)
    {
        auto const personas = split.personas_for(doc);
        for (auto const* persona: personas)
        {
            nlohmann::ordered_json actions = nlohmann::ordered_json::array();
            for (auto const& f: doc.fields)
            {
                if (!expects_value(f, *persona))
                    continue;
                auto const value = witness_value(f.correctness, *persona);
                if (!value)
                    continue;
                auto const c = center(f.bbox);
                if (toolset == Toolset::FieldFinder)
                    actions.push_back(
                        { { "action", "PlaceByFieldName" }, { "field_name", f.hierarchical_name }, { "value", *value } });
                else
                    actions.push_back({ { "action", f.kind == FieldKind::Signature ? "SignOrInitial" : "PlaceText" },
                                        { "cx", c.x },
                                        { "cy", c.y },
                                        { "value", *value } });
            }
            nlohmann::ordered_json const terminate { { "action", "Terminate" } };
            auto const id = episode_id(doc, *persona, personas.size() > 1);
            if (mode == EpisodeMode::OneShot)
            {
                actions.push_back(terminate);
                script[id + "/0"] = actions.dump();
            }
            else
            {
                script[id + "/0"] = actions.dump();
                script[id + "/1"] = nlohmann::ordered_json::array({ terminate }).dump();
            }
        }
    }
    return script;
}

// }}}

} // namespace formbench
