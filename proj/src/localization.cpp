// SPDX-License-Identifier: Apache-2.0

#include <formbench/errors.hpp>
#include <formbench/localization.hpp>

#include <httplib.h>

#include "url.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace formbench {

namespace {

std::string fold_case(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c: text)
    {
        if (std::isalnum(c) || c >= 0x80)
            current += static_cast<char>(std::tolower(c));
        else if (!current.empty())
        {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

std::string_view last_segment(std::string_view name)
{
    auto const bar = name.rfind('|');
    auto seg = bar == std::string_view::npos ? name : name.substr(bar + 1);
    while (!seg.empty() && seg.front() == ' ')
        seg.remove_prefix(1);
    while (!seg.empty() && seg.back() == ' ')
        seg.remove_suffix(1);
    return seg;
}

bool same_line(const BBox& a, const BBox& b)
{
    double const overlap = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
    return overlap > 0.0 && overlap >= 0.5 * std::min(a.height(), b.height());
}

std::size_t overlap_count(std::vector<std::string> a, std::vector<std::string> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    return common.size();
}

class SemaphoreSlot
{
  public:
    explicit SemaphoreSlot(std::counting_semaphore<1024>& s): sem_(s) { sem_.acquire(); }
    ~SemaphoreSlot() { sem_.release(); }
    SemaphoreSlot(const SemaphoreSlot&) = delete;
    SemaphoreSlot& operator=(const SemaphoreSlot&) = delete;

  private:
    std::counting_semaphore<1024>& sem_;
};

} // namespace

std::string_view to_string(LocalizerBackend backend)
{
    switch (backend)
    {
        case LocalizerBackend::Oracle: return "ORACLE";
        case LocalizerBackend::Heuristic: return "HEURISTIC";
        case LocalizerBackend::Remote: return "REMOTE";
    }
    return "ORACLE";
}

// {{{ oracle

OracleLocalizer::OracleLocalizer(std::span<const FormDocument> docs)
{
    for (auto const& doc: docs)
    {
        auto& table = fields_[doc.doc_id];
        for (auto const& f: doc.fields)
            table.emplace_back(f.hierarchical_name, f.bbox);
    }
}

LocalizationResult OracleLocalizer::locate(const LocalizationQuery& query) const
{
    auto const it = fields_.find(query.doc_id);
    if (it != fields_.end())
    {
        for (auto const& [name, box]: it->second)
            if (name == query.field_name)
                return { box, 1.0, LocalizerBackend::Oracle };
        auto const folded = fold_case(query.field_name);
        for (auto const& [name, box]: it->second)
            if (fold_case(name) == folded)
                return { box, 1.0, LocalizerBackend::Oracle };
    }
    throw LocalizationError(LocalizationErrorCode::FieldNotFound,
                            fmt::format("no field named '{}' in {}", query.field_name, query.doc_id));
}

// }}}
// {{{ heuristic

HeuristicLocalizer::HeuristicLocalizer(std::span<const FormDocument> docs)
{
    for (auto const& doc: docs)
        words_[doc.doc_id] = doc.words;
}

LocalizationResult HeuristicLocalizer::locate(const LocalizationQuery& query) const
{
    auto const it = words_.find(query.doc_id);
    if (it == words_.end() || it->second.empty())
        throw LocalizationError(LocalizationErrorCode::UnsupportedDocument,
                                fmt::format("{} has no word annotations", query.doc_id));
    auto const& words = it->second;
    auto const wanted = tokenize(last_segment(query.field_name));
    if (wanted.empty())
        throw LocalizationError(LocalizationErrorCode::FieldNotFound, "field name has no searchable tokens");

    struct Candidate
    {
        double score = 0.0;
        std::size_t first = 0;
        std::size_t last = 0;
        double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    };
    std::optional<Candidate> best;

    for (std::size_t first = 0; first < words.size(); ++first)
    {
        std::vector<std::string> span_tokens;
        double x0 = words[first].bbox.x0(), y0 = words[first].bbox.y0();
        double x1 = words[first].bbox.x1(), y1 = words[first].bbox.y1();
        for (std::size_t last = first; last < words.size() && last - first < wanted.size(); ++last)
        {
            auto const& w = words[last];
            if (last > first && (!same_line(words[first].bbox, w.bbox) || w.bbox.x0() < words[last - 1].bbox.x0()))
                break;
            auto const toks = tokenize(w.text);
            span_tokens.insert(span_tokens.end(), toks.begin(), toks.end());
            x1 = std::max(x1, w.bbox.x1());
            y0 = std::min(y0, w.bbox.y0());
            y1 = std::max(y1, w.bbox.y1());
            if (span_tokens.empty())
                continue;
            double const score = static_cast<double>(overlap_count(wanted, span_tokens))
                                 / static_cast<double>(std::max(wanted.size(), span_tokens.size()));
            if (score <= 0.0)
                continue;
            bool const better = !best || score > best->score
                                || (score == best->score && (y0 < best->y0 || (y0 == best->y0 && x0 < best->x0)));
            if (better)
                best = Candidate { score, first, last, x0, y0, x1, y1 };
        }
    }
    if (!best)
        throw LocalizationError(LocalizationErrorCode::FieldNotFound,
                                fmt::format("no label matching '{}' in {}", query.field_name, query.doc_id));

    BBox const label(best->x0, best->y0, best->x1, best->y1);
    double right = 1.0;
    for (std::size_t i = 0; i < words.size(); ++i)
    {
        if (i >= best->first && i <= best->last)
            continue;
        auto const& w = words[i].bbox;
        if (w.x0() > label.x1() && same_line(label, w))
            right = std::min(right, w.x0());
    }
    if (!(label.x1() < right))
        throw LocalizationError(LocalizationErrorCode::FieldNotFound,
                                fmt::format("label for '{}' leaves no space to its right", query.field_name));
    return { BBox(label.x1(), label.y0(), right, label.y1()), best->score, LocalizerBackend::Heuristic };
}

// }}}
// {{{ remote

RemoteLocalizer::RemoteLocalizer(std::string base_url, RemoteOptions options)
    : base_url_(std::move(base_url)), options_(options), in_flight_(std::clamp(options.max_in_flight, 1, 1024))
{
}

RemoteLocalizer::~RemoteLocalizer() = default;

LocalizationResult RemoteLocalizer::locate(const LocalizationQuery& query) const
{
    auto const [host, prefix] = detail::split_url(base_url_);
    nlohmann::json body { { "image", base64_encode(encode_png(query.image)) }, { "field_name", query.field_name } };

    SemaphoreSlot slot(in_flight_);
    httplib::Client client(host);
    auto const seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    auto const micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    auto const response = client.Post(prefix + "/v1/locate", body.dump(), "application/json");

    if (!response)
        throw LocalizationError(LocalizationErrorCode::BackendUnavailable,
                                fmt::format("localizer {} unreachable: {}", base_url_, httplib::to_string(response.error())));
    if (response->status == 422)
        throw LocalizationError(LocalizationErrorCode::FieldNotFound,
                                fmt::format("localizer found no field '{}'", query.field_name));
    if (response->status != 200)
        throw LocalizationError(LocalizationErrorCode::BackendUnavailable,
                                fmt::format("localizer {} answered HTTP {}", base_url_, response->status));
    try
    {
        auto const j = nlohmann::json::parse(response->body);
        BBox const box = bbox_from_json(j.at("bbox"));
        if (!box.within_unit())
            throw InvalidGeometry("bbox outside the unit square");
        std::optional<double> confidence;
        if (j.contains("confidence") && j["confidence"].is_number())
            confidence = j["confidence"].get<double>();
        return { box, confidence, LocalizerBackend::Remote };
    }
    catch (const std::exception& e)
    {
        throw LocalizationError(LocalizationErrorCode::BackendUnavailable,
                                fmt::format("localizer {} sent an invalid response: {}", base_url_, e.what()));
    }
}

bool RemoteLocalizer::healthy() const
{
    auto const [host, prefix] = detail::split_url(base_url_);
    httplib::Client client(host);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count());
    auto const response = client.Get(prefix + "/v1/health");
    if (!response || response->status != 200)
        return false;
    auto const j = nlohmann::json::parse(response->body, nullptr, false);
    return !j.is_discarded() && j.value("status", "") == "ok";
}

// }}}

std::unique_ptr<Localizer> make_localizer(std::string_view descriptor, std::span<const FormDocument> docs,
                                          RemoteOptions options)
{
    if (descriptor == "oracle")
        return std::make_unique<OracleLocalizer>(docs);
    if (descriptor == "heuristic")
        return std::make_unique<HeuristicLocalizer>(docs);
    if (descriptor.starts_with("remote:") && descriptor.size() > 7)
        return std::make_unique<RemoteLocalizer>(std::string(descriptor.substr(7)), options);
    throw ConfigError(fmt::format("unknown localization backend '{}'", descriptor));
}

double localization_accuracy(std::span<const LocalizationPrediction> predictions,
                             const std::map<QueryKey, BBox>& truth)
{
    if (predictions.empty())
        throw EvaluationInputError("no predictions to score");
    std::size_t correct = 0;
    for (auto const& p: predictions)
    {
        auto const it = truth.find(p.query);
        if (it == truth.end())
            throw EvaluationInputError(
                fmt::format("no ground truth for '{}' in {}", p.query.field_name, p.query.doc_id));
        if (p.result && contains(it->second, center(p.result->bbox)))
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

ActionFeedback place_by_field_name(Canvas& canvas, const FormDocument& doc, std::string_view field_name,
                                   std::string_view value, const Localizer& localizer)
{
    if (canvas.terminated())
        throw EpisodeOver("canvas already terminated");
    LocalizationResult located { BBox(0, 0, 1, 1), std::nullopt, localizer.backend() };
    try
    {
        located = localizer.locate(LocalizationQuery { doc.doc_id, canvas.base(), std::string(field_name) });
    }
    catch (const LocalizationError& e)
    {
        return { 0, FeedbackStatus::LocalizationFailed, e.what(), 0 };
    }
    double const font = std::min(canvas.font_height_frac(), located.bbox.height());
    return canvas.place(ItemKind::Text, value, center(located.bbox), font);
}

} // namespace formbench
