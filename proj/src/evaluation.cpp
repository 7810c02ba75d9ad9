// SPDX-License-Identifier: Apache-2.0

#include <formbench/errors.hpp>
#include <formbench/evaluation.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace formbench {

Extraction extract_field(const Canvas& canvas, const FieldSpec& field)
{
    std::vector<const PlacedItem*> inside;
    for (auto const& item: canvas.items())
        if (contains(field.bbox, item.center))
            inside.push_back(&item);
    std::sort(inside.begin(), inside.end(), [](const PlacedItem* a, const PlacedItem* b) {
        if (a->center.y != b->center.y)
            return a->center.y < b->center.y;
        if (a->center.x != b->center.x)
            return a->center.x < b->center.x;
        return a->item_id < b->item_id;
    });
    Extraction out;
    for (auto const* item: inside)
    {
        if (!out.item_ids.empty())
            out.value += ' ';
        out.value += item->value;
        out.item_ids.push_back(item->item_id);
    }
    return out;
}

std::string extract_field_value(const Canvas& canvas, const FieldSpec& field)
{
    return extract_field(canvas, field).value;
}

std::vector<FieldOutcome> score_form(const Canvas& canvas, const FormDocument& doc, const Persona& persona)
{
    std::vector<FieldOutcome> outcomes;
    for (auto const& field: doc.fields)
    {
        if (!expects_value(field, persona))
            continue;
        auto extraction = extract_field(canvas, field);
        bool const correct = !extraction.value.empty()
                             && evaluate_correctness(field.correctness, extraction.value, persona);
        outcomes.push_back({ field.field_id, std::move(extraction.value), correct, std::move(extraction.item_ids), {} });
    }
    return outcomes;
}

double Tally::accuracy() const
{
    if (fields <= 0)
        throw EvaluationInputError("accuracy over zero fields");
    return static_cast<double>(correct) / static_cast<double>(fields);
}

Tally tally(std::span<const FieldOutcome> outcomes)
{
    Tally t;
    for (auto const& o: outcomes)
    {
        ++t.fields;
        t.correct += o.correct ? 1 : 0;
    }
    return t;
}

double aggregate_macro(const MacroInput& per_dataset)
{
    if (per_dataset.empty())
        throw EvaluationInputError("macro average over no datasets");
    double sum = 0.0;
    int columns = 0;
    for (auto const& [name, settings]: per_dataset)
    {
        double column = 0.0;
        int present = 0;
        for (auto const& v: settings)
            if (v)
            {
                column += *v;
                ++present;
            }
        if (present == 0)
            continue;
        sum += column / present;
        ++columns;
    }
    if (columns == 0)
        throw EvaluationInputError("macro average: every dataset column is empty");
    return sum / columns;
}

double understanding_error(std::span<const PlacementCount> episodes)
{
    std::int64_t diff = 0;
    std::int64_t fields = 0;
    for (auto const& e: episodes)
    {
        diff += std::llabs(e.placements - e.fields);
        fields += e.fields;
    }
    if (fields == 0)
        throw EvaluationInputError("understanding error over zero fields");
    return static_cast<double>(diff) / static_cast<double>(fields);
}

ErrorAttribution error_attribution(std::span<const PlacementCount> episodes, std::optional<double> gt_coords_accuracy,
                                   std::optional<double> localization_accuracy)
{
    ErrorAttribution out;
    out.understanding = understanding_error(episodes);
    if (gt_coords_accuracy)
        out.reasoning = 1.0 - *gt_coords_accuracy;
    if (localization_accuracy)
        out.localization = 1.0 - *localization_accuracy;
    return out;
}

ScatterTable accuracy_by_fields_per_form(std::vector<ScatterPoint> points)
{
    ScatterTable table;
    std::vector<double> xs, ys;
    for (auto const& p: points)
        if (p.english && p.fields_per_form > 0.0)
        {
            xs.push_back(std::log10(p.fields_per_form));
            ys.push_back(p.accuracy);
        }
    table.points = std::move(points);
    if (xs.size() < 2)
        return table;
    double const n = static_cast<double>(xs.size());
    double const mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double const my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0.0)
        table.slope = sxy / sxx;
    return table;
}

// {{{ overrides

Overrides load_overrides(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open override file {}", path.string()));
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ConfigError(fmt::format("override file {} is not valid JSON: {}", path.string(), e.what()));
    }
    if (!j.is_object())
        throw ConfigError(fmt::format("override file {} must hold an object", path.string()));
    Overrides out;
    for (auto const& [key, value]: j.items())
    {
        if (value.is_boolean())
            out[key] = { value.get<bool>(), "" };
        else if (value.is_object() && value.contains("correct") && value["correct"].is_boolean())
            out[key] = { value["correct"].get<bool>(), value.value("reason", "") };
        else
            throw ConfigError(fmt::format("override '{}' in {} needs a boolean 'correct'", key, path.string()));
    }
    return out;
}

int apply_overrides(std::vector<FieldOutcome>& outcomes, std::string_view episode_id, const Overrides& overrides)
{
    int changed = 0;
    for (auto& o: outcomes)
    {
        auto it = overrides.find(fmt::format("{}/{}", episode_id, o.field_id));
        if (it == overrides.end())
            it = overrides.find(o.field_id);
        if (it == overrides.end())
            continue;
        if (o.correct != it->second.correct)
            ++changed;
        o.correct = it->second.correct;
        o.override_reason = it->second.reason.empty() ? std::string("manual review") : it->second.reason;
    }
    return changed;
}

// }}}
// {{{ report

std::string dataset_column(SourceDataset dataset, PersonaMode persona_mode)
{
    if (dataset == SourceDataset::AutoLoans)
        return fmt::format("{} ({})", to_string(dataset), to_string(persona_mode));
    return std::string(to_string(dataset));
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j[key].is_null())
        return std::nullopt;
    return j[key].get<double>();
}

} // namespace

nlohmann::ordered_json report_to_json(const EvaluationReport& r)
{
    nlohmann::ordered_json per_dataset = nlohmann::ordered_json::object();
    for (auto const& d: r.per_dataset)
        per_dataset[d.column] = { { "accuracy", d.accuracy },
                                  { "fields", d.fields },
                                  { "correct", d.correct },
                                  { "fields_per_form", d.fields_per_form },
                                  { "english", d.english } };
    nlohmann::ordered_json per_field = nlohmann::ordered_json::array();
    for (auto const& e: r.per_field)
        for (auto const& o: e.outcomes)
        {
            nlohmann::ordered_json f { { "episode_id", e.episode_id },
                                       { "field_id", o.field_id },
                                       { "extracted_value", o.extracted_value },
                                       { "correct", o.correct },
                                       { "contributing_item_ids", o.contributing_item_ids } };
            if (o.override_reason)
                f["override"] = *o.override_reason;
            per_field.push_back(std::move(f));
        }
    return { { "run_id", r.run_id },
             { "corpus_hash", r.corpus_hash },
             { "config",
               { { "model_id", r.model_id },
                 { "mode", to_string(r.mode) },
                 { "toolset", to_string(r.toolset) },
                 { "persona_mode", to_string(r.persona_mode) } } },
             { "per_dataset", std::move(per_dataset) },
             { "macro_average", r.macro_average },
             { "cost",
               { { "usd_total", r.cost.usd_total },
                 { "usd_per_thousand_fields", r.cost.usd_per_thousand_fields },
                 { "fields_attempted", r.cost.fields_attempted } } },
             { "error_attribution",
               { { "understanding", r.error_attribution.understanding },
                 { "reasoning", optional_json(r.error_attribution.reasoning) },
                 { "localization", optional_json(r.error_attribution.localization) } } },
             { "failed_episodes", r.failed_episodes },
             { "per_field", std::move(per_field) } };
}

EvaluationReport report_from_json(const nlohmann::json& j)
{
    try
    {
        EvaluationReport r;
        r.run_id = j.at("run_id").get<std::string>();
        r.corpus_hash = j.at("corpus_hash").get<std::string>();
        auto const& config = j.at("config");
        r.model_id = config.at("model_id").get<std::string>();
        r.mode = episode_mode_from_string(config.at("mode").get<std::string>());
        r.toolset = toolset_from_string(config.at("toolset").get<std::string>());
        r.persona_mode = persona_mode_from_string(config.at("persona_mode").get<std::string>());
        for (auto const& [column, d]: j.at("per_dataset").items())
            r.per_dataset.push_back({ column, d.at("accuracy").get<double>(), d.at("fields").get<std::int64_t>(),
                                      d.at("correct").get<std::int64_t>(), d.value("fields_per_form", 0.0),
                                      d.value("english", true) });
        r.macro_average = j.at("macro_average").get<double>();
        auto const& cost = j.at("cost");
        r.cost = { cost.at("usd_total").get<double>(), cost.at("usd_per_thousand_fields").get<double>(),
                   cost.at("fields_attempted").get<std::int64_t>() };
        auto const& ea = j.at("error_attribution");
        r.error_attribution = { ea.at("understanding").get<double>(), optional_from(ea, "reasoning"),
                                optional_from(ea, "localization") };
        r.failed_episodes = j.value("failed_episodes", 0);
        std::map<std::string, std::size_t> index;
        for (auto const& f: j.at("per_field"))
        {
            auto const episode = f.at("episode_id").get<std::string>();
            auto [it, inserted] = index.try_emplace(episode, r.per_field.size());
            if (inserted)
                r.per_field.push_back({ episode, {} });
            FieldOutcome o { f.at("field_id").get<std::string>(), f.at("extracted_value").get<std::string>(),
                             f.at("correct").get<bool>(), f.at("contributing_item_ids").get<std::vector<int>>(), {} };
            if (f.contains("override"))
                o.override_reason = f["override"].get<std::string>();
            r.per_field[it->second].outcomes.push_back(std::move(o));
        }
        return r;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw EvaluationInputError(fmt::format("malformed report: {}", e.what()));
    }
}

std::string report_csv(std::span<const EvaluationReport> reports)
{
    std::string out = "model,toolset,mode,persona_mode,dataset,accuracy,fields,correct,macro_average,"
                      "usd_per_thousand_fields\n";
    for (auto const& r: reports)
        for (auto const& d: r.per_dataset)
            out += fmt::format("\"{}\",{},{},{},\"{}\",{},{},{},{},{}\n", r.model_id, to_string(r.toolset),
                               to_string(r.mode), to_string(r.persona_mode), d.column, d.accuracy, d.fields, d.correct,
                               r.macro_average, r.cost.usd_per_thousand_fields);
    return out;
}

// }}}

} // namespace formbench
