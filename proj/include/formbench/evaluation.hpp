// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/agent.hpp>
#include <formbench/corpus.hpp>
#include <formbench/editor.hpp>
#include <formbench/persona.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace formbench {

struct FieldOutcome
{
    std::string field_id;
    std::string extracted_value;
    bool correct = false;
    std::vector<int> contributing_item_ids;
    /// Reason recorded when a manual-review override decided `correct`.
    std::optional<std::string> override_reason;

    friend bool operator==(const FieldOutcome&, const FieldOutcome&) = default;
};

struct Extraction
{
    std::string value;
    std::vector<int> item_ids;
};

/// Items whose center lies in the field's closed box, in reading order
/// (center y, then x, then item id), values joined by single spaces.
Extraction extract_field(const Canvas& canvas, const FieldSpec& field);
std::string extract_field_value(const Canvas& canvas, const FieldSpec& field);

/// One outcome per field the persona is expected to fill.
std::vector<FieldOutcome> score_form(const Canvas& canvas, const FormDocument& doc, const Persona& persona);

struct Tally
{
    std::int64_t correct = 0;
    std::int64_t fields = 0;

    double accuracy() const;
};

Tally tally(std::span<const FieldOutcome> outcomes);

/// Per dataset column, the accuracies of each setting; nullopt marks a
/// setting that was not run. Columns are averaged over their present
/// settings, then the macro average is the unweighted mean over columns.
using MacroInput = std::map<std::string, std::vector<std::optional<double>>>;
double aggregate_macro(const MacroInput& per_dataset);

struct PlacementCount
{
    std::int64_t placements = 0;
    std::int64_t fields = 0;
};

struct ErrorAttribution
{
    double understanding = 0.0;
    std::optional<double> reasoning;
    std::optional<double> localization;
};

/// understanding = sum |placements - fields| / sum fields.
double understanding_error(std::span<const PlacementCount> episodes);

ErrorAttribution error_attribution(std::span<const PlacementCount> episodes, std::optional<double> gt_coords_accuracy,
                                   std::optional<double> localization_accuracy);

struct ScatterPoint
{
    std::string dataset;
    double fields_per_form = 0.0;
    double accuracy = 0.0;
    bool english = true;
};

struct ScatterTable
{
    std::vector<ScatterPoint> points;
    /// Least-squares slope of accuracy over log10(fields per form), English
    /// datasets only; absent with fewer than two distinct x values.
    std::optional<double> slope;
};

ScatterTable accuracy_by_fields_per_form(std::vector<ScatterPoint> points);

// {{{ manual review overrides

struct Override
{
    bool correct = false;
    std::string reason;
};

/// Keys are "<field_id>" or "<episode_id>/<field_id>"; the latter wins.
using Overrides = std::map<std::string, Override>;

/// {"<key>": {"correct": bool, "reason": "..."}} or {"<key>": bool}.
Overrides load_overrides(const std::filesystem::path& path);

/// Returns the number of outcomes changed.
int apply_overrides(std::vector<FieldOutcome>& outcomes, std::string_view episode_id, const Overrides& overrides);

// }}}
// {{{ report

/// Table column label; Auto Loans is split by persona mode.
std::string dataset_column(SourceDataset dataset, PersonaMode persona_mode);

struct DatasetResult
{
    std::string column;
    double accuracy = 0.0;
    std::int64_t fields = 0;
    std::int64_t correct = 0;
    double fields_per_form = 0.0;
    bool english = true;
};

struct EpisodeOutcomes
{
    std::string episode_id;
    std::vector<FieldOutcome> outcomes;
};

struct EvaluationReport
{
    std::string run_id;
    std::string corpus_hash;
    std::string model_id;
    EpisodeMode mode = EpisodeMode::OneShot;
    Toolset toolset = Toolset::BaselineCoords;
    PersonaMode persona_mode = PersonaMode::Text;
    std::vector<DatasetResult> per_dataset;
    double macro_average = 0.0;
    CostReport cost;
    ErrorAttribution error_attribution;
    int failed_episodes = 0;
    std::vector<EpisodeOutcomes> per_field;
};

nlohmann::ordered_json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

/// One row per (model, setting, dataset), full precision.
std::string report_csv(std::span<const EvaluationReport> reports);

// }}}

} // namespace formbench
