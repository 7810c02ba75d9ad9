// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/image.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace formbench {

enum class CorrectnessKind
{
    Exact,
    Normalized,
    Template,
    Checkbox,
    EnumChoice,
    Date,
    AnyOf,
};

struct Normalization
{
    bool case_insensitive = true;
    bool strip_punctuation = true;
    bool collapse_whitespace = true;

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Declarative judge for a filled value.
///
/// EXACT, NORMALIZED, ENUM_CHOICE and DATE reference exactly one fact.
/// TEMPLATE instantiates `{fact_key}` placeholders. CHECKBOX accepts a single
/// "x"; when it names a fact and a choice, the box is expected to be ticked
/// only for personas whose fact equals that choice (see expects_value()).
struct CorrectnessSpec
{
    CorrectnessKind kind = CorrectnessKind::Exact;
    std::optional<std::string> template_text;
    std::vector<std::string> fact_keys;
    Normalization normalization;
    std::vector<std::string> accepted_formats;
    std::vector<std::string> choices;
    std::vector<CorrectnessSpec> any_of;

    friend bool operator==(const CorrectnessSpec&, const CorrectnessSpec&) = default;
};

/// Rejects structurally invalid specs (wrong fact count, template keys not
/// declared, ANY_OF with fewer than two children).
void validate_spec(const CorrectnessSpec& spec);

struct SourceImage
{
    std::string doc_id;
    Image image;
    std::filesystem::path path;
};

struct Persona
{
    std::string persona_id;
    /// Facts in display order.
    std::vector<std::pair<std::string, std::string>> facts;
    /// Optional display labels overriding the generated sentence for a fact.
    std::map<std::string, std::string> labels;
    std::vector<SourceImage> source_images;
    std::set<std::string> covered_fact_keys;
    /// Documents this persona applies to; empty means every document of the
    /// dataset split it ships with.
    std::vector<std::string> doc_ids;

    std::optional<std::string> fact(std::string_view key) const;
    bool applies_to(std::string_view doc_id) const;
    std::vector<std::string> rendered_lines() const;
};

/// "user.bank.name" + "KeyBank" -> "The user's bank's name is: KeyBank".
std::string render_fact_line(std::string_view key, std::string_view value);

std::string normalize_text(std::string_view text, const Normalization& flags);

/// Parses `text` under a date pattern built from YYYY, MM, DD (two digits),
/// M, D (one or two digits) and literal separators.
std::optional<std::chrono::year_month_day> parse_date(std::string_view text, std::string_view pattern);

inline const std::vector<std::string>& default_date_formats()
{
    static const std::vector<std::string> formats { "MM/DD/YYYY", "M/D/YYYY", "MM-DD-YYYY" };
    return formats;
}

/// Throws UnsatisfiableSpec when a referenced fact is missing.
bool evaluate_correctness(const CorrectnessSpec& spec, std::string_view input, const Persona& persona);

/// A value the spec accepts for this persona, or nullopt if none can be
/// constructed. Used for load-time satisfiability checks and scripted agents.
std::optional<std::string> witness_value(const CorrectnessSpec& spec, const Persona& persona);

/// Whether a CHECKBOX gated on a fact should be ticked for this persona.
/// Always true for other kinds.
bool checkbox_selected(const CorrectnessSpec& spec, const Persona& persona);

enum class PersonaMode
{
    Text,
    Image,
};

struct PersonaPrompt
{
    std::vector<std::string> lines;
    std::vector<SourceImage> images;

    std::string text() const;
};

PersonaPrompt render_persona_prompt(const Persona& persona, PersonaMode mode);

// Serialization
nlohmann::ordered_json spec_to_json(const CorrectnessSpec& spec);
CorrectnessSpec spec_from_json(const nlohmann::json& j);

/// Persona file: {persona_id, facts:{...}, labels?, covered_fact_keys, source_images:[paths], doc_ids?}.
/// Image paths resolve relative to the persona file's directory.
Persona load_persona(const std::filesystem::path& path);
nlohmann::ordered_json persona_to_json(const Persona& persona);
void write_persona(const Persona& persona, const std::filesystem::path& path);

std::string_view to_string(CorrectnessKind kind);
CorrectnessKind correctness_kind_from_string(std::string_view text);
std::string_view to_string(PersonaMode mode);
PersonaMode persona_mode_from_string(std::string_view text);

} // namespace formbench
