// SPDX-License-Identifier: Apache-2.0

#include <formbench/errors.hpp>
#include <formbench/persona.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>

namespace formbench {

namespace {

constexpr std::string_view kPunctuation = ".,;:()-/";

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b]))
        ++b;
    while (e > b && is_space(s[e - 1]))
        --e;
    return std::string(s.substr(b, e - b));
}

void collect_fact_keys(const CorrectnessSpec& spec, std::vector<std::string>& out)
{
    out.insert(out.end(), spec.fact_keys.begin(), spec.fact_keys.end());
    for (auto const& child: spec.any_of)
        collect_fact_keys(child, out);
}

void require_facts(const CorrectnessSpec& spec, const Persona& persona)
{
    std::vector<std::string> keys;
    collect_fact_keys(spec, keys);
    for (auto const& key: keys)
        if (!persona.fact(key))
            throw UnsatisfiableSpec(
                fmt::format("persona '{}' has no fact '{}'", persona.persona_id, key));
}

std::string single_fact(const CorrectnessSpec& spec, const Persona& persona)
{
    return *persona.fact(spec.fact_keys.front());
}

// Replaces {key} placeholders with persona facts. Unknown keys were rejected
// by validate_spec, missing facts by require_facts.
std::string instantiate(std::string_view text, const Persona& persona)
{
    std::string out;
    std::size_t i = 0;
    while (i < text.size())
    {
        auto const open = text.find('{', i);
        if (open == std::string_view::npos)
        {
            out.append(text.substr(i));
            break;
        }
        auto const close = text.find('}', open);
        if (close == std::string_view::npos)
        {
            out.append(text.substr(i));
            break;
        }
        out.append(text.substr(i, open - i));
        auto const key = text.substr(open + 1, close - open - 1);
        auto const value = persona.fact(key);
        out.append(value ? *value : std::string(text.substr(open, close - open + 1)));
        i = close + 1;
    }
    return out;
}

std::vector<std::string> template_keys(std::string_view text)
{
    std::vector<std::string> keys;
    std::size_t i = 0;
    while ((i = text.find('{', i)) != std::string_view::npos)
    {
        auto const close = text.find('}', i);
        if (close == std::string_view::npos)
            break;
        keys.emplace_back(text.substr(i + 1, close - i - 1));
        i = close + 1;
    }
    return keys;
}

const std::vector<std::string>& formats_of(const CorrectnessSpec& spec)
{
    return spec.accepted_formats.empty() ? default_date_formats() : spec.accepted_formats;
}

std::optional<std::chrono::year_month_day> parse_any(std::string_view text,
                                                     const std::vector<std::string>& formats)
{
    for (auto const& f: formats)
        if (auto d = parse_date(text, f))
            return d;
    return std::nullopt;
}

std::optional<std::chrono::year_month_day> parse_fact_date(std::string_view text, const CorrectnessSpec& spec)
{
    if (auto d = parse_any(text, formats_of(spec)))
        return d;
    static const std::vector<std::string> fallback { "MM/DD/YYYY", "M/D/YYYY", "MM-DD-YYYY", "YYYY-MM-DD" };
    return parse_any(text, fallback);
}

std::string format_date(std::chrono::year_month_day d, std::string_view pattern)
{
    int const y = static_cast<int>(d.year());
    unsigned const m = static_cast<unsigned>(d.month());
    unsigned const dd = static_cast<unsigned>(d.day());
    std::string out;
    std::size_t i = 0;
    while (i < pattern.size())
    {
        auto const rest = pattern.substr(i);
        if (rest.starts_with("YYYY"))
        {
            out += fmt::format("{:04d}", y);
            i += 4;
        }
        else if (rest.starts_with("MM"))
        {
            out += fmt::format("{:02d}", m);
            i += 2;
        }
        else if (rest.starts_with("DD"))
        {
            out += fmt::format("{:02d}", dd);
            i += 2;
        }
        else if (rest.front() == 'M')
        {
            out += fmt::format("{}", m);
            ++i;
        }
        else if (rest.front() == 'D')
        {
            out += fmt::format("{}", dd);
            ++i;
        }
        else
        {
            out += rest.front();
            ++i;
        }
    }
    return out;
}

std::string kind_key(const CorrectnessSpec& spec)
{
    return std::string(to_string(spec.kind));
}

} // namespace

// {{{ Persona

std::optional<std::string> Persona::fact(std::string_view key) const
{
    for (auto const& [k, v]: facts)
        if (k == key)
            return v;
    return std::nullopt;
}

bool Persona::applies_to(std::string_view doc_id) const
{
    return doc_ids.empty() || std::find(doc_ids.begin(), doc_ids.end(), doc_id) != doc_ids.end();
}

std::vector<std::string> Persona::rendered_lines() const
{
    std::vector<std::string> lines;
    lines.reserve(facts.size());
    for (auto const& [key, value]: facts)
    {
        if (auto const label = labels.find(key); label != labels.end())
            lines.push_back(fmt::format("{}: {}", label->second, value));
        else
            lines.push_back(render_fact_line(key, value));
    }
    return lines;
}

std::string render_fact_line(std::string_view key, std::string_view value)
{
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (true)
    {
        auto const dot = key.find('.', start);
        std::string seg(key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        std::replace(seg.begin(), seg.end(), '_', ' ');
        segments.push_back(std::move(seg));
        if (dot == std::string_view::npos)
            break;
        start = dot + 1;
    }
    std::string subject = "The ";
    for (std::size_t i = 0; i + 1 < segments.size(); ++i)
        subject += segments[i] + "'s ";
    subject += segments.back();
    return fmt::format("{} is: {}", subject, value);
}

// }}}
// {{{ correctness

std::string normalize_text(std::string_view text, const Normalization& flags)
{
    std::string s(text);
    if (flags.case_insensitive)
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (flags.strip_punctuation)
        std::erase_if(s, [](char c) { return kPunctuation.find(c) != std::string_view::npos; });
    if (flags.collapse_whitespace)
    {
        std::string out;
        out.reserve(s.size());
        bool pending_space = false;
        for (char c: s)
        {
            if (is_space(c))
            {
                pending_space = !out.empty();
                continue;
            }
            if (pending_space)
                out += ' ';
            pending_space = false;
            out += c;
        }
        s = std::move(out);
    }
    return s;
}

std::optional<std::chrono::year_month_day> parse_date(std::string_view text, std::string_view pattern)
{
    int year = -1;
    int month = -1;
    int day = -1;
    std::size_t t = 0;
    std::size_t p = 0;

    auto read_digits = [&](std::size_t min_digits, std::size_t max_digits) -> std::optional<int> {
        std::size_t n = 0;
        int value = 0;
        while (n < max_digits && t + n < text.size() && std::isdigit(static_cast<unsigned char>(text[t + n])))
        {
            value = value * 10 + (text[t + n] - '0');
            ++n;
        }
        if (n < min_digits)
            return std::nullopt;
        t += n;
        return value;
    };

    while (p < pattern.size())
    {
        auto const rest = pattern.substr(p);
        std::optional<int> v;
        if (rest.starts_with("YYYY"))
        {
            if (!(v = read_digits(4, 4)))
                return std::nullopt;
            year = *v;
            p += 4;
        }
        else if (rest.starts_with("MM") || rest.starts_with("DD"))
        {
            if (!(v = read_digits(2, 2)))
                return std::nullopt;
            (rest.front() == 'M' ? month : day) = *v;
            p += 2;
        }
        else if (rest.front() == 'M' || rest.front() == 'D')
        {
            if (!(v = read_digits(1, 2)))
                return std::nullopt;
            (rest.front() == 'M' ? month : day) = *v;
            p += 1;
        }
        else
        {
            if (t >= text.size() || text[t] != rest.front())
                return std::nullopt;
            ++t;
            ++p;
        }
    }
    if (t != text.size() || year < 0 || month < 1 || month > 12 || day < 1 || day > 31)
        return std::nullopt;
    std::chrono::year_month_day const d { std::chrono::year { year }, std::chrono::month { static_cast<unsigned>(month) },
                                          std::chrono::day { static_cast<unsigned>(day) } };
    if (!d.ok())
        return std::nullopt;
    return d;
}

void validate_spec(const CorrectnessSpec& spec)
{
    switch (spec.kind)
    {
        case CorrectnessKind::Exact:
        case CorrectnessKind::Normalized:
        case CorrectnessKind::Date:
            if (spec.fact_keys.size() != 1)
                throw ConfigError(fmt::format("{} spec needs exactly one fact key", kind_key(spec)));
            break;
        case CorrectnessKind::EnumChoice:
            if (spec.fact_keys.size() != 1)
                throw ConfigError("ENUM_CHOICE spec needs exactly one fact key");
            if (spec.choices.empty())
                throw ConfigError("ENUM_CHOICE spec needs a non-empty choice list");
            break;
        case CorrectnessKind::Template:
            if (!spec.template_text)
                throw ConfigError("TEMPLATE spec needs a template");
            for (auto const& key: template_keys(*spec.template_text))
                if (std::find(spec.fact_keys.begin(), spec.fact_keys.end(), key) == spec.fact_keys.end())
                    throw ConfigError(fmt::format("template references undeclared fact '{}'", key));
            break;
        case CorrectnessKind::Checkbox:
            if (spec.fact_keys.size() > 1 || spec.fact_keys.size() != std::min<std::size_t>(spec.choices.size(), 1))
                throw ConfigError("CHECKBOX spec takes either no condition or one fact key with one choice");
            break;
        case CorrectnessKind::AnyOf:
            if (spec.any_of.size() < 2)
                throw ConfigError("ANY_OF spec needs at least two children");
            for (auto const& child: spec.any_of)
                validate_spec(child);
            break;
    }
}

bool evaluate_correctness(const CorrectnessSpec& spec, std::string_view input, const Persona& persona)
{
    require_facts(spec, persona);
    auto const& norm = spec.normalization;
    switch (spec.kind)
    {
        case CorrectnessKind::Exact: return input == single_fact(spec, persona);
        case CorrectnessKind::Normalized:
            return normalize_text(input, norm) == normalize_text(single_fact(spec, persona), norm);
        case CorrectnessKind::Template:
            return normalize_text(input, norm) == normalize_text(instantiate(*spec.template_text, persona), norm);
        case CorrectnessKind::Checkbox: return normalize_text(input, norm) == "x";
        case CorrectnessKind::EnumChoice: {
            auto const designated = normalize_text(single_fact(spec, persona), norm);
            bool const listed = std::any_of(spec.choices.begin(), spec.choices.end(), [&](auto const& c) {
                return normalize_text(c, norm) == designated;
            });
            if (!listed)
                throw UnsatisfiableSpec(fmt::format("persona '{}' designates '{}', which is not a listed choice",
                                                    persona.persona_id, single_fact(spec, persona)));
            return normalize_text(input, norm) == designated;
        }
        case CorrectnessKind::Date: {
            auto const truth = parse_fact_date(single_fact(spec, persona), spec);
            if (!truth)
                throw UnsatisfiableSpec(fmt::format("persona '{}' fact '{}' is not a date", persona.persona_id,
                                                    spec.fact_keys.front()));
            auto const given = parse_any(trim(input), formats_of(spec));
            return given && *given == *truth;
        }
        case CorrectnessKind::AnyOf:
            return std::any_of(spec.any_of.begin(), spec.any_of.end(),
                               [&](auto const& child) { return evaluate_correctness(child, input, persona); });
    }
    return false;
}

std::optional<std::string> witness_value(const CorrectnessSpec& spec, const Persona& persona)
{
    std::optional<std::string> candidate;
    try
    {
        switch (spec.kind)
        {
            case CorrectnessKind::Exact:
            case CorrectnessKind::Normalized:
            case CorrectnessKind::EnumChoice:
                if (auto f = persona.fact(spec.fact_keys.front()))
                    candidate = *f;
                break;
            case CorrectnessKind::Template: candidate = instantiate(*spec.template_text, persona); break;
            case CorrectnessKind::Checkbox: candidate = "x"; break;
            case CorrectnessKind::Date:
                if (auto f = persona.fact(spec.fact_keys.front()))
                    if (auto d = parse_fact_date(*f, spec))
                        candidate = format_date(*d, formats_of(spec).front());
                break;
            case CorrectnessKind::AnyOf:
                for (auto const& child: spec.any_of)
                    if (auto w = witness_value(child, persona))
                        return w;
                return std::nullopt;
        }
        if (!candidate || trim(*candidate).empty() || !evaluate_correctness(spec, *candidate, persona))
            return std::nullopt;
    }
    catch (const UnsatisfiableSpec&)
    {
        return std::nullopt;
    }
    return candidate;
}

bool checkbox_selected(const CorrectnessSpec& spec, const Persona& persona)
{
    if (spec.kind != CorrectnessKind::Checkbox || spec.fact_keys.empty() || spec.choices.empty())
        return true;
    auto const value = persona.fact(spec.fact_keys.front());
    if (!value)
        throw UnsatisfiableSpec(
            fmt::format("persona '{}' has no fact '{}'", persona.persona_id, spec.fact_keys.front()));
    return normalize_text(*value, spec.normalization) == normalize_text(spec.choices.front(), spec.normalization);
}

// }}}
// {{{ prompt rendering

std::string PersonaPrompt::text() const
{
    std::string out;
    for (auto const& line: lines)
    {
        out += line;
        out += '\n';
    }
    return out;
}

PersonaPrompt render_persona_prompt(const Persona& persona, PersonaMode mode)
{
    PersonaPrompt prompt;
    if (mode == PersonaMode::Text)
    {
        prompt.lines = persona.rendered_lines();
        return prompt;
    }
    if (persona.source_images.empty())
        throw ConfigError(fmt::format("persona '{}' has no source images for IMAGE mode", persona.persona_id));
    prompt.images = persona.source_images;
    auto const all = persona.rendered_lines();
    for (std::size_t i = 0; i < persona.facts.size(); ++i)
        if (!persona.covered_fact_keys.contains(persona.facts[i].first))
            prompt.lines.push_back(all[i]);
    return prompt;
}

// }}}
// {{{ serialization

std::string_view to_string(CorrectnessKind kind)
{
    switch (kind)
    {
        case CorrectnessKind::Exact: return "EXACT";
        case CorrectnessKind::Normalized: return "NORMALIZED";
        case CorrectnessKind::Template: return "TEMPLATE";
        case CorrectnessKind::Checkbox: return "CHECKBOX";
        case CorrectnessKind::EnumChoice: return "ENUM_CHOICE";
        case CorrectnessKind::Date: return "DATE";
        case CorrectnessKind::AnyOf: return "ANY_OF";
    }
    return "EXACT";
}

CorrectnessKind correctness_kind_from_string(std::string_view text)
{
    for (auto k: { CorrectnessKind::Exact, CorrectnessKind::Normalized, CorrectnessKind::Template,
                   CorrectnessKind::Checkbox, CorrectnessKind::EnumChoice, CorrectnessKind::Date,
                   CorrectnessKind::AnyOf })
        if (to_string(k) == text)
            return k;
    throw ConfigError(fmt::format("unknown correctness kind '{}'", text));
}

std::string_view to_string(PersonaMode mode)
{
    return mode == PersonaMode::Text ? "text" : "image";
}

PersonaMode persona_mode_from_string(std::string_view text)
{
    if (text == "text" || text == "TEXT")
        return PersonaMode::Text;
    if (text == "image" || text == "IMAGE")
        return PersonaMode::Image;
    throw ConfigError(fmt::format("unknown persona mode '{}'", text));
}

nlohmann::ordered_json spec_to_json(const CorrectnessSpec& spec)
{
    nlohmann::ordered_json j;
    j["kind"] = to_string(spec.kind);
    if (spec.template_text)
        j["template"] = *spec.template_text;
    j["fact_keys"] = spec.fact_keys;
    if (spec.normalization != Normalization {})
        j["normalization"] = { { "case_insensitive", spec.normalization.case_insensitive },
                               { "strip_punctuation", spec.normalization.strip_punctuation },
                               { "collapse_whitespace", spec.normalization.collapse_whitespace } };
    if (!spec.accepted_formats.empty())
        j["accepted_formats"] = spec.accepted_formats;
    if (!spec.choices.empty())
        j["choices"] = spec.choices;
    if (!spec.any_of.empty())
    {
        auto children = nlohmann::ordered_json::array();
        for (auto const& child: spec.any_of)
            children.push_back(spec_to_json(child));
        j["any_of"] = std::move(children);
    }
    return j;
}

CorrectnessSpec spec_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ConfigError("correctness spec must be an object");
    CorrectnessSpec spec;
    spec.kind = correctness_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("template"))
        spec.template_text = j.at("template").get<std::string>();
    spec.fact_keys = j.value("fact_keys", std::vector<std::string> {});
    if (j.contains("normalization"))
    {
        auto const& n = j.at("normalization");
        spec.normalization.case_insensitive = n.value("case_insensitive", true);
        spec.normalization.strip_punctuation = n.value("strip_punctuation", true);
        spec.normalization.collapse_whitespace = n.value("collapse_whitespace", true);
    }
    spec.accepted_formats = j.value("accepted_formats", std::vector<std::string> {});
    spec.choices = j.value("choices", std::vector<std::string> {});
    if (j.contains("any_of"))
        for (auto const& child: j.at("any_of"))
            spec.any_of.push_back(spec_from_json(child));
    validate_spec(spec);
    return spec;
}

Persona load_persona(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw MissingAsset(path, "persona file missing");
    nlohmann::ordered_json j;
    try
    {
        j = nlohmann::ordered_json::parse(in);
        Persona p;
        p.persona_id = j.at("persona_id").get<std::string>();
        for (auto const& [key, value]: j.at("facts").items())
            p.facts.emplace_back(key, value.get<std::string>());
        if (j.contains("labels"))
            for (auto const& [key, value]: j.at("labels").items())
                p.labels.emplace(key, value.get<std::string>());
        for (auto const& key: j.value("covered_fact_keys", std::vector<std::string> {}))
            p.covered_fact_keys.insert(key);
        p.doc_ids = j.value("doc_ids", std::vector<std::string> {});
        for (auto const& ref: j.value("source_images", nlohmann::ordered_json::array()))
        {
            SourceImage src;
            if (ref.is_string())
                src.path = ref.get<std::string>();
            else
            {
                src.path = ref.at("path").get<std::string>();
                src.doc_id = ref.value("doc_id", "");
            }
            if (src.doc_id.empty())
                src.doc_id = src.path.stem().string();
            src.image = load_image(path.parent_path() / src.path);
            p.source_images.push_back(std::move(src));
        }
        return p;
    }
    catch (const MissingAsset&)
    {
        throw;
    }
    catch (const std::exception& e)
    {
        throw CorpusError(path, fmt::format("malformed persona file: {}", e.what()));
    }
}

nlohmann::ordered_json persona_to_json(const Persona& persona)
{
    nlohmann::ordered_json j;
    j["persona_id"] = persona.persona_id;
    nlohmann::ordered_json facts = nlohmann::ordered_json::object();
    for (auto const& [k, v]: persona.facts)
        facts[k] = v;
    j["facts"] = std::move(facts);
    if (!persona.labels.empty())
        j["labels"] = persona.labels;
    j["covered_fact_keys"] = std::vector<std::string>(persona.covered_fact_keys.begin(), persona.covered_fact_keys.end());
    auto images = nlohmann::ordered_json::array();
    for (auto const& src: persona.source_images)
        images.push_back({ { "doc_id", src.doc_id }, { "path", src.path.generic_string() } });
    j["source_images"] = std::move(images);
    if (!persona.doc_ids.empty())
        j["doc_ids"] = persona.doc_ids;
    return j;
}

void write_persona(const Persona& persona, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    for (auto const& src: persona.source_images)
        if (!src.image.empty())
            save_png(path.parent_path() / src.path, src.image);
    std::ofstream out(path, std::ios::binary);
    out << persona_to_json(persona).dump(2) << '\n';
}

// }}}

} // namespace formbench
