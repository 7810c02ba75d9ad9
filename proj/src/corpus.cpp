// SPDX-License-Identifier: Apache-2.0

#include <formbench/corpus.hpp>
#include <formbench/errors.hpp>

#include <opencv2/core.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>

namespace formbench {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSeparator = " | ";

std::vector<fs::path> sorted_files(const fs::path& dir, std::string_view extension)
{
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
        return files;
    for (auto const& entry: fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == extension)
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw MissingAsset(path, "file missing");
    try
    {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw CorpusError(path, fmt::format("malformed JSON: {}", e.what()));
    }
}

std::string trim_copy(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Orders, clamps and widens a raw annotation box to a valid pixel box.
PixelBBox sanitize_pixel_box(const nlohmann::json& box, ImageSize size)
{
    if (!box.is_array() || box.size() != 4)
        throw InvalidGeometry("annotation box must have 4 coordinates");
    auto const coord = [&](int i) { return static_cast<int>(std::lround(box[i].get<double>())); };
    int x0 = std::min(coord(0), coord(2));
    int x1 = std::max(coord(0), coord(2));
    int y0 = std::min(coord(1), coord(3));
    int y1 = std::max(coord(1), coord(3));
    x0 = std::clamp(x0, 0, size.width - 1);
    y0 = std::clamp(y0, 0, size.height - 1);
    x1 = std::clamp(x1, x0 + 1, size.width);
    y1 = std::clamp(y1, y0 + 1, size.height);
    return PixelBBox { x0, y0, x1, y1 };
}

std::string strip_label(std::string_view name)
{
    std::string label = trim_copy(name);
    while (!label.empty() && (label.back() == ':' || label.back() == ' '))
        label.pop_back();
    return label.empty() ? trim_copy(name) : label;
}

struct Entity
{
    int id = 0;
    std::string text;
    std::string label;
    nlohmann::json box;
    nlohmann::json words;
    nlohmann::json linking;
};

// Shared FUNSD/XFUND conversion: one field per question -> answer link.
ConvertedDocument convert_relations(std::string doc_id, const std::vector<Entity>& entities, Image image,
                                    SourceDataset dataset, std::string language)
{
    ImageSize const size = size_of(image);
    std::map<int, const Entity*> by_id;
    for (auto const& e: entities)
        by_id[e.id] = &e;

    ConvertedDocument out;
    FormDocument& doc = out.document;
    doc.doc_id = doc_id;
    doc.image = std::move(image);
    doc.image_path = fs::path("images") / (doc_id + ".png");
    doc.width = size.width;
    doc.height = size.height;
    doc.source_dataset = dataset;
    doc.language = std::move(language);

    out.persona.persona_id = doc_id;
    out.persona.doc_ids = { doc_id };

    std::set<std::pair<int, int>> seen;
    std::set<int> redacted;
    for (auto const& e: entities)
    {
        for (auto const& link: e.linking)
        {
            if (!link.is_array() || link.size() != 2)
                continue;
            int const a = link[0].get<int>();
            int const b = link[1].get<int>();
            auto const ia = by_id.find(a);
            auto const ib = by_id.find(b);
            if (ia == by_id.end() || ib == by_id.end())
                continue;
            const Entity* key = ia->second;
            const Entity* value = ib->second;
            if (key->label == "answer" && value->label == "question")
                std::swap(key, value);
            if (key->label != "question" || value->label != "answer")
                continue;
            if (!seen.emplace(key->id, value->id).second)
                continue;
            redacted.insert(value->id);

            FieldSpec field {
                .field_id = fmt::format("{}:{}-{}", doc_id, key->id, value->id),
                .name = trim_copy(key->text),
                .hierarchical_name = trim_copy(key->text),
                .bbox = normalize(sanitize_pixel_box(value->box, size), size),
                .kind = FieldKind::Text,
                .correctness = {},
                .expected_nonempty = !trim_copy(value->text).empty(),
            };
            field.correctness.kind = CorrectnessKind::Exact;
            field.correctness.fact_keys = { field.field_id };
            out.persona.facts.emplace_back(field.field_id, value->text);
            out.persona.labels.emplace(field.field_id, strip_label(key->text));
            doc.fields.push_back(std::move(field));
        }
    }

    // Value words are erased from the blank form, so they are not kept.
    for (auto const& e: entities)
        if (!redacted.contains(e.id))
            for (auto const& w: e.words)
                doc.words.push_back(WordAnnotation { w.value("text", ""),
                                                     normalize(sanitize_pixel_box(w.at("box"), size), size) });
    return out;
}

Entity entity_from_json(const nlohmann::json& j)
{
    return Entity {
        .id = j.at("id").get<int>(),
        .text = j.value("text", ""),
        .label = j.value("label", "other"),
        .box = j.at("box"),
        .words = j.value("words", nlohmann::json::array()),
        .linking = j.value("linking", nlohmann::json::array()),
    };
}

std::string dataset_dir_name(SourceDataset dataset)
{
    return std::string(to_string(dataset));
}

const std::set<std::string>& xfund_languages()
{
    static const std::set<std::string> langs { "zh", "ja", "es", "fr", "it", "de", "pt" };
    return langs;
}

} // namespace

// {{{ FormDocument / CorpusSplit

const FieldSpec* FormDocument::find_field(std::string_view field_id) const
{
    for (auto const& f: fields)
        if (f.field_id == field_id)
            return &f;
    return nullptr;
}

std::vector<const Persona*> CorpusSplit::personas_for(const FormDocument& doc) const
{
    std::vector<const Persona*> out;
    for (auto const& p: personas)
        if (p.applies_to(doc.doc_id))
            out.push_back(&p);
    return out;
}

// }}}
// {{{ operations

std::string build_hierarchical_name(std::string_view name, std::span<const std::string> ancestors)
{
    if (ancestors.empty())
        return std::string(name);
    std::string out;
    for (auto const& segment: ancestors)
    {
        if (segment.find('|') != std::string::npos)
            throw InvalidSegment(fmt::format("segment '{}' contains '|'", segment));
        out += segment;
        out += kSeparator;
    }
    if (name.find('|') != std::string_view::npos)
        throw InvalidSegment(fmt::format("segment '{}' contains '|'", name));
    out += name;
    return out;
}

std::string build_hierarchical_name(const FieldSpec& field, std::span<const std::string> ancestors)
{
    return build_hierarchical_name(field.name, ancestors);
}

Image redact_values(const FormDocument& doc)
{
    if (doc.image.empty())
        throw MissingAsset(doc.image_path, "document has no image");
    Image out = doc.image.clone();
    int const W = out.cols;
    int const H = out.rows;
    ImageSize const size { W, H };

    cv::Mat1b mask(H, W, static_cast<unsigned char>(0));
    std::vector<PixelBBox> full_width;
    for (auto const& field: doc.fields)
    {
        PixelBBox const pb = denormalize(field.bbox, size);
        if (pb.px0 == 0 && pb.px1 == W)
            full_width.push_back(pb);
        else
            mask(cv::Rect(pb.px0, pb.py0, pb.width(), pb.height())).setTo(1);
    }

    auto median_fill = [&](const PixelBBox& pb) {
        std::array<std::vector<unsigned char>, 3> channels;
        auto take_row = [&](int y, int x0, int x1) {
            for (int x = x0; x < x1; ++x)
            {
                auto const& px = doc.image.at<cv::Vec3b>(y, x);
                for (int c = 0; c < 3; ++c)
                    channels[c].push_back(px[c]);
            }
        };
        if (pb.py0 > 0)
            take_row(pb.py0 - 1, pb.px0, pb.px1);
        if (pb.py1 < H)
            take_row(pb.py1, pb.px0, pb.px1);
        if (pb.px0 > 0)
            for (int y = pb.py0; y < pb.py1; ++y)
                take_row(y, pb.px0 - 1, pb.px0);
        if (pb.px1 < W)
            for (int y = pb.py0; y < pb.py1; ++y)
                take_row(y, pb.px1, pb.px1 + 1);
        if (channels[0].empty())
        {
            // The box covers the whole image: use its own outermost ring.
            take_row(pb.py0, pb.px0, pb.px1);
            take_row(pb.py1 - 1, pb.px0, pb.px1);
        }
        cv::Vec3b color;
        for (int c = 0; c < 3; ++c)
        {
            auto& v = channels[c];
            auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
            std::nth_element(v.begin(), mid, v.end());
            color[c] = *mid;
        }
        out(cv::Rect(pb.px0, pb.py0, pb.width(), pb.height())).setTo(color);
    };
    for (auto const& pb: full_width)
        median_fill(pb);

    for (int y = 0; y < H; ++y)
    {
        int x = 0;
        while (x < W)
        {
            if (!mask(y, x))
            {
                ++x;
                continue;
            }
            int const start = x;
            while (x < W && mask(y, x))
                ++x;
            int const left = start - 1;
            int const right = x;
            if (left < 0 && right >= W)
            {
                median_fill(PixelBBox { start, y, x, y + 1 });
                continue;
            }
            cv::Vec3b const lc = out.at<cv::Vec3b>(y, left < 0 ? right : left);
            cv::Vec3b const rc = out.at<cv::Vec3b>(y, right >= W ? left : right);
            double const span = static_cast<double>(right - left);
            for (int i = start; i < x; ++i)
            {
                double const t = (left < 0 || right >= W) ? 0.0 : (i - left) / span;
                cv::Vec3b& px = out.at<cv::Vec3b>(y, i);
                for (int c = 0; c < 3; ++c)
                    px[c] = cv::saturate_cast<unsigned char>(lc[c] * (1.0 - t) + rc[c] * t);
            }
        }
    }
    return out;
}

DatasetStats dataset_stats(std::span<const FormDocument> docs, Split split)
{
    if (docs.empty())
        throw EmptyDataset("cannot compute statistics of an empty dataset");
    DatasetStats stats;
    stats.split = split;
    stats.forms = docs.size();
    std::set<std::string> languages;
    for (auto const& d: docs)
    {
        stats.fields += d.fields.size();
        languages.insert(d.language);
    }
    stats.languages = languages.size();
    stats.fields_per_form = static_cast<double>(stats.fields) / static_cast<double>(stats.forms);
    return stats;
}

bool expects_value(const FieldSpec& field, const Persona& persona)
{
    return field.expected_nonempty && checkbox_selected(field.correctness, persona);
}

void validate_document(const FormDocument& doc)
{
    std::set<std::string> ids;
    for (auto const& f: doc.fields)
    {
        if (!ids.insert(f.field_id).second)
            throw Error(fmt::format("duplicate field id '{}'", f.field_id));
        if (!f.bbox.within_unit())
            throw InvalidGeometry(fmt::format("field '{}' box lies outside the page", f.field_id));
        std::string const suffix = std::string(kSeparator) + f.name;
        if (f.hierarchical_name != f.name && !f.hierarchical_name.ends_with(suffix))
            throw Error(fmt::format("field '{}' hierarchical name '{}' does not end with '{}'", f.field_id,
                                    f.hierarchical_name, f.name));
        validate_spec(f.correctness);
    }
    if (doc.source_dataset == SourceDataset::AutoLoans || doc.source_dataset == SourceDataset::Synthetic)
        for (std::size_t i = 0; i < doc.fields.size(); ++i)
            for (std::size_t j = i + 1; j < doc.fields.size(); ++j)
                if (intersects(doc.fields[i].bbox, doc.fields[j].bbox))
                    throw InvalidGeometry(fmt::format("fields '{}' and '{}' overlap", doc.fields[i].field_id,
                                                      doc.fields[j].field_id));
}

void check_satisfiable(const CorpusSplit& split, const fs::path& where)
{
    std::vector<std::string> problems;
    for (auto const& doc: split.documents)
    {
        auto const personas = split.personas_for(doc);
        if (personas.empty())
        {
            problems.push_back(fmt::format("{}: no persona applies", doc.doc_id));
            continue;
        }
        for (auto const* persona: personas)
            for (auto const& field: doc.fields)
            {
                try
                {
                    if (expects_value(field, *persona) && !witness_value(field.correctness, *persona))
                        problems.push_back(fmt::format("{}/{}: no accepted value for persona '{}'", doc.doc_id,
                                                       field.field_id, persona->persona_id));
                }
                catch (const UnsatisfiableSpec& e)
                {
                    problems.push_back(fmt::format("{}/{}: {}", doc.doc_id, field.field_id, e.what()));
                }
            }
    }
    if (!problems.empty())
    {
        std::string message = "unsatisfiable correctness specs:";
        for (auto const& p: problems)
            message += "\n  " + p;
        throw CorpusError(where, message);
    }
}

// }}}
// {{{ canonical schema

nlohmann::ordered_json document_to_json(const FormDocument& doc)
{
    nlohmann::ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["image"] = doc.image_path.generic_string();
    j["width"] = doc.width;
    j["height"] = doc.height;
    j["language"] = doc.language;
    auto fields = nlohmann::ordered_json::array();
    for (auto const& f: doc.fields)
    {
        nlohmann::ordered_json jf;
        jf["field_id"] = f.field_id;
        jf["name"] = f.name;
        jf["hierarchical_name"] = f.hierarchical_name;
        jf["bbox"] = bbox_to_json(f.bbox);
        jf["kind"] = to_string(f.kind);
        jf["expected_nonempty"] = f.expected_nonempty;
        jf["correctness"] = spec_to_json(f.correctness);
        fields.push_back(std::move(jf));
    }
    j["fields"] = std::move(fields);
    auto words = nlohmann::ordered_json::array();
    for (auto const& w: doc.words)
        words.push_back({ { "text", w.text }, { "bbox", bbox_to_json(w.bbox) } });
    j["words"] = std::move(words);
    return j;
}

FormDocument document_from_json(const nlohmann::json& j, const fs::path& split_dir, SourceDataset dataset)
{
    FormDocument doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.image_path = j.at("image").get<std::string>();
    doc.width = j.at("width").get<int>();
    doc.height = j.at("height").get<int>();
    doc.language = j.value("language", "und");
    doc.source_dataset = dataset;
    for (auto const& jf: j.at("fields"))
    {
        doc.fields.push_back(FieldSpec {
            .field_id = jf.at("field_id").get<std::string>(),
            .name = jf.at("name").get<std::string>(),
            .hierarchical_name = jf.value("hierarchical_name", jf.at("name").get<std::string>()),
            .bbox = bbox_from_json(jf.at("bbox")),
            .kind = field_kind_from_string(jf.value("kind", "TEXT")),
            .correctness = spec_from_json(jf.at("correctness")),
            .expected_nonempty = jf.value("expected_nonempty", true),
        });
    }
    for (auto const& jw: j.value("words", nlohmann::json::array()))
        doc.words.push_back(WordAnnotation { jw.at("text").get<std::string>(), bbox_from_json(jw.at("bbox")) });

    fs::path const image_file = split_dir / doc.image_path;
    if (!fs::exists(image_file))
        throw MissingAsset(image_file, "image missing");
    doc.image = load_image(image_file);
    if (doc.image.cols != doc.width || doc.image.rows != doc.height)
        throw InvalidImageDimensions(fmt::format("{}: image is {}x{}, annotation says {}x{}", image_file.string(),
                                                 doc.image.cols, doc.image.rows, doc.width, doc.height));
    validate_document(doc);
    return doc;
}

FormDocument load_canonical_document(const fs::path& annotation_path, SourceDataset dataset)
{
    auto const j = read_json(annotation_path);
    try
    {
        return document_from_json(j, annotation_path.parent_path().parent_path(), dataset);
    }
    catch (const CorpusError&)
    {
        throw;
    }
    catch (const std::exception& e)
    {
        throw CorpusError(annotation_path, e.what());
    }
}

void write_canonical_document(const FormDocument& doc, const fs::path& split_dir)
{
    fs::create_directories(split_dir / "annotations");
    save_png(split_dir / doc.image_path, doc.image);
    std::ofstream out(split_dir / "annotations" / (doc.doc_id + ".json"), std::ios::binary);
    out << document_to_json(doc).dump(2) << '\n';
}

fs::path split_directory(const fs::path& root, SourceDataset dataset, Split split)
{
    return root / dataset_dir_name(dataset) / std::string(to_string(split));
}

CorpusSplit load_canonical_split(const fs::path& root, SourceDataset dataset, Split split)
{
    fs::path const dir = split_directory(root, dataset, split);
    auto const annotation_files = sorted_files(dir / "annotations", ".json");
    if (annotation_files.empty())
        throw CorpusError(dir, "no annotations found");
    CorpusSplit out;
    out.dataset = dataset;
    out.split = split;
    for (auto const& path: annotation_files)
        out.documents.push_back(load_canonical_document(path, dataset));
    for (auto const& path: sorted_files(dir / "personas", ".json"))
        out.personas.push_back(load_persona(path));
    return out;
}

void write_canonical_split(const CorpusSplit& split, const fs::path& root)
{
    fs::path const dir = split_directory(root, split.dataset, split.split);
    for (auto const& doc: split.documents)
        write_canonical_document(doc, dir);
    for (auto const& persona: split.personas)
        write_persona(persona, dir / "personas" / (persona.persona_id + ".json"));
}

// }}}
// {{{ native loaders

std::vector<ConvertedDocument> load_funsd_split(const fs::path& split_dir)
{
    auto const files = sorted_files(split_dir / "annotations", ".json");
    if (files.empty())
        throw CorpusError(split_dir, "no annotations found");
    std::vector<ConvertedDocument> out;
    for (auto const& path: files)
    {
        auto const j = read_json(path);
        std::string const doc_id = path.stem().string();
        fs::path image_path = split_dir / "images" / (doc_id + ".png");
        if (!fs::exists(image_path))
            throw MissingAsset(image_path, "image missing");
        try
        {
            std::vector<Entity> entities;
            for (auto const& e: j.at("form"))
                entities.push_back(entity_from_json(e));
            out.push_back(convert_relations(doc_id, entities, load_image(image_path), SourceDataset::Funsd, "en"));
        }
        catch (const CorpusError&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            throw CorpusError(path, fmt::format("malformed FUNSD annotation: {}", e.what()));
        }
    }
    return out;
}

std::vector<ConvertedDocument> load_xfund(const fs::path& root, Split split)
{
    static const std::regex name_re(R"(^([a-z]{2})\.(train|val|test)\.json$)");
    std::vector<fs::path> files;
    if (fs::is_directory(root))
        for (auto const& entry: fs::recursive_directory_iterator(root))
        {
            std::smatch m;
            std::string const name = entry.path().filename().string();
            if (!entry.is_regular_file() || !std::regex_match(name, m, name_re))
                continue;
            bool const is_train = m[2] == "train";
            if (is_train == (split == Split::Train))
                files.push_back(entry.path());
        }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw CorpusError(root, "no annotations found");

    std::vector<ConvertedDocument> out;
    for (auto const& path: files)
    {
        auto const j = read_json(path);
        std::string const stem = path.stem().string(); // "<lang>.<split>"
        std::string const parent = path.parent_path().filename().string();
        std::string language = xfund_languages().contains(parent) ? parent : stem.substr(0, 2);
        if (!xfund_languages().contains(language))
            language = "und";
        try
        {
            for (auto const& d: j.at("documents"))
            {
                std::string const fname = d.at("img").at("fname").get<std::string>();
                std::array<fs::path, 3> const candidates { path.parent_path() / stem / fname,
                                                           path.parent_path() / "images" / fname,
                                                           path.parent_path() / fname };
                auto const found = std::find_if(candidates.begin(), candidates.end(),
                                                [](auto const& p) { return fs::exists(p); });
                if (found == candidates.end())
                    throw MissingAsset(candidates.front(), "image missing");
                std::vector<Entity> entities;
                for (auto const& e: d.at("document"))
                    entities.push_back(entity_from_json(e));
                out.push_back(convert_relations(d.at("id").get<std::string>(), entities, load_image(*found),
                                                SourceDataset::Xfund, language));
            }
        }
        catch (const CorpusError&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            throw CorpusError(path, fmt::format("malformed XFUND annotation: {}", e.what()));
        }
    }
    return out;
}

std::vector<FormDocument> load_relation_dataset(const fs::path& root, SourceDataset dataset, Split split)
{
    std::vector<FormDocument> docs;
    auto take = [&](std::vector<ConvertedDocument> converted) {
        for (auto& c: converted)
            docs.push_back(std::move(c.document));
    };
    switch (dataset)
    {
        case SourceDataset::Funsd:
            take(load_funsd_split(root / (split == Split::Train ? "training_data" : "testing_data")));
            break;
        case SourceDataset::Xfund: take(load_xfund(root, split)); break;
        default: docs = load_canonical_split(root, dataset, split).documents; break;
    }
    return docs;
}

// }}}
// {{{ enum strings

std::string_view to_string(SourceDataset dataset)
{
    switch (dataset)
    {
        case SourceDataset::AutoLoans: return "AUTO_LOANS";
        case SourceDataset::Funsd: return "FUNSD";
        case SourceDataset::Xfund: return "XFUND";
        case SourceDataset::FormNlu: return "FORM_NLU";
        case SourceDataset::Synthetic: return "SYNTHETIC";
    }
    return "SYNTHETIC";
}

SourceDataset dataset_from_string(std::string_view text)
{
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return c == '-' ? '_' : std::toupper(c); });
    for (auto d: { SourceDataset::AutoLoans, SourceDataset::Funsd, SourceDataset::Xfund, SourceDataset::FormNlu,
                   SourceDataset::Synthetic })
        if (to_string(d) == t)
            return d;
    throw ConfigError(fmt::format("unknown dataset '{}'", text));
}

std::string_view to_string(FieldKind kind)
{
    switch (kind)
    {
        case FieldKind::Text: return "TEXT";
        case FieldKind::Checkbox: return "CHECKBOX";
        case FieldKind::Signature: return "SIGNATURE";
    }
    return "TEXT";
}

FieldKind field_kind_from_string(std::string_view text)
{
    for (auto k: { FieldKind::Text, FieldKind::Checkbox, FieldKind::Signature })
        if (to_string(k) == text)
            return k;
    throw ConfigError(fmt::format("unknown field kind '{}'", text));
}

std::string_view to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

Split split_from_string(std::string_view text)
{
    if (text == "train")
        return Split::Train;
    if (text == "test")
        return Split::Test;
    throw ConfigError(fmt::format("unknown split '{}'", text));
}

// }}}

} // namespace formbench
