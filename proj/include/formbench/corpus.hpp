// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/geometry.hpp>
#include <formbench/image.hpp>
#include <formbench/persona.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace formbench {

enum class SourceDataset
{
    AutoLoans,
    Funsd,
    Xfund,
    FormNlu,
    Synthetic,
};

enum class FieldKind
{
    Text,
    Checkbox,
    Signature,
};

enum class Split
{
    Train,
    Test,
};

struct WordAnnotation
{
    std::string text;
    BBox bbox;

    friend bool operator==(const WordAnnotation&, const WordAnnotation&) = default;
};

struct FieldSpec
{
    std::string field_id;
    std::string name;
    std::string hierarchical_name;
    BBox bbox;
    FieldKind kind = FieldKind::Text;
    CorrectnessSpec correctness;
    bool expected_nonempty = true;

    friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

struct FormDocument
{
    std::string doc_id;
    Image image;
    /// Image path relative to the split directory ("images/<doc_id>.png").
    std::filesystem::path image_path;
    int width = 0;
    int height = 0;
    std::vector<FieldSpec> fields;
    std::vector<WordAnnotation> words;
    SourceDataset source_dataset = SourceDataset::Synthetic;
    std::string language = "und";

    ImageSize size() const noexcept { return { width, height }; }
    const FieldSpec* find_field(std::string_view field_id) const;
};

/// A split of one dataset in canonical layout, with the personas that
/// answer its fields.
struct CorpusSplit
{
    SourceDataset dataset = SourceDataset::Synthetic;
    Split split = Split::Test;
    std::vector<FormDocument> documents;
    std::vector<Persona> personas;

    /// Personas applicable to a document, in file order.
    std::vector<const Persona*> personas_for(const FormDocument& doc) const;
};

struct DatasetStats
{
    std::size_t forms = 0;
    std::size_t fields = 0;
    double fields_per_form = 0.0;
    std::size_t languages = 0;
    Split split = Split::Test;
};

/// "Section 1", "Members Table" + "Row 1" -> "Section 1 | Members Table | Row 1".
/// With no ancestors the name is returned unchanged.
std::string build_hierarchical_name(const FieldSpec& field, std::span<const std::string> ancestors);
std::string build_hierarchical_name(std::string_view name, std::span<const std::string> ancestors);

/// Row-wise linear interpolation across each field box between the columns
/// just outside it. Pixels outside every field box are untouched.
Image redact_values(const FormDocument& doc);

DatasetStats dataset_stats(std::span<const FormDocument> docs, Split split);

/// Whether the field counts towards accuracy for this persona: declared
/// non-empty and, for conditional checkboxes, selected by the persona.
bool expects_value(const FieldSpec& field, const Persona& persona);

/// Checks document invariants: boxes inside the unit square, hierarchical
/// names ending in the field name, unique field ids, Auto Loans disjointness.
void validate_document(const FormDocument& doc);

/// Checks that every expected field has an accepted input for every
/// applicable persona. Throws CorpusError listing the failures.
void check_satisfiable(const CorpusSplit& split, const std::filesystem::path& where = {});

// {{{ canonical on-disk schema: <root>/<DATASET>/<split>/{annotations,images,personas}

nlohmann::ordered_json document_to_json(const FormDocument& doc);
/// Parses an annotation document. The image is loaded from `split_dir`.
FormDocument document_from_json(const nlohmann::json& j, const std::filesystem::path& split_dir,
                                SourceDataset dataset);

FormDocument load_canonical_document(const std::filesystem::path& annotation_path, SourceDataset dataset);
void write_canonical_document(const FormDocument& doc, const std::filesystem::path& split_dir);

std::filesystem::path split_directory(const std::filesystem::path& root, SourceDataset dataset, Split split);
CorpusSplit load_canonical_split(const std::filesystem::path& root, SourceDataset dataset, Split split);
void write_canonical_split(const CorpusSplit& split, const std::filesystem::path& root);

// }}}

/// A converted relation dataset page together with the persona holding its
/// original values.
struct ConvertedDocument
{
    FormDocument document;
    Persona persona;
};

/// FUNSD layout: <split_dir>/{annotations/*.json, images/*.png}.
std::vector<ConvertedDocument> load_funsd_split(const std::filesystem::path& split_dir);

/// XFUND layout: <root>/**/<lang>.<split>.json with images under <lang>.<split>/.
std::vector<ConvertedDocument> load_xfund(const std::filesystem::path& root, Split split);

/// Loads one split of a dataset. FUNSD and XFUND are read from their native
/// layouts and converted; other datasets are read from the canonical layout.
std::vector<FormDocument> load_relation_dataset(const std::filesystem::path& root, SourceDataset dataset,
                                                Split split);

std::string_view to_string(SourceDataset dataset);
SourceDataset dataset_from_string(std::string_view text);
std::string_view to_string(FieldKind kind);
FieldKind field_kind_from_string(std::string_view text);
std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

} // namespace formbench
