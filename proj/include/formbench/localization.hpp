// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/corpus.hpp>
#include <formbench/editor.hpp>
#include <formbench/geometry.hpp>
#include <formbench/image.hpp>

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace formbench {

enum class LocalizerBackend
{
    Oracle,
    Heuristic,
    Remote,
};

std::string_view to_string(LocalizerBackend backend);

struct LocalizationQuery
{
    std::string doc_id;
    Image image;
    /// Hierarchical field name ("Section | Table | Column | Row").
    std::string field_name;
};

struct LocalizationResult
{
    BBox bbox;
    std::optional<double> confidence;
    LocalizerBackend backend = LocalizerBackend::Oracle;
};

/// Maps (form image, field name) to the box of the field's input area.
/// Implementations are safe for concurrent locate() calls.
class Localizer
{
  public:
    virtual ~Localizer() = default;

    /// Throws LocalizationError on failure.
    virtual LocalizationResult locate(const LocalizationQuery& query) const = 0;
    virtual LocalizerBackend backend() const noexcept = 0;
    /// Descriptor recorded in run metadata ("oracle", "remote:http://...").
    virtual std::string describe() const = 0;
};

/// Looks the name up in the annotated field table: exact hierarchical name
/// first, then a case-insensitive match.
class OracleLocalizer final: public Localizer
{
  public:
    explicit OracleLocalizer(std::span<const FormDocument> docs);

    LocalizationResult locate(const LocalizationQuery& query) const override;
    LocalizerBackend backend() const noexcept override { return LocalizerBackend::Oracle; }
    std::string describe() const override { return "oracle"; }

  private:
    std::map<std::string, std::vector<std::pair<std::string, BBox>>> fields_;
};

/// Word-annotation stand-in for a learned localizer: finds the label span
/// best matching the query's last segment and returns the blank space to its
/// right on the same line.
class HeuristicLocalizer final: public Localizer
{
  public:
    explicit HeuristicLocalizer(std::span<const FormDocument> docs);

    LocalizationResult locate(const LocalizationQuery& query) const override;
    LocalizerBackend backend() const noexcept override { return LocalizerBackend::Heuristic; }
    std::string describe() const override { return "heuristic"; }

  private:
    std::map<std::string, std::vector<WordAnnotation>> words_;
};

struct RemoteOptions
{
    int max_in_flight = 4;
    std::chrono::milliseconds timeout { 30'000 };
};

/// Client for the localizer wire protocol:
///   POST /v1/locate {"image": <base64 PNG>, "field_name": ...}
///     -> 200 {"bbox": [x0, y0, x1, y1], "confidence": number|null}
///     -> 422 {"error": ...} when no field matches
///   GET /v1/health -> 200 {"status": "ok"}
class RemoteLocalizer final: public Localizer
{
  public:
    explicit RemoteLocalizer(std::string base_url, RemoteOptions options = {});
    ~RemoteLocalizer() override;

    LocalizationResult locate(const LocalizationQuery& query) const override;
    LocalizerBackend backend() const noexcept override { return LocalizerBackend::Remote; }
    std::string describe() const override { return "remote:" + base_url_; }

    bool healthy() const;

  private:
    std::string base_url_;
    RemoteOptions options_;
    mutable std::counting_semaphore<1024> in_flight_;
};

/// "oracle", "heuristic" or "remote:<url>".
std::unique_ptr<Localizer> make_localizer(std::string_view descriptor, std::span<const FormDocument> docs,
                                          RemoteOptions options = {});

struct QueryKey
{
    std::string doc_id;
    std::string field_name;

    friend auto operator<=>(const QueryKey&, const QueryKey&) = default;
};

struct LocalizationPrediction
{
    QueryKey query;
    /// nullopt when the localizer failed; counted as incorrect.
    std::optional<LocalizationResult> result;
};

/// Fraction of predictions whose box center lies in the ground-truth box.
double localization_accuracy(std::span<const LocalizationPrediction> predictions,
                             const std::map<QueryKey, BBox>& truth);

/// Places `value` at the center of the located field, with the font height
/// capped by the field height. LOCALIZATION_FAILED leaves the canvas as is.
ActionFeedback place_by_field_name(Canvas& canvas, const FormDocument& doc, std::string_view field_name,
                                   std::string_view value, const Localizer& localizer);

} // namespace formbench
