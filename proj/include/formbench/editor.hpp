// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/geometry.hpp>
#include <formbench/image.hpp>

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace formbench {

inline constexpr double kDefaultFontHeight = 0.02;
/// Monospace advance width as a fraction of the font height.
inline constexpr double kAdvancePerChar = 0.6;
inline constexpr int kDefaultGridSize = 10;
inline constexpr int kMaxGridSize = 50;

enum class ItemKind
{
    Text,
    Signature,
};

struct PlacedItem
{
    int item_id = 0;
    ItemKind kind = ItemKind::Text;
    std::string value;
    Point center;
    BBox bbox;
    int round_placed = 0;
};

// {{{ actions

struct PlaceText
{
    double cx = 0;
    double cy = 0;
    std::string value;
};

struct DeleteText
{
    double x = 0;
    double y = 0;
};

struct SignOrInitial
{
    double cx = 0;
    double cy = 0;
    std::string value;
};

/// Only valid in the field-name toolset.
struct PlaceByFieldName
{
    std::string field_name;
    std::string value;
};

struct Terminate
{
};

using Action = std::variant<PlaceText, DeleteText, SignOrInitial, PlaceByFieldName, Terminate>;

std::string_view action_name(const Action& action);
nlohmann::ordered_json action_to_json(const Action& action);

// }}}

enum class FeedbackStatus
{
    Ok,
    ParseError,
    OutOfBounds,
    EmptyValue,
    NothingDeleted,
    WrongToolset,
    LocalizationFailed,
    /// The action followed a Terminate in the same response.
    AfterTerminate,
};

struct ActionFeedback
{
    /// Index of the element in the response's action list; -1 for
    /// response-level problems such as a missing JSON array.
    int action_index = 0;
    FeedbackStatus status = FeedbackStatus::Ok;
    std::string detail;
    int deleted_count = 0;

    friend bool operator==(const ActionFeedback&, const ActionFeedback&) = default;
};

std::string_view to_string(FeedbackStatus status);
nlohmann::ordered_json feedback_to_json(const ActionFeedback& feedback);

struct IndexedAction
{
    int index = 0;
    Action action;
};

struct ParsedResponse
{
    std::vector<IndexedAction> actions;
    std::vector<ActionFeedback> errors;
    /// Number of elements in the extracted array (0 if none was found).
    int element_count = 0;
};

/// Extracts the first well-formed JSON array in `response_text` and turns
/// each element into an action or a PARSE_ERROR feedback at its index.
ParsedResponse parse_actions(std::string_view response_text);

/// Text box sized with fixed monospace metrics, centered on `center` and
/// translated (never shrunk) back into the page when it overhangs.
BBox estimate_text_bbox(std::string_view value, Point center, double font_height_frac, ImageSize size);

/// The mutable episode state: a base image and the items placed on it.
class Canvas
{
  public:
    explicit Canvas(Image base, double font_height_frac = kDefaultFontHeight);

    const Image& base() const noexcept { return base_; }
    ImageSize size() const noexcept { return size_of(base_); }
    const std::vector<PlacedItem>& items() const noexcept { return items_; }
    bool terminated() const noexcept { return terminated_; }
    double font_height_frac() const noexcept { return font_height_frac_; }

    int round() const noexcept { return round_; }
    void set_round(int round) noexcept { round_ = round; }

    /// Places a value centered at `center`. Returns OUT_OF_BOUNDS or
    /// EMPTY_VALUE without mutating when the request is invalid.
    ActionFeedback place(ItemKind kind, std::string_view value, Point center, double font_height_frac);
    ActionFeedback place(ItemKind kind, std::string_view value, Point center)
    {
        return place(kind, value, center, font_height_frac_);
    }

    /// Removes every item whose box contains `at`.
    ActionFeedback erase_at(Point at);

    ActionFeedback terminate();

  private:
    void require_open() const;

    Image base_;
    double font_height_frac_;
    std::vector<PlacedItem> items_;
    bool terminated_ = false;
    int next_id_ = 0;
    int round_ = 0;
};

/// Applies a coordinate-toolset action. PlaceByFieldName needs a localizer
/// and is answered with WRONG_TOOLSET here. Throws EpisodeOver when the
/// canvas has already terminated.
ActionFeedback apply_action(Canvas& canvas, const Action& action, int action_index = 0);

// {{{ rendering

/// Built-in stroke fonts: "hershey-simplex", "hershey-duplex",
/// "hershey-complex", "hershey-triplex", "hershey-script-simplex",
/// "hershey-script-complex".
struct RenderOptions
{
    std::string text_font = "hershey-simplex";
    std::string signature_font = "hershey-script-simplex";
};

/// Draws every item's value inside its box: text in dark blue, signatures
/// in an italic script face. Deterministic.
Image render(const Canvas& canvas, const RenderOptions& options = {});

struct GridLabel
{
    Point vertex;
    std::string text;
};

/// Interior vertex labels of an n x n grid, row-major from the top-left.
std::vector<GridLabel> set_of_marks_labels(int grid_n);

/// Grid lines at i/grid_n on both axes with coordinate labels at interior
/// vertices.
Image overlay_set_of_marks(const Image& image, int grid_n = kDefaultGridSize);

// }}}

} // namespace formbench
