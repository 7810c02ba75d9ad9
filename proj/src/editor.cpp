// SPDX-License-Identifier: Apache-2.0

#include <formbench/editor.hpp>
#include <formbench/errors.hpp>

#include <opencv2/imgproc.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace formbench {

namespace {

std::size_t utf8_length(std::string_view s)
{
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

bool blank(std::string_view s)
{
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

// Position of the bracket closing the array opened at `open`, honoring
// JSON string literals. npos if unbalanced.
std::size_t matching_bracket(std::string_view text, std::size_t open)
{
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i)
    {
        char const c = text[i];
        if (in_string)
        {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '[')
            ++depth;
        else if (c == ']' && --depth == 0)
            return i;
    }
    return std::string_view::npos;
}

std::optional<nlohmann::json> first_json_array(std::string_view text)
{
    for (std::size_t open = text.find('['); open != std::string_view::npos; open = text.find('[', open + 1))
    {
        auto const close = matching_bracket(text, open);
        if (close == std::string_view::npos)
            continue;
        auto parsed = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_array())
            return parsed;
    }
    return std::nullopt;
}

std::optional<std::pair<double, double>> coordinates(const nlohmann::json& element, bool allow_xy)
{
    auto read = [&](const char* kx, const char* ky) -> std::optional<std::pair<double, double>> {
        if (element.contains(kx) && element.contains(ky) && element[kx].is_number() && element[ky].is_number())
            return std::pair { element[kx].get<double>(), element[ky].get<double>() };
        return std::nullopt;
    };
    if (auto c = read("cx", "cy"))
        return c;
    if (allow_xy)
        return read("x", "y");
    return std::nullopt;
}

std::optional<std::string> string_key(const nlohmann::json& element, const char* key)
{
    if (element.contains(key) && element[key].is_string())
        return element[key].get<std::string>();
    return std::nullopt;
}

// Either an action or the reason the element was rejected.
std::variant<Action, std::string> parse_element(const nlohmann::json& element)
{
    if (!element.is_object())
        return std::string("element is not an object");
    auto const name = string_key(element, "action");
    if (!name)
        return std::string("missing \"action\" key");

    if (*name == "PlaceText" || *name == "SignOrInitial")
    {
        auto const xy = coordinates(element, *name == "SignOrInitial");
        auto const value = string_key(element, "value");
        if (!xy || !value)
            return fmt::format("{} requires numeric cx, cy and a string value", *name);
        if (*name == "PlaceText")
            return Action { PlaceText { xy->first, xy->second, *value } };
        return Action { SignOrInitial { xy->first, xy->second, *value } };
    }
    if (*name == "DeleteText")
    {
        auto const xy = coordinates(element, true);
        if (!xy)
            return std::string("DeleteText requires numeric x, y (or cx, cy)");
        return Action { DeleteText { xy->first, xy->second } };
    }
    if (*name == "PlaceByFieldName")
    {
        auto const field = string_key(element, "field_name");
        auto const value = string_key(element, "value");
        if (!field || !value)
            return std::string("PlaceByFieldName requires string field_name and value");
        return Action { PlaceByFieldName { *field, *value } };
    }
    if (*name == "Terminate")
        return Action { Terminate {} };
    return fmt::format("unknown action '{}'", *name);
}

int font_face(const std::string& name)
{
    static const std::map<std::string, int> faces {
        { "hershey-simplex", cv::FONT_HERSHEY_SIMPLEX },
        { "hershey-duplex", cv::FONT_HERSHEY_DUPLEX },
        { "hershey-complex", cv::FONT_HERSHEY_COMPLEX },
        { "hershey-triplex", cv::FONT_HERSHEY_TRIPLEX },
        { "hershey-script-simplex", cv::FONT_HERSHEY_SCRIPT_SIMPLEX },
        { "hershey-script-complex", cv::FONT_HERSHEY_SCRIPT_COMPLEX },
    };
    auto const it = faces.find(name);
    if (it == faces.end())
        throw ConfigError(fmt::format("missing font asset '{}'", name));
    return it->second;
}

void draw_fitted(Image& roi, const std::string& value, int face, const cv::Scalar& color)
{
    int baseline = 0;
    cv::Size const unit = cv::getTextSize(value, face, 1.0, 1, &baseline);
    if (unit.width <= 0 || unit.height <= 0)
        return;
    double const scale = std::min(0.8 * roi.rows / (unit.height + baseline), 0.98 * roi.cols / unit.width);
    int const thickness = std::max(1, static_cast<int>(std::lround(scale * 1.2)));
    int const text_w = static_cast<int>(std::lround(unit.width * scale));
    int const text_h = static_cast<int>(std::lround(unit.height * scale));
    cv::Point const origin { (roi.cols - text_w) / 2, (roi.rows + text_h) / 2 };
    cv::putText(roi, value, origin, face, scale, color, thickness, cv::LINE_AA);
}

std::string grid_coordinate(int i, int n)
{
    return fmt::format("{:.3g}", static_cast<double>(i) / n);
}

} // namespace

// {{{ actions

std::string_view action_name(const Action& action)
{
    struct Visitor
    {
        std::string_view operator()(const PlaceText&) const { return "PlaceText"; }
        std::string_view operator()(const DeleteText&) const { return "DeleteText"; }
        std::string_view operator()(const SignOrInitial&) const { return "SignOrInitial"; }
        std::string_view operator()(const PlaceByFieldName&) const { return "PlaceByFieldName"; }
        std::string_view operator()(const Terminate&) const { return "Terminate"; }
    };
    return std::visit(Visitor {}, action);
}

nlohmann::ordered_json action_to_json(const Action& action)
{
    nlohmann::ordered_json j;
    j["action"] = action_name(action);
    std::visit(
        [&](auto const& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, PlaceText> || std::is_same_v<T, SignOrInitial>)
            {
                j["cx"] = a.cx;
                j["cy"] = a.cy;
                j["value"] = a.value;
            }
            else if constexpr (std::is_same_v<T, DeleteText>)
            {
                j["x"] = a.x;
                j["y"] = a.y;
            }
            else if constexpr (std::is_same_v<T, PlaceByFieldName>)
            {
                j["field_name"] = a.field_name;
                j["value"] = a.value;
            }
        },
        action);
    return j;
}

std::string_view to_string(FeedbackStatus status)
{
    switch (status)
    {
        case FeedbackStatus::Ok: return "OK";
        case FeedbackStatus::ParseError: return "PARSE_ERROR";
        case FeedbackStatus::OutOfBounds: return "OUT_OF_BOUNDS";
        case FeedbackStatus::EmptyValue: return "EMPTY_VALUE";
        case FeedbackStatus::NothingDeleted: return "NOTHING_DELETED";
        case FeedbackStatus::WrongToolset: return "WRONG_TOOLSET";
        case FeedbackStatus::LocalizationFailed: return "LOCALIZATION_FAILED";
        case FeedbackStatus::AfterTerminate: return "AFTER_TERMINATE";
    }
    return "OK";
}

nlohmann::ordered_json feedback_to_json(const ActionFeedback& feedback)
{
    nlohmann::ordered_json j;
    j["action_index"] = feedback.action_index;
    j["status"] = to_string(feedback.status);
    j["detail"] = feedback.detail;
    if (feedback.deleted_count > 0)
        j["deleted_count"] = feedback.deleted_count;
    return j;
}

ParsedResponse parse_actions(std::string_view response_text)
{
    ParsedResponse out;
    auto const array = first_json_array(response_text);
    if (!array)
    {
        out.errors.push_back(
            ActionFeedback { -1, FeedbackStatus::ParseError, "no JSON list of actions found in the response", 0 });
        return out;
    }
    out.element_count = static_cast<int>(array->size());
    for (int i = 0; i < out.element_count; ++i)
    {
        auto parsed = parse_element((*array)[static_cast<std::size_t>(i)]);
        if (auto* action = std::get_if<Action>(&parsed))
            out.actions.push_back(IndexedAction { i, std::move(*action) });
        else
            out.errors.push_back(
                ActionFeedback { i, FeedbackStatus::ParseError, std::get<std::string>(std::move(parsed)), 0 });
    }
    return out;
}

// }}}
// {{{ canvas

BBox estimate_text_bbox(std::string_view value, Point center, double font_height_frac, ImageSize size)
{
    if (size.width <= 0 || size.height <= 0)
        throw InvalidImageDimensions(fmt::format("invalid image dimensions {}x{}", size.width, size.height));
    if (!(font_height_frac > 0.0))
        throw InvalidGeometry("font height must be positive");
    auto const chars = static_cast<double>(std::max<std::size_t>(1, utf8_length(value)));
    double const pixel_width =
        std::max(1.0, std::round(kAdvancePerChar * font_height_frac * size.height * chars));
    double const w = std::min(1.0, pixel_width / size.width);
    double const h = std::min(1.0, font_height_frac);

    auto place = [](double c, double extent) {
        double lo = c - extent / 2.0;
        double hi = c + extent / 2.0;
        if (lo < 0.0)
        {
            lo = 0.0;
            hi = extent;
        }
        if (hi > 1.0)
        {
            hi = 1.0;
            lo = 1.0 - extent;
        }
        return std::pair { lo, hi };
    };
    auto const [x0, x1] = place(center.x, w);
    auto const [y0, y1] = place(center.y, h);
    return BBox(x0, y0, x1, y1);
}

Canvas::Canvas(Image base, double font_height_frac): base_(std::move(base)), font_height_frac_(font_height_frac)
{
    if (base_.empty())
        throw InvalidImageDimensions("canvas needs a non-empty base image");
}

void Canvas::require_open() const
{
    if (terminated_)
        throw EpisodeOver("canvas already terminated");
}

ActionFeedback Canvas::place(ItemKind kind, std::string_view value, Point at, double font_height_frac)
{
    require_open();
    if (!std::isfinite(at.x) || !std::isfinite(at.y) || !at.in_unit_square())
        return { 0, FeedbackStatus::OutOfBounds, fmt::format("({}, {}) is outside the page", at.x, at.y), 0 };
    if (blank(value))
        return { 0, FeedbackStatus::EmptyValue, "value is empty", 0 };
    BBox const box = estimate_text_bbox(value, at, font_height_frac, size());
    int const id = next_id_++;
    items_.push_back(PlacedItem { id, kind, std::string(value), center(box), box, round_ });
    return { 0, FeedbackStatus::Ok, fmt::format("placed item {}", id), 0 };
}

ActionFeedback Canvas::erase_at(Point at)
{
    require_open();
    if (!std::isfinite(at.x) || !std::isfinite(at.y) || !at.in_unit_square())
        return { 0, FeedbackStatus::OutOfBounds, fmt::format("({}, {}) is outside the page", at.x, at.y), 0 };
    auto const removed = std::erase_if(items_, [&](const PlacedItem& item) { return contains(item.bbox, at); });
    if (removed == 0)
        return { 0, FeedbackStatus::NothingDeleted, "no text at that point", 0 };
    int const n = static_cast<int>(removed);
    return { 0, FeedbackStatus::Ok, fmt::format("deleted {} item(s)", n), n };
}

ActionFeedback Canvas::terminate()
{
    require_open();
    terminated_ = true;
    return { 0, FeedbackStatus::Ok, "terminated", 0 };
}

ActionFeedback apply_action(Canvas& canvas, const Action& action, int action_index)
{
    if (canvas.terminated())
        throw EpisodeOver("canvas already terminated");
    ActionFeedback feedback = std::visit(
        [&](auto const& a) -> ActionFeedback {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, PlaceText>)
                return canvas.place(ItemKind::Text, a.value, Point { a.cx, a.cy });
            else if constexpr (std::is_same_v<T, SignOrInitial>)
                return canvas.place(ItemKind::Signature, a.value, Point { a.cx, a.cy });
            else if constexpr (std::is_same_v<T, DeleteText>)
                return canvas.erase_at(Point { a.x, a.y });
            else if constexpr (std::is_same_v<T, Terminate>)
                return canvas.terminate();
            else
                return { 0, FeedbackStatus::WrongToolset, "PlaceByFieldName is not available in this toolset", 0 };
        },
        action);
    feedback.action_index = action_index;
    return feedback;
}

// }}}
// {{{ rendering

Image render(const Canvas& canvas, const RenderOptions& options)
{
    int const text_face = font_face(options.text_font);
    int const signature_face = font_face(options.signature_font) | cv::FONT_ITALIC;
    Image out = canvas.base().clone();
    cv::Scalar const dark_blue(139, 0, 0);
    for (auto const& item: canvas.items())
    {
        PixelBBox const pb = denormalize(item.bbox, canvas.size());
        Image roi = out(cv::Rect(pb.px0, pb.py0, pb.width(), pb.height()));
        draw_fitted(roi, item.value, item.kind == ItemKind::Signature ? signature_face : text_face, dark_blue);
    }
    return out;
}

std::vector<GridLabel> set_of_marks_labels(int grid_n)
{
    if (grid_n < 2 || grid_n > kMaxGridSize)
        throw ConfigError(fmt::format("grid size {} outside [2, {}]", grid_n, kMaxGridSize));
    std::vector<GridLabel> labels;
    for (int j = 1; j < grid_n; ++j)
        for (int i = 1; i < grid_n; ++i)
            labels.push_back(GridLabel {
                Point { static_cast<double>(i) / grid_n, static_cast<double>(j) / grid_n },
                fmt::format("({}, {})", grid_coordinate(i, grid_n), grid_coordinate(j, grid_n)),
            });
    return labels;
}

Image overlay_set_of_marks(const Image& image, int grid_n)
{
    auto const labels = set_of_marks_labels(grid_n);
    Image out = image.clone();
    int const W = out.cols;
    int const H = out.rows;
    cv::Scalar const red(0, 0, 255);
    auto pixel = [](double f, int extent) { return std::clamp(static_cast<int>(std::lround(f * extent)), 0, extent - 1); };
    for (int i = 1; i < grid_n; ++i)
    {
        int const x = pixel(static_cast<double>(i) / grid_n, W);
        int const y = pixel(static_cast<double>(i) / grid_n, H);
        cv::line(out, { x, 0 }, { x, H - 1 }, red, 1, cv::LINE_8);
        cv::line(out, { 0, y }, { W - 1, y }, red, 1, cv::LINE_8);
    }
    double const scale = std::clamp(std::min(W, H) / 1200.0, 0.5, 1.5);
    for (auto const& label: labels)
    {
        cv::Point const at { pixel(label.vertex.x, W) + 2, pixel(label.vertex.y, H) - 3 };
        cv::putText(out, label.text, at, cv::FONT_HERSHEY_PLAIN, scale, red, 1, cv::LINE_8);
    }
    return out;
}

// }}}

} // namespace formbench
