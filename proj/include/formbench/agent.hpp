// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/corpus.hpp>
#include <formbench/editor.hpp>
#include <formbench/localization.hpp>
#include <formbench/persona.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace formbench {

enum class EpisodeMode
{
    OneShot,
    Iterative,
};

enum class Toolset
{
    BaselineCoords,
    BaselineSom,
    FieldFinder,
    GtCoords,
};

std::string_view to_string(EpisodeMode mode);
EpisodeMode episode_mode_from_string(std::string_view text);
std::string_view to_string(Toolset toolset);
Toolset toolset_from_string(std::string_view text);

struct RunConfig
{
    EpisodeMode mode = EpisodeMode::OneShot;
    int max_rounds = 5;
    Toolset toolset = Toolset::BaselineCoords;
    PersonaMode persona_mode = PersonaMode::Text;
    std::string model_id = "scripted";
    double price_per_input_token = 0.0;
    double price_per_output_token = 0.0;
    std::uint64_t seed = 0;
    int grid_n = kDefaultGridSize;

    /// Rounds an episode may use: 1 for one-shot, max_rounds otherwise.
    int rounds() const noexcept { return mode == EpisodeMode::OneShot ? 1 : max_rounds; }
};

// {{{ model client contract

struct MessagePart
{
    enum class Kind
    {
        Text,
        Image,
    };

    Kind kind = Kind::Text;
    std::string text;
    Image image;

    static MessagePart of_text(std::string text) { return { Kind::Text, std::move(text), {} }; }
    static MessagePart of_image(Image image) { return { Kind::Image, {}, std::move(image) }; }
};

struct ModelRequest
{
    std::string doc_id;
    std::string persona_id;
    int round_index = 0;
    std::vector<MessagePart> parts;

    /// Concatenation of all text parts, images shown as "<image>".
    std::string text() const;
    /// Stable SHA-256 over text parts and image pixels.
    std::string digest() const;
};

struct ModelResponse
{
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

/// Synchronous model call. Implementations must accept concurrent calls from
/// different episodes. Transport failures throw ModelClientError.
class ModelClient
{
  public:
    virtual ~ModelClient() = default;
    virtual ModelResponse complete(const ModelRequest& request) = 0;
};

/// Answers from a replay file {"<doc_id>/<round>": "<response>"}. A key of
/// the form "<doc_id>@<persona_id>/<round>" takes precedence when present.
class ReplayClient final: public ModelClient
{
  public:
    explicit ReplayClient(std::map<std::string, std::string> responses);
    static ReplayClient from_file(const std::filesystem::path& path);

    ModelResponse complete(const ModelRequest& request) override;

  private:
    std::map<std::string, std::string> responses_;
};

/// Token estimate used by offline clients: one token per four bytes of text
/// plus a fixed charge per image.
std::int64_t estimate_tokens(const ModelRequest& request);
std::int64_t estimate_tokens(std::string_view text);

struct HttpClientConfig
{
    /// Chat-completions base URL, e.g. "https://api.example.com/v1".
    std::string base_url;
    /// Name of the environment variable holding the bearer credential.
    std::string api_key_env;
    std::string model_id;
    std::uint64_t seed = 0;
    std::chrono::seconds timeout { 120 };
    int max_tokens = 4096;
};

/// Chat-completions adapter: POST <base_url>/chat/completions with one user
/// message whose content interleaves text and base64 PNG image parts.
class HttpChatClient final: public ModelClient
{
  public:
    explicit HttpChatClient(HttpClientConfig config);

    ModelResponse complete(const ModelRequest& request) override;

    nlohmann::json request_body(const ModelRequest& request) const;

  private:
    HttpClientConfig config_;
};

// }}}

struct RoundRecord
{
    int round_index = 0;
    std::string request_digest;
    std::string response_text;
    std::vector<IndexedAction> actions;
    /// One entry per response element, index-aligned; a single entry with
    /// index -1 when no action list was found.
    std::vector<ActionFeedback> feedback;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

struct Transcript
{
    std::string episode_id;
    std::string doc_id;
    std::string persona_id;
    std::vector<RoundRecord> rounds;
    bool terminated_early = false;
    bool failed = false;
    std::string failure;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    double wall_seconds = 0.0;

    /// Successful PlaceText / SignOrInitial / PlaceByFieldName actions.
    int placements() const;
};

nlohmann::ordered_json transcript_to_json(const Transcript& transcript, bool include_timing = true);

struct CostReport
{
    double usd_total = 0.0;
    double usd_per_thousand_fields = 0.0;
    std::int64_t fields_attempted = 0;
};

struct TokenPrices
{
    double per_input_token = 0.0;
    double per_output_token = 0.0;
};

CostReport compute_cost(std::span<const Transcript> transcripts, TokenPrices prices, std::int64_t fields);

/// Prompt for one round: instructions, API documentation for the toolset,
/// persona, optional ground-truth centroids, formatting rules, feedback so
/// far, remaining rounds, the form image and the closing instruction.
ModelRequest build_prompt(const FormDocument& doc, const Persona& persona, const RunConfig& config,
                          std::span<const std::vector<ActionFeedback>> history, int round_index);

struct RetryPolicy
{
    int attempts = 3;
    std::chrono::milliseconds base_delay { 1000 };
};

struct EpisodeResult
{
    Canvas canvas;
    Transcript transcript;
};

/// Runs prompt -> model -> parse -> apply rounds until Terminate, round
/// exhaustion, or an iterative round with no parseable actions.
EpisodeResult run_episode(const FormDocument& doc, const Persona& persona, const RunConfig& config,
                          ModelClient& client, const Localizer* localizer, RetryPolicy retry = {});

struct EpisodeTask
{
    const FormDocument* doc = nullptr;
    const Persona* persona = nullptr;
};

std::string episode_id(const FormDocument& doc, const Persona& persona, bool multi_persona);

/// Runs independent episodes on `parallelism` worker threads; results keep
/// task order. Configuration errors mark the episode failed.
std::vector<EpisodeResult> run_episodes(std::span<const EpisodeTask> tasks, const RunConfig& config,
                                        ModelClient& client, const Localizer* localizer, int parallelism,
                                        RetryPolicy retry = {});

/// Replay script that fills every expected field with an accepted value in
/// round 0 and terminates in round 1 (or immediately for one-shot runs).
std::map<std::string, std::string> perfect_script(const CorpusSplit& split, Toolset toolset, EpisodeMode mode);

} // namespace formbench
