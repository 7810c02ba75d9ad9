// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace formbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class InvalidGeometry : public Error
{
  public:
    using Error::Error;
};

class InvalidImageDimensions : public Error
{
  public:
    using Error::Error;
};

/// Invalid or inconsistent configuration (run config, persona mode, fonts).
class ConfigError : public Error
{
  public:
    using Error::Error;
};

/// A corpus file could not be ingested. Carries the offending path.
class CorpusError : public Error
{
  public:
    CorpusError(std::filesystem::path path, const std::string& what)
        : Error(path.string() + ": " + what), path_(std::move(path))
    {
    }

    const std::filesystem::path& path() const noexcept { return path_; }

  private:
    std::filesystem::path path_;
};

class MissingAsset : public CorpusError
{
  public:
    using CorpusError::CorpusError;
};

class EmptyDataset : public Error
{
  public:
    using Error::Error;
};

class InvalidSegment : public Error
{
  public:
    using Error::Error;
};

/// A correctness spec references facts the persona does not have. Distinct
/// from a spec that evaluates to false.
class UnsatisfiableSpec : public Error
{
  public:
    using Error::Error;
};

/// An action was applied to a canvas whose episode has already terminated.
class EpisodeOver : public Error
{
  public:
    using Error::Error;
};

class EvaluationInputError : public Error
{
  public:
    using Error::Error;
};

enum class LocalizationErrorCode
{
    FieldNotFound,
    UnsupportedDocument,
    BackendUnavailable,
};

class LocalizationError : public Error
{
  public:
    LocalizationError(LocalizationErrorCode code, const std::string& what) : Error(what), code_(code) {}

    LocalizationErrorCode code() const noexcept { return code_; }

  private:
    LocalizationErrorCode code_;
};

/// Transport-level failure of a model client. Non-retriable failures (for
/// example a replay file without the requested key) skip the backoff loop.
class ModelClientError : public Error
{
  public:
    ModelClientError(const std::string& what, bool retriable = true) : Error(what), retriable_(retriable) {}

    bool retriable() const noexcept { return retriable_; }

  private:
    bool retriable_;
};

} // namespace formbench
