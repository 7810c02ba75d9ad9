// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/corpus.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace formbench {

/// Process exit statuses shared by the commands.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kInvalidInput = 2;
inline constexpr int kEpisodeFailed = 3;
inline constexpr int kIncompatibleRuns = 4;
inline constexpr int kLocked = 5;
} // namespace exit_code

struct ConvertOptions
{
    /// Native dataset root (FUNSD: directory holding training_data/ and
    /// testing_data/, or a split directory; XFUND: directory of
    /// <lang>.<split>.json files) or an already converted canonical root.
    std::filesystem::path root;
    SourceDataset dataset = SourceDataset::Funsd;
    Split split = Split::Test;
    std::filesystem::path out;
};

int cmd_convert(const ConvertOptions& options, std::ostream& out, std::ostream& err);

/// Flag values; unset members fall back to the config file, then defaults.
struct RunOptions
{
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::string> dataset;
    std::optional<std::string> split;
    std::optional<std::string> mode;
    std::optional<std::string> toolset;
    std::optional<std::string> persona_mode;
    std::optional<std::string> backend;
    std::optional<std::filesystem::path> replay;
    std::optional<int> max_rounds;
    std::optional<int> parallelism;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> overrides;
    std::optional<std::string> run_id;
};

/// Returns the run directory through `run_dir` when not null.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err,
            std::filesystem::path* run_dir = nullptr);

int cmd_report(const std::vector<std::filesystem::path>& runs, const std::optional<std::filesystem::path>& out_dir,
               std::ostream& out, std::ostream& err);

/// Writes the bundled synthetic corpus (canonical layout) and a native
/// FUNSD-format fixture under `out`.
int cmd_synth(const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

struct ScriptOptions
{
    std::filesystem::path corpus;
    SourceDataset dataset = SourceDataset::Synthetic;
    Split split = Split::Test;
    std::string toolset = "coords";
    std::string mode = "one-shot";
    std::filesystem::path out;
};

/// Writes a replay file for a perfect scripted agent.
int cmd_script(const ScriptOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Order-independent digest of every file under `dir`.
std::string directory_hash(const std::filesystem::path& dir);

} // namespace formbench
