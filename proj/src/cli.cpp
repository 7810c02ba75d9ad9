// SPDX-License-Identifier: Apache-2.0

#include <formbench/agent.hpp>
#include <formbench/cli.hpp>
#include <formbench/errors.hpp>
#include <formbench/evaluation.hpp>
#include <formbench/localization.hpp>
#include <formbench/synthetic.hpp>

#include <CLI11.hpp>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#ifndef FORMBENCH_VERSION
#define FORMBENCH_VERSION "unknown"
#endif

namespace formbench {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view content)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError(fmt::format("cannot write {}", path.string()));
    out << content;
}

std::string utc_now()
{
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

// Exclusive lock file removed on scope exit.
class RunLock
{
  public:
    explicit RunLock(fs::path path): path_(std::move(path))
    {
        fs::create_directories(path_.parent_path());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0 && errno == EEXIST && owner_gone())
        {
            fs::remove(path_);
            fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        }
        if (fd_ >= 0)
        {
            auto const pid = std::to_string(::getpid());
            [[maybe_unused]] auto const n = ::write(fd_, pid.data(), pid.size());
        }
    }
    ~RunLock()
    {
        if (fd_ >= 0)
        {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

    bool held() const { return fd_ >= 0; }

  private:
    // A lock whose recorded process no longer exists is stale.
    bool owner_gone() const
    {
        std::ifstream in(path_);
        long pid = 0;
        if (!(in >> pid) || pid <= 0)
            return false;
        return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
    }

    fs::path path_;
    int fd_ = -1;
};

// {{{ convert

std::vector<ConvertedDocument> load_native(const ConvertOptions& o)
{
    switch (o.dataset)
    {
        case SourceDataset::Funsd: {
            fs::path dir = o.root;
            if (!fs::is_directory(dir / "annotations"))
                dir = o.root / (o.split == Split::Train ? "training_data" : "testing_data");
            return load_funsd_split(dir);
        }
        case SourceDataset::Xfund: return load_xfund(o.root, o.split);
        default:
            throw CorpusError(o.root, fmt::format("{} has no native loader; provide the canonical layout",
                                                  to_string(o.dataset)));
    }
}

void print_stats(std::ostream& out, const CorpusSplit& split)
{
    auto const stats = dataset_stats(split.documents, split.split);
    out << fmt::format("{} {}: {} forms, {} fields ({:.1f} fields/form, {} language{})\n", to_string(split.dataset),
                       to_string(split.split), stats.forms, stats.fields, stats.fields_per_form, stats.languages,
                       stats.languages == 1 ? "" : "s");
}

// }}}
// {{{ run

struct ResolvedRun
{
    fs::path corpus;
    SourceDataset dataset = SourceDataset::Synthetic;
    Split split = Split::Test;
    RunConfig config;
    std::string backend = "oracle";
    std::optional<fs::path> replay;
    int parallelism = 1;
    fs::path out = "runs";
    std::optional<fs::path> overrides;
    std::optional<std::string> run_id;
    nlohmann::json model;
    std::optional<fs::path> config_path;
    RemoteOptions remote;
};

ResolvedRun resolve(const RunOptions& o)
{
    nlohmann::json cfg = nlohmann::json::object();
    fs::path base;
    if (o.config)
    {
        try
        {
            cfg = nlohmann::json::parse(read_file(*o.config));
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(fmt::format("config {} is not valid JSON: {}", o.config->string(), e.what()));
        }
        if (!cfg.is_object())
            throw ConfigError(fmt::format("config {} must hold an object", o.config->string()));
        base = o.config->parent_path();
    }
    auto str = [&](const std::optional<std::string>& flag, const char* key, std::string fallback) {
        if (flag)
            return *flag;
        if (cfg.contains(key))
            return cfg[key].get<std::string>();
        return fallback;
    };
    auto path = [&](const std::optional<fs::path>& flag, const char* key) -> std::optional<fs::path> {
        if (flag)
            return *flag;
        if (cfg.contains(key) && cfg[key].is_string())
        {
            fs::path p = cfg[key].get<std::string>();
            return p.is_absolute() ? p : base / p;
        }
        return std::nullopt;
    };
    auto integer = [&](const std::optional<int>& flag, const char* key, int fallback) {
        if (flag)
            return *flag;
        return cfg.value(key, fallback);
    };

    try
    {
        ResolvedRun r;
        r.config_path = o.config;
        auto corpus = path(o.corpus, "corpus");
        if (!corpus)
            throw ConfigError("no corpus given (--corpus or \"corpus\" in the config)");
        r.corpus = *corpus;
        r.dataset = dataset_from_string(str(o.dataset, "dataset", "SYNTHETIC"));
        r.split = split_from_string(str(o.split, "split", "test"));
        r.config.mode = episode_mode_from_string(str(o.mode, "mode", "one-shot"));
        r.config.toolset = toolset_from_string(str(o.toolset, "toolset", "coords"));
        r.config.persona_mode = persona_mode_from_string(str(o.persona_mode, "persona_mode", "text"));
        r.config.max_rounds = integer(o.max_rounds, "max_rounds", 5);
        r.config.grid_n = cfg.value("grid_n", kDefaultGridSize);
        if (r.config.max_rounds < 1)
            throw ConfigError("max_rounds must be at least 1");
        if (r.config.grid_n < 2 || r.config.grid_n > kMaxGridSize)
            throw ConfigError(fmt::format("grid_n must lie in [2, {}]", kMaxGridSize));
        r.backend = str(o.backend, "backend", "oracle");
        r.replay = path(o.replay, "replay");
        r.parallelism = integer(o.parallelism, "parallelism", static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
        r.out = path(o.out, "out").value_or("runs");
        r.overrides = path(o.overrides, "overrides");
        r.run_id = o.run_id ? o.run_id : (cfg.contains("run_id") ? std::optional(cfg["run_id"].get<std::string>()) : std::nullopt);
        r.model = cfg.value("model", nlohmann::json::object());
        r.config.model_id = r.replay ? r.model.value("id", std::string("scripted")) : r.model.value("id", std::string());
        r.config.price_per_input_token = r.model.value("price_per_input_token", 0.0);
        r.config.price_per_output_token = r.model.value("price_per_output_token", 0.0);
        r.config.seed = r.model.value("seed", std::uint64_t { 0 });
        r.remote.max_in_flight = cfg.value("localizer_max_in_flight", 4);
        r.remote.timeout = std::chrono::milliseconds(cfg.value("localizer_timeout_ms", 30'000));
        if (!r.replay && !r.model.contains("base_url"))
            throw ConfigError("no model client: give --replay or model.base_url in the config");
        if (!r.replay && r.config.model_id.empty())
            throw ConfigError("model.id is required for a live client");
        return r;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ConfigError(fmt::format("bad config value: {}", e.what()));
    }
}

nlohmann::ordered_json effective_config(const ResolvedRun& r)
{
    return { { "dataset", to_string(r.dataset) },
             { "split", to_string(r.split) },
             { "mode", to_string(r.config.mode) },
             { "toolset", to_string(r.config.toolset) },
             { "persona_mode", to_string(r.config.persona_mode) },
             { "max_rounds", r.config.max_rounds },
             { "grid_n", r.config.grid_n },
             { "backend", r.config.toolset == Toolset::FieldFinder ? r.backend : std::string("none") },
             { "model_id", r.config.model_id },
             { "client", r.replay ? "replay" : "http" },
             { "replay_hash", r.replay ? sha256_hex(read_file(*r.replay)) : std::string() },
             { "overrides_hash", r.overrides ? sha256_hex(read_file(*r.overrides)) : std::string() },
             { "seed", r.config.seed } };
}

std::unique_ptr<ModelClient> make_client(const ResolvedRun& r)
{
    if (r.replay)
        return std::make_unique<ReplayClient>(ReplayClient::from_file(*r.replay));
    HttpClientConfig http;
    http.base_url = r.model.at("base_url").get<std::string>();
    http.api_key_env = r.model.value("api_key_env", std::string());
    http.model_id = r.config.model_id;
    http.seed = r.config.seed;
    http.max_tokens = r.model.value("max_tokens", 4096);
    http.timeout = std::chrono::seconds(r.model.value("timeout_s", 120));
    return std::make_unique<HttpChatClient>(http);
}

// Share of fields whose located box center falls in the annotated box.
double measure_localization(const CorpusSplit& split, const Localizer& localizer)
{
    std::vector<LocalizationPrediction> predictions;
    std::map<QueryKey, BBox> truth;
    for (auto const& doc: split.documents)
        for (auto const& f: doc.fields)
        {
            QueryKey key { doc.doc_id, f.hierarchical_name };
            if (!truth.emplace(key, f.bbox).second)
                continue; // duplicate names are ambiguous; score the first only
            LocalizationPrediction p { key, std::nullopt };
            try
            {
                p.result = localizer.locate({ doc.doc_id, doc.image, f.hierarchical_name });
            }
            catch (const LocalizationError&)
            {
            }
            predictions.push_back(std::move(p));
        }
    return localization_accuracy(predictions, truth);
}

void clear_run_outputs(const fs::path& dir)
{
    for (auto const& name: { "transcripts", "canvases" })
        fs::remove_all(dir / name);
    for (auto const& name: { "report.json", "report.csv", "manifest.json", "config.json" })
        fs::remove(dir / name);
}

// }}}

std::string percent(double fraction)
{
    return fmt::format("{:.1f}", 100.0 * fraction);
}

} // namespace

std::string directory_hash(const fs::path& dir)
{
    std::vector<fs::path> files;
    for (auto const& entry: fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            files.push_back(fs::relative(entry.path(), dir));
    std::sort(files.begin(), files.end());
    std::string material;
    for (auto const& f: files)
        material += f.generic_string() + '\0' + sha256_hex(read_file(dir / f)) + '\n';
    return sha256_hex(material);
}

// {{{ commands

int cmd_convert(const ConvertOptions& o, std::ostream& out, std::ostream& err)
{
    try
    {
        CorpusSplit split;
        split.dataset = o.dataset;
        split.split = o.split;
        fs::path const canonical = split_directory(o.root, o.dataset, o.split);
        if (fs::is_directory(canonical / "annotations"))
        {
            split = load_canonical_split(o.root, o.dataset, o.split);
        }
        else
        {
            for (auto& converted: load_native(o))
            {
                converted.document.image = redact_values(converted.document);
                split.documents.push_back(std::move(converted.document));
                split.personas.push_back(std::move(converted.persona));
            }
        }

        std::vector<std::string> problems;
        for (auto const& doc: split.documents)
        {
            try
            {
                validate_document(doc);
            }
            catch (const std::exception& e)
            {
                problems.push_back(fmt::format("{}: {}", doc.doc_id, e.what()));
            }
        }
        if (!problems.empty())
        {
            for (auto const& p: problems)
                err << "error: " << p << '\n';
            return exit_code::kInvalidInput;
        }
        check_satisfiable(split, o.root);

        fs::path const target = split_directory(o.out, o.dataset, o.split);
        if (fs::weakly_canonical(target) != fs::weakly_canonical(canonical))
            fs::remove_all(target);
        write_canonical_split(split, o.out);
        print_stats(out, split);
        return exit_code::kOk;
    }
    catch (const CorpusError& e)
    {
        err << "error: " << e.path().string() << ": " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
}

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err, fs::path* run_dir_out)
{
    ResolvedRun r;
    CorpusSplit split;
    std::unique_ptr<ModelClient> client;
    std::unique_ptr<Localizer> localizer;
    Overrides overrides;
    try
    {
        r = resolve(options);
        split = load_canonical_split(r.corpus, r.dataset, r.split);
        check_satisfiable(split, split_directory(r.corpus, r.dataset, r.split));
        client = make_client(r);
        if (r.config.toolset == Toolset::FieldFinder)
            localizer = make_localizer(r.backend, split.documents, r.remote);
        if (r.overrides)
            overrides = load_overrides(*r.overrides);
    }
    catch (const CorpusError& e)
    {
        err << "error: " << e.path().string() << ": " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }

    std::string const started = utc_now();
    auto const config_json = effective_config(r);
    std::string const corpus_hash = directory_hash(split_directory(r.corpus, r.dataset, r.split));
    std::string const config_hash = sha256_hex(config_json.dump());
    std::string const run_id = r.run_id.value_or(sha256_hex(config_hash + corpus_hash).substr(0, 12));
    fs::path const dir = r.out / run_id;
    if (run_dir_out)
        *run_dir_out = dir;

    RunLock lock(dir / ".lock");
    if (!lock.held())
    {
        err << "error: run directory " << dir.string() << " is locked by another process\n";
        return exit_code::kLocked;
    }
    clear_run_outputs(dir);

    std::vector<EpisodeTask> tasks;
    std::map<const FormDocument*, int> per_doc;
    for (auto const& doc: split.documents)
        for (auto const* persona: split.personas_for(doc))
        {
            tasks.push_back({ &doc, persona });
            ++per_doc[&doc];
        }

    auto results = run_episodes(tasks, r.config, *client, localizer.get(), r.parallelism);

    EvaluationReport report;
    report.run_id = run_id;
    report.corpus_hash = corpus_hash;
    report.model_id = r.config.model_id;
    report.mode = r.config.mode;
    report.toolset = r.config.toolset;
    report.persona_mode = r.config.persona_mode;

    std::vector<std::string> artifacts;
    std::vector<Transcript> transcripts;
    std::vector<PlacementCount> placements;
    nlohmann::ordered_json timings = nlohmann::ordered_json::object();
    Tally total;
    for (std::size_t i = 0; i < results.size(); ++i)
    {
        auto& result = results[i];
        auto const& t = result.transcript;
        auto outcomes = score_form(result.canvas, *tasks[i].doc, *tasks[i].persona);
        apply_overrides(outcomes, t.episode_id, overrides);
        auto const counted = tally(outcomes);
        total.correct += counted.correct;
        total.fields += counted.fields;
        placements.push_back({ t.placements(), counted.fields });
        if (t.failed)
        {
            ++report.failed_episodes;
            err << fmt::format("episode {} failed: {}\n", t.episode_id, t.failure);
        }

        std::string const transcript_name = fmt::format("transcripts/{}.json", t.episode_id);
        std::string const canvas_name = fmt::format("canvases/{}.png", t.episode_id);
        write_file(dir / transcript_name, transcript_to_json(t, false).dump(2) + "\n");
        save_png(dir / canvas_name, render(result.canvas));
        artifacts.push_back(transcript_name);
        artifacts.push_back(canvas_name);
        timings[t.episode_id] = t.wall_seconds;

        report.per_field.push_back({ t.episode_id, std::move(outcomes) });
        transcripts.push_back(std::move(result.transcript));
    }

    auto const stats = dataset_stats(split.documents, split.split);
    double const accuracy = total.fields > 0 ? static_cast<double>(total.correct) / static_cast<double>(total.fields)
                                             : 0.0;
    std::string const column = dataset_column(r.dataset, r.config.persona_mode);
    report.per_dataset.push_back(
        { column, accuracy, total.fields, total.correct, stats.fields_per_form, r.dataset != SourceDataset::Xfund });
    report.macro_average = aggregate_macro({ { column, { accuracy } } });
    if (total.fields > 0)
    {
        report.cost = compute_cost(transcripts, { r.config.price_per_input_token, r.config.price_per_output_token },
                                   total.fields);
        std::optional<double> localization;
        if (localizer)
            localization = measure_localization(split, *localizer);
        std::optional<double> gt;
        if (r.config.toolset == Toolset::GtCoords)
            gt = accuracy;
        report.error_attribution = error_attribution(placements, gt, localization);
    }

    write_file(dir / "config.json", config_json.dump(2) + "\n");
    write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_file(dir / "report.csv", report_csv(std::span(&report, 1)));
    artifacts.insert(artifacts.end(), { "config.json", "report.json", "report.csv" });

    nlohmann::ordered_json manifest { { "run_id", run_id },
                                      { "artifact_version", FORMBENCH_VERSION },
                                      { "config_path", r.config_path ? r.config_path->string() : std::string() },
                                      { "config_hash", config_hash },
                                      { "corpus", r.corpus.string() },
                                      { "corpus_hash", corpus_hash },
                                      { "started_at", started },
                                      { "finished_at", utc_now() },
                                      { "episodes", results.size() },
                                      { "failed_episodes", report.failed_episodes },
                                      { "episode_wall_seconds", std::move(timings) },
                                      { "artifacts", artifacts } };
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    out << fmt::format("run {}: {} episodes, {} fields, accuracy {}% ({} {} {})\n", run_id, results.size(),
                       total.fields, percent(accuracy), to_string(r.config.mode), to_string(r.config.toolset),
                       column);
    out << "wrote " << dir.string() << '\n';
    return report.failed_episodes > 0 ? exit_code::kEpisodeFailed : exit_code::kOk;
}

int cmd_report(const std::vector<fs::path>& runs, const std::optional<fs::path>& out_dir, std::ostream& out,
               std::ostream& err)
{
    if (runs.empty())
    {
        err << "error: no run directories given\n";
        return exit_code::kUsage;
    }
    std::vector<EvaluationReport> reports;
    try
    {
        for (auto const& run: runs)
            reports.push_back(report_from_json(nlohmann::json::parse(read_file(run / "report.json"))));
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }

    // Runs on the same dataset column must share the corpus.
    std::map<std::string, std::pair<std::string, std::string>> corpus_of;
    for (auto const& r: reports)
        for (auto const& d: r.per_dataset)
        {
            auto [it, inserted] = corpus_of.try_emplace(d.column, r.corpus_hash, r.run_id);
            if (!inserted && it->second.first != r.corpus_hash)
            {
                err << fmt::format("error: runs {} and {} used different {} corpora\n", it->second.second, r.run_id,
                                   d.column);
                return exit_code::kIncompatibleRuns;
            }
        }

    struct Row
    {
        MacroInput columns;
        std::vector<std::string> settings;
        double usd = 0.0;
        std::int64_t fields = 0;
    };
    std::map<std::pair<std::string, std::string>, Row> rows;
    std::set<std::string> all_columns;
    for (auto const& r: reports)
    {
        auto& row = rows[{ r.model_id, std::string(to_string(r.toolset)) }];
        for (auto const& d: r.per_dataset)
        {
            row.columns[d.column].push_back(d.accuracy);
            all_columns.insert(d.column);
        }
        row.settings.push_back(fmt::format("{}/{}", to_string(r.mode), to_string(r.persona_mode)));
        row.usd += r.cost.usd_total;
        row.fields += r.cost.fields_attempted;
    }

    nlohmann::ordered_json merged_rows = nlohmann::ordered_json::array();
    std::string table = "model | toolset";
    for (auto const& c: all_columns)
        table += " | " + c;
    table += " | macro | usd/1k fields\n";
    std::string csv = "model,toolset";
    for (auto const& c: all_columns)
        csv += ",\"" + c + "\"";
    csv += ",macro_average,usd_per_thousand_fields\n";

    for (auto const& [key, row]: rows)
    {
        double const macro = aggregate_macro(row.columns);
        double const per_k = row.fields > 0 ? row.usd / static_cast<double>(row.fields) * 1000.0 : 0.0;
        nlohmann::ordered_json columns = nlohmann::ordered_json::object();
        table += key.first + " | " + key.second;
        csv += fmt::format("\"{}\",{}", key.first, key.second);
        for (auto const& c: all_columns)
        {
            auto const it = row.columns.find(c);
            if (it == row.columns.end())
            {
                table += " | -";
                csv += ",";
                continue;
            }
            std::vector<std::string> cells;
            std::vector<double> values;
            double sum = 0.0;
            for (auto const& v: it->second)
            {
                cells.push_back(percent(*v));
                values.push_back(*v);
                sum += *v;
            }
            double const mean = sum / static_cast<double>(it->second.size());
            columns[c] = { { "settings", values }, { "mean", mean } };
            table += " | " + fmt::format("{}", fmt::join(cells, " / "));
            csv += fmt::format(",{}", mean);
        }
        table += fmt::format(" | {} | {:.2f}\n", percent(macro), per_k);
        csv += fmt::format(",{},{}\n", macro, per_k);
        merged_rows.push_back({ { "model", key.first },
                                { "toolset", key.second },
                                { "settings", row.settings },
                                { "columns", std::move(columns) },
                                { "macro_average", macro },
                                { "usd_per_thousand_fields", per_k } });
    }

    // Error attribution across the merged runs.
    nlohmann::ordered_json attribution = nlohmann::ordered_json::object();
    {
        double understanding = 0.0;
        int baseline_runs = 0;
        std::optional<double> reasoning;
        std::optional<double> localization;
        for (auto const& r: reports)
        {
            if (r.toolset == Toolset::BaselineCoords || r.toolset == Toolset::BaselineSom)
            {
                understanding += r.error_attribution.understanding;
                ++baseline_runs;
            }
            if (r.error_attribution.reasoning && !reasoning)
                reasoning = r.error_attribution.reasoning;
            if (r.error_attribution.localization && !localization)
                localization = r.error_attribution.localization;
        }
        attribution["understanding"] = baseline_runs > 0 ? nlohmann::ordered_json(understanding / baseline_runs)
                                                         : nlohmann::ordered_json(nullptr);
        attribution["reasoning"] = reasoning ? nlohmann::ordered_json(*reasoning) : nlohmann::ordered_json(nullptr);
        attribution["localization"] = localization ? nlohmann::ordered_json(*localization)
                                                   : nlohmann::ordered_json(nullptr);
    }

    out << table;
    if (out_dir)
    {
        nlohmann::ordered_json run_ids = nlohmann::ordered_json::array();
        for (auto const& r: reports)
            run_ids.push_back(r.run_id);
        nlohmann::ordered_json merged { { "runs", std::move(run_ids) },
                                        { "rows", std::move(merged_rows) },
                                        { "error_attribution", std::move(attribution) } };
        write_file(*out_dir / "table.json", merged.dump(2) + "\n");
        write_file(*out_dir / "table.csv", csv);
        write_file(*out_dir / "runs.csv", report_csv(reports));
    }
    return exit_code::kOk;
}

int cmd_synth(const fs::path& out_dir, std::ostream& out, std::ostream& err)
{
    try
    {
        auto const split = synthetic_corpus();
        fs::remove_all(split_directory(out_dir, split.dataset, split.split));
        write_canonical_split(split, out_dir);
        print_stats(out, split);
        fs::path const fixture = out_dir / "funsd-fixture" / "testing_data";
        fs::remove_all(fixture);
        auto const stats = write_funsd_fixture(fixture);
        out << fmt::format("FUNSD-format fixture: {} forms, {} question/answer links ({} with empty answers) in {}\n",
                           stats.forms, stats.fields, stats.empty_answers, fixture.string());
        return exit_code::kOk;
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
}

int cmd_script(const ScriptOptions& o, std::ostream& out, std::ostream& err)
{
    try
    {
        auto const split = load_canonical_split(o.corpus, o.dataset, o.split);
        auto const script = perfect_script(split, toolset_from_string(o.toolset), episode_mode_from_string(o.mode));
        write_file(o.out, nlohmann::ordered_json(script).dump(2) + "\n");
        out << fmt::format("wrote {} scripted responses to {}\n", script.size(), o.out.string());
        return exit_code::kOk;
    }
    catch (const CorpusError& e)
    {
        err << "error: " << e.path().string() << ": " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
}

// }}}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app { "Form-filling benchmark harness" };
    app.set_version_flag("--version", std::string(FORMBENCH_VERSION));
    app.require_subcommand(1);

    ConvertOptions convert;
    std::string convert_dataset = "FUNSD";
    std::string convert_split = "test";
    auto* c = app.add_subcommand("convert", "Convert annotated documents into blank fillable forms");
    c->add_option("--root", convert.root, "Dataset root")->required();
    c->add_option("--dataset", convert_dataset, "FUNSD, XFUND, FORM_NLU, AUTO_LOANS or SYNTHETIC");
    c->add_option("--split", convert_split, "train or test");
    c->add_option("--out", convert.out, "Output corpus root")->required();

    RunOptions run;
    auto* r = app.add_subcommand("run", "Run episodes and score them");
    r->add_option("--config", run.config, "Run config JSON");
    r->add_option("--corpus", run.corpus, "Canonical corpus root");
    r->add_option("--dataset", run.dataset);
    r->add_option("--split", run.split);
    r->add_option("--mode", run.mode, "one-shot or iterative");
    r->add_option("--toolset", run.toolset, "coords, som, fieldfinder or gt-coords");
    r->add_option("--persona-mode", run.persona_mode, "text or image");
    r->add_option("--backend", run.backend, "oracle, heuristic or remote:<url>");
    r->add_option("--replay", run.replay, "Replay file for an offline scripted client");
    r->add_option("--max-rounds", run.max_rounds);
    r->add_option("--parallelism", run.parallelism);
    r->add_option("--out", run.out, "Runs directory");
    r->add_option("--overrides", run.overrides, "Manual review override file");
    r->add_option("--run-id", run.run_id);

    std::vector<fs::path> report_runs;
    std::optional<fs::path> report_out;
    auto* rep = app.add_subcommand("report", "Merge runs into one table");
    rep->add_option("runs", report_runs, "Run directories")->required();
    rep->add_option("--out", report_out, "Directory for table.json / table.csv");

    fs::path synth_out;
    auto* s = app.add_subcommand("synth", "Write the bundled synthetic corpus and FUNSD-format fixture");
    s->add_option("--out", synth_out)->required();

    ScriptOptions script;
    std::string script_dataset = "SYNTHETIC";
    std::string script_split = "test";
    auto* sc = app.add_subcommand("script", "Write a perfect-agent replay file");
    sc->add_option("--corpus", script.corpus)->required();
    sc->add_option("--dataset", script_dataset);
    sc->add_option("--split", script_split);
    sc->add_option("--toolset", script.toolset);
    sc->add_option("--mode", script.mode);
    sc->add_option("--out", script.out)->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        // --help and --version exit 0; anything else is a usage error.
        return app.exit(e, out, err) == 0 ? exit_code::kOk : exit_code::kUsage;
    }

    try
    {
        if (c->parsed())
        {
            convert.dataset = dataset_from_string(convert_dataset);
            convert.split = split_from_string(convert_split);
            return cmd_convert(convert, out, err);
        }
        if (r->parsed())
            return cmd_run(run, out, err);
        if (rep->parsed())
            return cmd_report(report_runs, report_out, out, err);
        if (s->parsed())
            return cmd_synth(synth_out, out, err);
        if (sc->parsed())
        {
            script.dataset = dataset_from_string(script_dataset);
            script.split = split_from_string(script_split);
            return cmd_script(script, out, err);
        }
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_code::kInvalidInput;
    }
    return exit_code::kUsage;
}

} // namespace formbench
