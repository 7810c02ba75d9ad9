// SPDX-License-Identifier: Apache-2.0

// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance binary.

#pragma once

#include <formbench/agent.hpp>
#include <formbench/corpus.hpp>
#include <formbench/editor.hpp>
#include <formbench/evaluation.hpp>
#include <formbench/geometry.hpp>
#include <formbench/persona.hpp>

#include <httplib.h>

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <unistd.h>
#include <vector>

namespace formbench::test {

namespace fs = std::filesystem;

/// Unique scratch directory removed on destruction.
class TempDir
{
  public:
    explicit TempDir(const std::string& tag = "t")
    {
        static int counter = 0;
        path_ = fs::temp_directory_path()
                / ("formbench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

inline Image solid(int w, int h, cv::Vec3b color = { 255, 255, 255 })
{
    return Image(h, w, CV_8UC3, cv::Scalar(color[0], color[1], color[2]));
}

/// Each channel ramps linearly along x, with a different slope per channel.
inline Image horizontal_gradient(int w, int h)
{
    Image img(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
        {
            double const t = static_cast<double>(x) / (w - 1);
            img.at<cv::Vec3b>(y, x) = { static_cast<unsigned char>(std::lround(255 * t)),
                                        static_cast<unsigned char>(std::lround(40 + 150 * t)),
                                        static_cast<unsigned char>(std::lround(230 - 200 * t)) };
        }
    return img;
}

inline Persona persona_of(std::string id, std::vector<std::pair<std::string, std::string>> facts)
{
    Persona p;
    p.persona_id = std::move(id);
    p.facts = std::move(facts);
    return p;
}

inline CorrectnessSpec normalized_spec(std::string fact_key)
{
    CorrectnessSpec s;
    s.kind = CorrectnessKind::Normalized;
    s.fact_keys = { std::move(fact_key) };
    return s;
}

inline CorrectnessSpec checkbox_spec()
{
    CorrectnessSpec s;
    s.kind = CorrectnessKind::Checkbox;
    return s;
}

inline FieldSpec field(std::string id, BBox box, CorrectnessSpec spec, std::string name = {})
{
    if (name.empty())
        name = id;
    return FieldSpec { id, name, name, box, FieldKind::Text, std::move(spec), true };
}

inline FormDocument document(std::string id, std::vector<FieldSpec> fields, int w = 400, int h = 400)
{
    FormDocument d;
    d.doc_id = std::move(id);
    d.image = solid(w, h);
    d.image_path = fs::path("images") / (d.doc_id + ".png");
    d.width = w;
    d.height = h;
    d.fields = std::move(fields);
    d.source_dataset = SourceDataset::Synthetic;
    return d;
}

inline BBox random_box(std::mt19937_64& rng, double min_extent = 1e-6)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (true)
    {
        double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        if (a > b)
            std::swap(a, b);
        if (c > d)
            std::swap(c, d);
        if (b - a >= min_extent && d - c >= min_extent)
            return BBox(a, c, b, d);
    }
}

// {{{ reference implementations

/// Exhaustive (item, field) scan; ordering by explicit tuple comparison.
inline std::string reference_extract(const std::vector<PlacedItem>& items, const BBox& box)
{
    std::vector<std::tuple<double, double, int, std::string>> hits;
    for (auto const& item: items)
    {
        bool const inside = item.center.x >= box.x0() && item.center.x <= box.x1() && item.center.y >= box.y0()
                            && item.center.y <= box.y1();
        if (inside)
            hits.emplace_back(item.center.y, item.center.x, item.item_id, item.value);
    }
    std::sort(hits.begin(), hits.end());
    std::string out;
    for (auto const& h: hits)
        out += (out.empty() ? "" : " ") + std::get<3>(h);
    return out;
}

/// Row-wise interpolation between the columns just outside [px0, px1),
/// computed in double precision from the original image.
inline cv::Vec3d reference_fill(const Image& original, int x, int y, int px0, int px1)
{
    int const left = px0 - 1;
    int const right = px1;
    cv::Vec3b const l = original.at<cv::Vec3b>(y, left);
    cv::Vec3b const r = original.at<cv::Vec3b>(y, right);
    double const t = static_cast<double>(x - left) / static_cast<double>(right - left);
    return { l[0] + (r[0] - l[0]) * t, l[1] + (r[1] - l[1]) * t, l[2] + (r[2] - l[2]) * t };
}

// }}}

/// An httplib server on an ephemeral loopback port, stopped on destruction.
class LocalServer
{
  public:
    LocalServer()
    {
        port_ = server.bind_to_any_port("127.0.0.1");
    }
    void start()
    {
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer()
    {
        server.stop();
        if (thread_.joinable())
            thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    httplib::Server server;

  private:
    int port_ = 0;
    std::thread thread_;
};

/// Scripted client answering from a fixed list, one entry per call.
class SequenceClient final: public ModelClient
{
  public:
    explicit SequenceClient(std::vector<std::string> replies): replies_(std::move(replies)) {}

    ModelResponse complete(const ModelRequest& request) override
    {
        ++calls;
        requests.push_back(request.text());
        std::string const& reply = replies_.empty() ? fallback : replies_[std::min(index_, replies_.size() - 1)];
        ++index_;
        return { reply, estimate_tokens(request), estimate_tokens(reply) };
    }

    int calls = 0;
    std::vector<std::string> requests;
    std::string fallback = "[]";

  private:
    std::vector<std::string> replies_;
    std::size_t index_ = 0;
};

} // namespace formbench::test
