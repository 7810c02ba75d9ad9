// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>

namespace formbench::detail {

// Splits "http://host:port/prefix/" into ("http://host:port", "/prefix").
inline std::pair<std::string, std::string> split_url(const std::string& url)
{
    auto const scheme = url.find("://");
    auto const path = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path == std::string::npos)
        return { url, "" };
    std::string prefix = url.substr(path);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return { url.substr(0, path), prefix };
}

} // namespace formbench::detail
