// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/corpus.hpp>

#include <cstddef>
#include <filesystem>

namespace formbench {

/// Three rendered blank forms with every field and correctness kind, and
/// four personas that apply to all of them. Deterministic.
CorpusSplit synthetic_corpus();

struct FunsdFixtureStats
{
    std::size_t forms = 0;
    /// Distinct question -> answer links, i.e. converted fields.
    std::size_t fields = 0;
    /// Links whose answer text is empty.
    std::size_t empty_answers = 0;
};

/// Writes a small dataset in the native FUNSD layout (annotations/*.json,
/// images/*.png) under `split_dir`, with answer text drawn into the image.
FunsdFixtureStats write_funsd_fixture(const std::filesystem::path& split_dir);

} // namespace formbench
