#pragma once

#include <filesystem>

#include "json.hpp"
#include "treelcm/sampler.hpp"

namespace treelcm {

inline constexpr int kSchemaVersion = 1;

// One JSON-lines record per snapshot; memberships are written 1-based.
nlohmann::json snapshot_to_json(const Snapshot& snapshot);
Snapshot snapshot_from_json(const nlohmann::json& record);
nlohmann::json meta_to_json(const ChainMeta& meta);
ChainMeta meta_from_json(const nlohmann::json& record);

// Writes chain.jsonl, meta.json and trees.nwk (one tree per iteration).
void write_chain(const std::filesystem::path& dir, const PosteriorChain& chain);
PosteriorChain read_chain(const std::filesystem::path& dir);

}  // namespace treelcm
