#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "dmc/motion.hpp"

namespace dmc {

/// Interchange document:
///   { "fps", "skeleton": {"joint_names", "foot_indices", "parent"},
///     "frames": [[[x,y,z] x J] x T], "condition", "label", "provenance" }
nlohmann::json to_json(const MotionRecord& record);

/// Parses and validates one document. Missing or mistyped keys raise
/// ParseError; structurally parsed but invalid content (ragged frames,
/// bad foot indices) raises ValidationError.
MotionRecord record_from_json(const nlohmann::json& doc, std::optional<Index> condition_dim = kConditionDim);

MotionRecord read_motion_file(const std::filesystem::path& path,
                              std::optional<Index> condition_dim = kConditionDim);
void write_motion_file(const MotionRecord& record, const std::filesystem::path& path);

/// A corpus is either a directory of *.json documents (read in filename
/// order) or a JSON-lines file with one document per line.
Corpus read_corpus(const std::filesystem::path& path, std::optional<Index> condition_dim = kConditionDim);

/// Writes `path` as JSON-lines when it ends in ".jsonl", otherwise as a
/// directory of record_NNNNN.json files.
void write_corpus(std::span<const MotionRecord> corpus, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path, int indent = 2);

}  // namespace dmc
