#pragma once

// On-disk form of a built dataset: one JSONL file per split plus meta.json.
// Records are {"id", "text", "target"} with "truth" on weak records when
// known.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mailintent/corpus.hpp"

namespace mailintent {

/// Writes clean.jsonl, weak.jsonl, dev.jsonl, test.jsonl and meta.json
/// (num_classes plus the caller's `meta` fields) into `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const nlohmann::json& meta = nlohmann::json::object());

/// Inverse of save_dataset. Throws InputError on a missing file and
/// ParseError on a malformed record.
Dataset load_dataset(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

}  // namespace mailintent
