#pragma once

// Newline-delimited JSON datasets. A world directory holds
//   world.jsonl    config, tasks with generators and populations, calibration
//   tools.jsonl    one tool per line with support, alignment, metadata, references
//   train.jsonl, val.jsonl, test.jsonl, refpool.jsonl   one labeled query per line

#include <filesystem>
#include <string>
#include <vector>

#include "toolselect/simworld.hpp"

namespace toolselect::dataset_io {

/// One-line record of a labeled query.
std::string query_record(const simworld::LabeledQuery& lq);
/// Throws ParseError on malformed input.
simworld::LabeledQuery parse_query_record(const std::string& line);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Query records of one split, one per line.
std::string export_split(const simworld::SimWorld& world, const std::string& split);
/// Throws ParseError naming the file line of the first malformed record.
std::vector<simworld::LabeledQuery> import_queries(const std::filesystem::path& file);

/// Writes every file of the world directory.
void export_world(const simworld::SimWorld& world, const std::filesystem::path& dir);
simworld::SimWorld import_world(const std::filesystem::path& dir);

} // namespace toolselect::dataset_io
