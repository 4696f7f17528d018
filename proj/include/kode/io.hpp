#pragma once

#include "kode/inference.hpp"
#include "kode/model.hpp"
#include "kode/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace kode::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Strict decimal parse; DataError mentions `where` on failure.
double parse_double(std::string_view text, const std::string& where);

/// Dataset CSV: header `t,replicate,x1,...,xp`, one row per (replicate, time),
/// replicates numbered from 1 and listed in blocks sharing one time grid.
std::string format_dataset_csv(const sim::Dataset& data);
sim::Dataset parse_dataset_csv(std::string_view text);

void write_dataset_csv(const std::filesystem::path& path, const sim::Dataset& data);
sim::Dataset read_dataset_csv(const std::filesystem::path& path);

/// Self-contained model document. Gram tensors and the Lasso design are
/// rebuilt on load from the stored smoothers, so a loaded model reproduces
/// the fitted one exactly.
nlohmann::json model_to_json(const model::KodeModel& model);
model::KodeModel model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const model::KodeModel& model);
model::KodeModel load_model(const std::filesystem::path& path);

/// Band CSV with columns t,center,lower,upper,c0,sigma_hat for the rows of
/// one replicate.
std::string format_band_csv(const inference::ConfidenceBand& band, int replicate = 0);

/// Whole-file write (temporary file then rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace kode::io
