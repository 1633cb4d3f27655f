#pragma once

#include <string>
#include <vector>

#include "milcci/data.hpp"

namespace milcci {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

// Dataset directory layout: manifest.json (schema, labels, preprocess, trial
// file listing) plus one CSV per trial with rows = channels, columns = time.
// An empty CSV cell marks a missing observation (mask false, value 0).
TrialSet load_dataset(const std::string& dir);

// Writes values as they sit in memory, so the emitted manifest always says
// preprocess "none"; a tanh setting was already applied at load time.
void save_dataset(const std::string& dir, const TrialSet& data);

// Model archive directory: model.json (structure echo), A_<cat>_<value>.csv
// per variant, phi_<trialid>.csv per trial, transition_<trialid>.csv when
// dynamics were fitted, objective.csv. Numbers carry 17 significant digits so
// a round trip is bit-exact. Every file lands via temp-file-plus-rename.
void save_model(const std::string& dir, const ModelState& state, const TrialSet& data);

struct LoadedModel {
  ModelState state;
  std::vector<CategorySpec> categories;  // names/values/component counts only
  std::vector<std::string> trial_ids;
};

LoadedModel load_model(const std::string& dir);

// Fit configuration: a JSON object mirroring Hyperparams. gamma1..gamma5 must
// all be present; the remaining fields are optional; unknown keys are
// rejected. `context` names the source in error messages.
Hyperparams parse_fit_config_text(const std::string& text, const std::string& context);
Hyperparams parse_fit_config(const std::string& path);

// Shared primitives (also used by the CLI for its JSON sidecar files).
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

// Filesystem-safe version of a category/value/trial token for file names.
std::string sanitize_token(const std::string& token);

}  // namespace milcci
