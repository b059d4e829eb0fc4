#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctlfm/analysis.hpp"
#include "ctlfm/fit.hpp"
#include "ctlfm/isi_fit.hpp"
#include "ctlfm/model.hpp"

namespace ctlfm {

/// Writes to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Spike files. JSON: {"t_end": s, "neurons": [{"id": "...", "spikes": [...]}]}.
// CSV: rows `neuron_id,time`, optional header, optional `# t_end=<s>` line;
// without it t_end is the latest spike time.
SpikeData parse_spikes_json(const std::string& text);
std::string format_spikes_json(const SpikeData& s);
SpikeData parse_spikes_csv(const std::string& text);
std::string format_spikes_csv(const SpikeData& s);
/// Dispatches on the extension (.csv, otherwise JSON).
SpikeData read_spikes(const std::filesystem::path& path);
void write_spikes(const std::filesystem::path& path, const SpikeData& s);

struct LabeledMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Matrix values;
};

/// Header `id,<col ids>`, one row per row id, 17 significant digits.
std::string format_matrix_csv(const LabeledMatrix& m);
LabeledMatrix parse_matrix_csv(const std::string& text);
void write_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m);
LabeledMatrix read_matrix_csv(const std::filesystem::path& path);

/// Repr with 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);
double parse_double(const std::string& s);

struct ParamsTable {
  std::vector<std::string> ids;
  ThetaEstimate estimate;
};

std::string format_params_csv(const ParamsTable& p);
ParamsTable parse_params_csv(const std::string& text);

std::string format_labels_csv(const std::vector<std::string>& ids, const std::vector<int>& labels);
std::vector<int> parse_labels_csv(const std::string& text, std::vector<std::string>* ids = nullptr);

/// Fit result with SEs and optimizer diagnostics.
std::string format_fit_json(const FitResult& fit, const std::vector<std::string>& ids);
FitResult parse_fit_json(const std::string& text, std::vector<std::string>* ids = nullptr);

std::vector<std::string> factor_ids(std::size_t d);

}  // namespace ctlfm
