#pragma once

// Stable-text report emission. Numbers use shortest round-trip formatting so
// reruns with identical values produce identical bytes; timing measurements
// live in separate tables / a separate JSON subtree because they are the one
// legitimately nondeterministic output.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "specvae/classifier.hpp"
#include "specvae/cvae_gan.hpp"
#include "specvae/vae_train.hpp"

namespace specvae {

// shortest decimal that parses back to exactly v
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// comma separator, \n line ends; fields containing , " or newline are quoted
std::string to_csv(const CsvTable& table);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

CsvTable loss_trace_table(const std::vector<LossBreakdown>& trace);
CsvTable loss_trace_table(const std::vector<CvaeGanLoss>& trace);
CsvTable loss_trace_table(const std::vector<double>& trace);

// accuracy and compression columns only; timings go to sweep_timing_table
CsvTable sweep_table(const SweepReport& report);
CsvTable sweep_timing_table(const SweepReport& report);

CsvTable confusion_table(const MatX<int>& confusion, const std::vector<std::string>& labels);

nlohmann::ordered_json eval_report_json(const EvalReport& report,
                                        const std::vector<std::string>& labels);
nlohmann::ordered_json sweep_report_json(const SweepReport& report);

}  // namespace specvae
