#include "specvae/report.hpp"

#include <charconv>
#include <fstream>

#include "specvae/codec.hpp"

namespace specvae {

std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "format_number: conversion failed");
  return std::string(buf, ptr);
}

std::string to_csv(const CsvTable& table) {
  auto escape = [](const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
      if (c == '"') out += "\"\"";
      else out.push_back(c);
    }
    out += "\"";
    return out;
  };
  auto line = [&](const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += escape(fields[i]);
    }
    out.push_back('\n');
    return out;
  };
  std::string out = line(table.header);
  for (const auto& row : table.rows) {
    check(row.size() == table.header.size(), "to_csv: ragged row");
    out += line(row);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  check(bool(out), "cannot open for writing: " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  check(bool(out), "short write: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(bool(in), "cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

CsvTable loss_trace_table(const std::vector<LossBreakdown>& trace) {
  CsvTable t;
  t.header = {"epoch", "total", "recon", "kl", "tc"};
  for (std::size_t i = 0; i < trace.size(); ++i)
    t.rows.push_back({format_number(double(i)), format_number(trace[i].total),
                      format_number(trace[i].recon), format_number(trace[i].kl),
                      format_number(trace[i].tc_estimate)});
  return t;
}

CsvTable loss_trace_table(const std::vector<CvaeGanLoss>& trace) {
  CsvTable t;
  t.header = {"epoch", "total", "recon", "kl", "gan", "fm_disc", "fm_cls", "disc_ce", "cls_ce"};
  for (std::size_t i = 0; i < trace.size(); ++i)
    t.rows.push_back({format_number(double(i)), format_number(trace[i].total),
                      format_number(trace[i].recon), format_number(trace[i].kl),
                      format_number(trace[i].gan), format_number(trace[i].fm_disc),
                      format_number(trace[i].fm_cls), format_number(trace[i].disc_ce),
                      format_number(trace[i].cls_ce)});
  return t;
}

CsvTable loss_trace_table(const std::vector<double>& trace) {
  CsvTable t;
  t.header = {"epoch", "loss"};
  for (std::size_t i = 0; i < trace.size(); ++i)
    t.rows.push_back({format_number(double(i)), format_number(trace[i])});
  return t;
}

namespace {

std::vector<std::string> sweep_key_fields(const SweepCell& cell) {
  return {format_number(double(cell.latent_dim)), to_string(cell.mode),
          format_number(double(cell.dense.n_layers)),
          format_number(double(cell.dense.hidden_width)),
          cell.dense.use_relu ? "true" : "false",
          cell.dense.use_batchnorm ? "true" : "false"};
}

const std::vector<std::string> kSweepKeyHeader = {"latent_dim", "mode",    "n_layers",
                                                  "hidden_width", "use_relu", "use_batchnorm"};

}  // namespace

CsvTable sweep_table(const SweepReport& report) {
  CsvTable t;
  t.header = kSweepKeyHeader;
  t.header.insert(t.header.end(), {"accuracy_mean", "accuracy_std", "compression_rate"});
  for (const SweepRow& row : report.rows) {
    std::vector<std::string> fields = sweep_key_fields(row.cell);
    fields.push_back(format_number(row.accuracy_mean));
    fields.push_back(format_number(row.accuracy_std));
    fields.push_back(format_number(row.compression_rate));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

CsvTable sweep_timing_table(const SweepReport& report) {
  CsvTable t;
  t.header = kSweepKeyHeader;
  t.header.insert(t.header.end(), {"train_time_s_mean", "infer_us_mean"});
  for (const SweepRow& row : report.rows) {
    std::vector<std::string> fields = sweep_key_fields(row.cell);
    fields.push_back(format_number(row.train_time_s_mean));
    fields.push_back(format_number(row.infer_us_mean));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

CsvTable confusion_table(const MatX<int>& confusion, const std::vector<std::string>& labels) {
  check(confusion.rows() == confusion.cols(), "confusion_table: square matrix required");
  check(int(labels.size()) == confusion.rows(), "confusion_table: label count mismatch");
  CsvTable t;
  t.header = {"true\\predicted"};
  t.header.insert(t.header.end(), labels.begin(), labels.end());
  for (int r = 0; r < confusion.rows(); ++r) {
    std::vector<std::string> row = {labels[std::size_t(r)]};
    for (int c = 0; c < confusion.cols(); ++c)
      row.push_back(format_number(double(confusion(r, c))));
    t.rows.push_back(std::move(row));
  }
  return t;
}

nlohmann::ordered_json eval_report_json(const EvalReport& report,
                                        const std::vector<std::string>& labels) {
  using nlohmann::ordered_json;
  check(int(labels.size()) == int(report.confusion.rows()),
        "eval_report_json: label count mismatch");
  ordered_json j;
  j["accuracy"] = report.accuracy;
  j["labels"] = labels;
  j["per_class_accuracy"] = report.per_class_accuracy;
  ordered_json conf = ordered_json::array();
  for (int r = 0; r < report.confusion.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < report.confusion.cols(); ++c) row.push_back(report.confusion(r, c));
    conf.push_back(std::move(row));
  }
  j["confusion"] = std::move(conf);
  j["timing"] = {{"train_time_s", report.train_time_s},
                 {"infer_time_us_per_sample", report.infer_time_us_per_sample}};
  return j;
}

nlohmann::ordered_json sweep_report_json(const SweepReport& report) {
  using nlohmann::ordered_json;
  ordered_json rows = ordered_json::array();
  for (const SweepRow& row : report.rows) {
    ordered_json r;
    r["latent_dim"] = row.cell.latent_dim;
    r["mode"] = to_string(row.cell.mode);
    r["n_layers"] = row.cell.dense.n_layers;
    r["hidden_width"] = row.cell.dense.hidden_width;
    r["use_relu"] = row.cell.dense.use_relu;
    r["use_batchnorm"] = row.cell.dense.use_batchnorm;
    r["accuracy_mean"] = row.accuracy_mean;
    r["accuracy_std"] = row.accuracy_std;
    r["accuracy_samples"] = row.accuracy_samples;
    r["compression_rate"] = row.compression_rate;
    r["timing"] = {{"train_time_s_mean", row.train_time_s_mean},
                   {"infer_us_mean", row.infer_us_mean}};
    rows.push_back(std::move(r));
  }
  nlohmann::ordered_json j;
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace specvae
