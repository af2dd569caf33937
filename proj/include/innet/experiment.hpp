#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "innet/datagen.hpp"

// Experiment configuration, execution and comparison for the three schemes.
namespace innet::exp {

enum class SchemeKind { INL, FL, SL };
std::string to_string(SchemeKind scheme);
SchemeKind scheme_from_string(const std::string& name);

// exp1: FL/SL clients hold disjoint samples with all views.
// exp2: every client holds all samples of its own view; FL/SL infer on the
// mean of the views.
enum class Layout { Exp1, Exp2 };
std::string to_string(Layout layout);
Layout layout_from_string(const std::string& name);

struct DatasetConfig {
  std::size_t q = 4000;
  std::size_t d = 16;
  int classes = 4;
  double separation = 4.0;
  std::vector<double> sigmas = data::default_sigmas();
  std::uint64_t seed = 1;
  double test_fraction = 0.2;
};

// Baselines reuse these widths: branch hidden = encoder_hidden, branch
// output = latent_width, server hidden = fusion_hidden.
struct ModelConfig {
  std::vector<std::size_t> encoder_hidden = {64, 64};
  std::size_t latent_width = 2;
  std::vector<std::size_t> fusion_hidden = {64};
  std::vector<std::size_t> head_hidden = {};
  std::string activation = "relu";
};

struct TrainingConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double s = 1.0;
  std::size_t samples = 1;
  std::size_t local_epochs = 1;
  bool weighted_average = false;
  std::uint64_t seed = 7;
};

struct CostConfig {
  int s_bits = 32;
  int quantizer_bits = 0;  // 0: exact values
  double quantizer_range = 0.0;
};

struct OutputConfig {
  std::string dir;  // empty: default location
  bool messages = false;
  bool checkpoints = true;
};

struct ExperimentConfig {
  std::string preset;  // informational
  SchemeKind scheme = SchemeKind::INL;
  Layout layout = Layout::Exp1;
  DatasetConfig dataset;
  ModelConfig model;
  TrainingConfig training;
  CostConfig cost;
  OutputConfig output;

  std::size_t nodes() const noexcept { return dataset.sigmas.size(); }
};

// Thrown for invalid configurations. path is the dotted field name; line is
// the 1-based line in the source text when known, 0 otherwise.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, std::size_t line, const std::string& message);
  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

const std::vector<std::string>& preset_names();
ExperimentConfig preset(const std::string& name, SchemeKind scheme);

// Throws ConfigError naming the first offending field.
void validate(const ExperimentConfig& config);

std::string to_json(const ExperimentConfig& config);
// Parses and validates; errors carry the line of the offending key.
ExperimentConfig config_from_json(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

struct MetricsRow {
  std::size_t epoch = 0;
  std::string scheme;
  double loss_total = 0.0;  // negated objective, nats
  double loss_joint = 0.0;
  double loss_marginal = 0.0;
  double loss_rate = 0.0;
  double test_acc = 0.0;
  std::uint64_t cum_bits = 0;  // metered training bits
};

inline constexpr char kMetricsHeader[] =
    "epoch,scheme,loss_total,loss_joint,loss_marginal,loss_rate,test_acc,cum_bits";

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct RunResult {
  std::vector<MetricsRow> rows;
  std::uint64_t test_hash = 0;
  std::size_t q = 0;
  std::size_t train_rows = 0;
  std::size_t fusion_width = 0;  // p: INL fusion input, baselines cut width
  std::size_t parameter_count = 0;
  std::size_t client_parameter_count = 0;
  std::size_t dropped = 0;
  std::string messages_csv;  // empty unless output.messages
  std::vector<std::pair<std::string, std::string>> checkpoints;  // file name, bytes
};

// Runs the experiment in memory. Throws ConfigError for an invalid config
// and std::runtime_error when a loss becomes non-finite.
RunResult run(const ExperimentConfig& config);

// Writes metrics.csv, config.json, bundle.json, checkpoints/ and, when
// requested, messages.csv.
void write_bundle(const std::filesystem::path& dir, const ExperimentConfig& config,
                  const RunResult& result);

// Output directory: explicit dir, else $INNET_OUT_DIR (or "runs") joined
// with <preset|custom>-<scheme>-seed<seed>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

struct Bundle {
  std::filesystem::path dir;
  std::string scheme;
  std::uint64_t test_hash = 0;
  std::size_t q = 0;
  std::vector<MetricsRow> rows;
};

Bundle load_bundle(const std::filesystem::path& dir);

// First cumulative bit count at which test accuracy reaches level.
std::optional<std::uint64_t> bits_to_accuracy(const std::vector<MetricsRow>& rows, double level);

struct Comparison {
  std::string merged_csv;
  std::string summary;  // bits-to-accuracy table and sparklines
};

// Refuses bundles with different test sets or q.
Comparison compare(const std::vector<Bundle>& bundles);

std::string sparkline(const std::vector<double>& values, double lo, double hi);

}  // namespace innet::exp
