#pragma once

#include <string>
#include <vector>

namespace innet::cost {

// Per-epoch communication cost of the three schemes.
//   p        fusion input-layer width (elements)
//   q        total number of data points
//   nodes    J
//   params   N, parameters of one full model
//   s_bits   bits per transmitted value
//   eta_frac client-side fraction of N under split learning, in [0, 1]
struct CostModel {
  double p = 0.0;
  double q = 0.0;
  double nodes = 0.0;
  double params = 0.0;
  double s_bits = 32.0;
  double eta_frac = 0.0;

  void validate() const;
};

// 2 p q s / J
double inl_bits(const CostModel& m);
// 2 N J s
double fl_bits(const CostModel& m);
// (2 p q + eta N J) s
double sl_bits(const CostModel& m);

inline constexpr double kBitsPerGbit = 1e9;
inline double to_gbits(double bits) { return bits / kBitsPerGbit; }

struct ModelPreset {
  std::string name;
  double params;
  double eta_frac;
};

// VGG16 and ResNet50 parameter counts with their client-side fractions.
const std::vector<ModelPreset>& model_presets();
const ModelPreset& model_preset(const std::string& name);

inline constexpr double kTableNodes = 500.0;
inline constexpr double kTableFusionWidth = 25088.0;

struct Table1Row {
  std::string model;
  double q = 0.0;
  double fl_gbits = 0.0;
  double sl_gbits = 0.0;
  double inl_gbits = 0.0;
};

// Rows in published order: (VGG16, ResNet50) x (50000, 500000) data points.
// Empty filters keep every row.
std::vector<Table1Row> table1(double s_bits = 32.0, const std::string& model_filter = "",
                              double q_filter = 0.0);

// Published bandwidth table in Gbits, same row order as table1().
const std::vector<Table1Row>& published_table1();

// Rounds x to `digits` significant figures.
double round_significant(double x, int digits);

// Compares a computed cell against the published value at three significant
// figures, or at the published precision when fewer figures were printed.
bool matches_published(double computed_gbits, double published_gbits);

// One message per mismatching cell; empty when all cells reproduce.
std::vector<std::string> check_table1(const std::vector<Table1Row>& rows);

std::string format_table1_text(const std::vector<Table1Row>& rows);
std::string format_table1_csv(const std::vector<Table1Row>& rows);

}  // namespace innet::cost
