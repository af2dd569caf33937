#include "innet/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "innet/errors.hpp"

namespace innet::cost {

void CostModel::validate() const {
  if (p < 0 || q < 0 || nodes < 0 || params < 0 || s_bits < 0) {
    throw ValidationError("cost model fields must be non-negative");
  }
  if (eta_frac < 0.0 || eta_frac > 1.0) {
    throw ValidationError("eta_frac must lie in [0, 1]");
  }
}

double inl_bits(const CostModel& m) {
  m.validate();
  if (m.nodes <= 0.0) throw ValidationError("in-network cost needs J > 0");
  return 2.0 * m.p * m.q * m.s_bits / m.nodes;
}

double fl_bits(const CostModel& m) {
  m.validate();
  return 2.0 * m.params * m.nodes * m.s_bits;
}

double sl_bits(const CostModel& m) {
  m.validate();
  return (2.0 * m.p * m.q + m.eta_frac * m.params * m.nodes) * m.s_bits;
}

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"vgg16", 138'344'128.0, 0.11},
      {"resnet50", 25'636'712.0, 0.88},
  };
  return presets;
}

const ModelPreset& model_preset(const std::string& name) {
  for (const ModelPreset& m : model_presets()) {
    if (m.name == name) return m;
  }
  throw ValidationError("unknown model '" + name + "' (expected vgg16 or resnet50)");
}

std::vector<Table1Row> table1(double s_bits, const std::string& model_filter,
                              double q_filter) {
  std::vector<Table1Row> rows;
  for (double q : {50'000.0, 500'000.0}) {
    if (q_filter > 0.0 && q != q_filter) continue;
    for (const ModelPreset& model : model_presets()) {
      if (!model_filter.empty() && model.name != model_filter) continue;
      const CostModel m{kTableFusionWidth, q, kTableNodes, model.params, s_bits,
                        model.eta_frac};
      rows.push_back({model.name, q, to_gbits(fl_bits(m)), to_gbits(sl_bits(m)),
                      to_gbits(inl_bits(m))});
    }
  }
  return rows;
}

const std::vector<Table1Row>& published_table1() {
  static const std::vector<Table1Row> rows = {
      {"vgg16", 50'000.0, 4427.0, 324.0, 0.16},
      {"resnet50", 50'000.0, 820.0, 441.0, 0.16},
      {"vgg16", 500'000.0, 4427.0, 1046.0, 1.6},
      {"resnet50", 500'000.0, 820.0, 1164.0, 1.6},
  };
  return rows;
}

double round_significant(double x, int digits) {
  if (x == 0.0) return 0.0;
  const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(x))));
  const double scale = std::pow(10.0, digits - 1 - magnitude);
  return std::round(x * scale) / scale;
}

namespace {

// Significant figures in a published value; the table prints at most four
// integer digits or two decimals, so counting from the leading digit to the
// last non-zero digit of the 2-decimal representation is exact here.
int printed_figures(double published) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", published);
  std::string s(buf);
  while (!s.empty() && (s.back() == '0' || s.back() == '.')) {
    if (s.back() == '.') {
      s.pop_back();
      break;
    }
    s.pop_back();
  }
  int figures = 0;
  bool leading = true;
  for (char c : s) {
    if (c < '0' || c > '9') continue;
    if (leading && c == '0') continue;
    leading = false;
    ++figures;
  }
  return figures;
}

}  // namespace

bool matches_published(double computed_gbits, double published_gbits) {
  const int digits = std::min(3, printed_figures(published_gbits));
  const double a = round_significant(computed_gbits, digits);
  const double b = round_significant(published_gbits, digits);
  return std::abs(a - b) <= 1e-9 * std::abs(b);
}

std::vector<std::string> check_table1(const std::vector<Table1Row>& rows) {
  std::vector<std::string> issues;
  const auto& published = published_table1();
  for (const Table1Row& row : rows) {
    const Table1Row* ref = nullptr;
    for (const Table1Row& p : published) {
      if (p.model == row.model && p.q == row.q) ref = &p;
    }
    if (ref == nullptr) {
      issues.push_back("no published row for " + row.model);
      continue;
    }
    auto check = [&](const char* scheme, double got, double want) {
      if (!matches_published(got, want)) {
        std::ostringstream msg;
        msg << row.model << " q=" << static_cast<long long>(row.q) << " " << scheme
            << ": computed " << got << " Gbits, published " << want << " Gbits";
        issues.push_back(msg.str());
      }
    };
    check("FL", row.fl_gbits, ref->fl_gbits);
    check("SL", row.sl_gbits, ref->sl_gbits);
    check("INL", row.inl_gbits, ref->inl_gbits);
  }
  return issues;
}

std::string format_table1_text(const std::vector<Table1Row>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %10s %14s %14s %14s\n", "model", "q",
                "FL [Gbit]", "SL [Gbit]", "INL [Gbit]");
  out << line;
  for (const Table1Row& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %10.0f %14.4g %14.4g %14.3g\n",
                  r.model.c_str(), r.q, r.fl_gbits, r.sl_gbits, r.inl_gbits);
    out << line;
  }
  return out.str();
}

std::string format_table1_csv(const std::vector<Table1Row>& rows) {
  std::ostringstream out;
  out << "model,q,fl_gbits,sl_gbits,inl_gbits\n";
  char line[160];
  for (const Table1Row& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.0f,%.6f,%.6f,%.6f\n", r.model.c_str(), r.q,
                  r.fl_gbits, r.sl_gbits, r.inl_gbits);
    out << line;
  }
  return out.str();
}

}  // namespace innet::cost
