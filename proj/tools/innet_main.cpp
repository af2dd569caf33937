#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "innet/cost_model.hpp"
#include "innet/errors.hpp"
#include "innet/experiment.hpp"
#include "innet/info_metrics.hpp"

namespace {

using namespace innet;

// Config field -> flag, for error messages when no config file is involved.
const std::map<std::string, std::string>& flag_names() {
  static const std::map<std::string, std::string> names = {
      {"dataset.q", "--q"},
      {"dataset.d", "--d"},
      {"dataset.classes", "--classes"},
      {"dataset.separation", "--separation"},
      {"dataset.sigmas", "--sigmas"},
      {"dataset.test_fraction", "--test-fraction"},
      {"model.encoder_hidden", "--encoder-hidden"},
      {"model.latent_width", "--latent-width"},
      {"model.fusion_hidden", "--fusion-hidden"},
      {"model.head_hidden", "--head-hidden"},
      {"model.activation", "--activation"},
      {"training.epochs", "--epochs"},
      {"training.batch_size", "--batch-size"},
      {"training.learning_rate", "--lr"},
      {"training.s", "--s"},
      {"training.samples", "--samples"},
      {"training.local_epochs", "--local-epochs"},
      {"cost.s_bits", "--s-bits"},
      {"cost.quantizer_bits", "--quantizer-bits"},
      {"cost.quantizer_range", "--quantizer-range"},
  };
  return names;
}

struct RunFlags {
  std::string config_path;
  std::string preset = "exp1-desk";
  std::string scheme = "inl";
  std::string layout;
  std::string out;
  bool messages = false;
  bool no_checkpoints = false;
  bool quiet = false;

  std::optional<std::size_t> q, d, epochs, batch_size, latent_width, samples, local_epochs;
  std::optional<int> classes, s_bits, quantizer_bits;
  std::optional<double> separation, test_fraction, lr, s, quantizer_range;
  std::optional<std::uint64_t> seed, data_seed;
  std::optional<std::vector<double>> sigmas;
  std::optional<std::vector<std::size_t>> encoder_hidden, fusion_hidden, head_hidden;
  std::optional<std::string> activation;
  bool weighted = false;
};

template <typename T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

exp::ExperimentConfig build_config(const RunFlags& f, CLI::App& app) {
  exp::ExperimentConfig c;
  if (!f.config_path.empty()) {
    c = exp::load_config(f.config_path);
  } else {
    c = exp::preset(f.preset, exp::scheme_from_string(f.scheme));
  }
  if (!f.config_path.empty() && app.count("--scheme") > 0) c.scheme = exp::scheme_from_string(f.scheme);
  if (!f.layout.empty()) c.layout = exp::layout_from_string(f.layout);
  apply(f.q, c.dataset.q);
  apply(f.d, c.dataset.d);
  apply(f.classes, c.dataset.classes);
  apply(f.separation, c.dataset.separation);
  apply(f.sigmas, c.dataset.sigmas);
  apply(f.data_seed, c.dataset.seed);
  apply(f.test_fraction, c.dataset.test_fraction);
  apply(f.encoder_hidden, c.model.encoder_hidden);
  apply(f.latent_width, c.model.latent_width);
  apply(f.fusion_hidden, c.model.fusion_hidden);
  apply(f.head_hidden, c.model.head_hidden);
  apply(f.activation, c.model.activation);
  apply(f.epochs, c.training.epochs);
  apply(f.batch_size, c.training.batch_size);
  apply(f.lr, c.training.learning_rate);
  apply(f.s, c.training.s);
  apply(f.samples, c.training.samples);
  apply(f.local_epochs, c.training.local_epochs);
  apply(f.seed, c.training.seed);
  if (f.weighted) c.training.weighted_average = true;
  apply(f.s_bits, c.cost.s_bits);
  apply(f.quantizer_bits, c.cost.quantizer_bits);
  apply(f.quantizer_range, c.cost.quantizer_range);
  if (!f.out.empty()) c.output.dir = f.out;
  if (f.messages) c.output.messages = true;
  if (f.no_checkpoints) c.output.checkpoints = false;
  return c;
}

int cmd_run(const RunFlags& f, CLI::App& app) {
  exp::ExperimentConfig config;
  try {
    config = build_config(f, app);
    exp::validate(config);
  } catch (const exp::ConfigError& e) {
    std::string msg = e.what();
    const auto it = flag_names().find(e.path());
    if (e.line() == 0 && it != flag_names().end()) msg += " (flag " + it->second + ")";
    std::cerr << "error: " << msg << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const exp::RunResult result = exp::run(config);
  const std::filesystem::path dir = exp::resolve_output_dir(config);
  exp::write_bundle(dir, config, result);
  if (!f.quiet) {
    for (const exp::MetricsRow& r : result.rows) {
      std::printf("epoch %3zu  %-3s  loss %.5f  test_acc %.4f  cum_bits %llu\n", r.epoch,
                  r.scheme.c_str(), r.loss_total, r.test_acc,
                  static_cast<unsigned long long>(r.cum_bits));
    }
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<exp::Bundle> bundles;
  for (const std::string& d : dirs) bundles.push_back(exp::load_bundle(d));
  const exp::Comparison cmp = exp::compare(bundles);
  if (!out.empty()) {
    std::ofstream file(out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + out);
    file << cmp.merged_csv;
  } else {
    std::cout << cmp.merged_csv;
  }
  std::cout << cmp.summary;
  return 0;
}

int cmd_table1(bool check, double q, const std::string& model, double s_bits, bool csv) {
  const std::vector<cost::Table1Row> rows = cost::table1(s_bits, model, q);
  if (rows.empty()) {
    std::cerr << "error: no table row matches the filters\n";
    return 2;
  }
  std::cout << (csv ? cost::format_table1_csv(rows) : cost::format_table1_text(rows));
  if (!check) return 0;
  const std::vector<std::string> issues = cost::check_table1(rows);
  for (const std::string& issue : issues) std::cout << "MISMATCH " << issue << "\n";
  std::cout << (issues.empty() ? "table1 check: all cells match\n" : "table1 check: FAILED\n");
  return issues.empty() ? 0 : 1;
}

// Lagrangian breakdown on a small binary example: Y uniform, each X_j a
// binary symmetric observation of Y with the given crossover.
int cmd_oracle(std::size_t nodes, double crossover, double s, double step) {
  info::ObservationModel model;
  model.p_y = {0.5, 0.5};
  for (std::size_t j = 0; j < nodes; ++j) {
    model.p_x_given_y.push_back({{1.0 - crossover, crossover}, {crossover, 1.0 - crossover}});
  }
  const std::vector<info::Conditional> copy(nodes, info::Conditional{{1.0, 0.0}, {0.0, 1.0}});
  const info::LagrangianTerms t = info::lagrangian_terms(info::JointPMF(model, copy), s);
  std::printf("encoders: deterministic copy U_j = X_j\n");
  std::printf("H(Y|U_1..U_J) = %.12f nats\n", t.h_y_given_codes);
  for (std::size_t j = 0; j < nodes; ++j) {
    std::printf("node %zu: H(Y|U) = %.12f  I(U;X) = %.12f\n", j + 1, t.h_y_given_code[j],
                t.i_code_observation[j]);
  }
  std::printf("lagrangian = %.12f\n", t.value);
  std::printf("population objective = %.12f\n",
              info::population_objective(info::JointPMF(model, copy), s));
  const std::vector<std::size_t> codes(nodes, 2);
  const info::GridOptimum best = info::grid_optimal_lagrangian(model, codes, s, step);
  std::printf("grid optimum (step %.3g) = %.12f\n", step, best.value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-network learning experiments with federated and split learning baselines"};
  app.require_subcommand(1);

  RunFlags rf;
  CLI::App* run = app.add_subcommand("run", "Train one scheme and write a result bundle");
  run->add_option("--config", rf.config_path, "JSON config file");
  run->add_option("--preset", rf.preset, "exp1-desk or exp2-desk")->capture_default_str();
  run->add_option("--scheme", rf.scheme, "inl, fl or sl")->capture_default_str();
  run->add_option("--layout", rf.layout, "exp1 or exp2");
  run->add_option("--q", rf.q, "data points");
  run->add_option("--d", rf.d, "feature dimension");
  run->add_option("--classes", rf.classes, "number of classes K");
  run->add_option("--separation", rf.separation, "centroid separation");
  run->add_option("--sigmas", rf.sigmas, "per-view noise std devs (sets J)")->delimiter(',');
  run->add_option("--data-seed", rf.data_seed, "dataset seed");
  run->add_option("--test-fraction", rf.test_fraction, "held-out fraction");
  run->add_option("--encoder-hidden", rf.encoder_hidden, "encoder hidden widths")->delimiter(',');
  run->add_option("--latent-width", rf.latent_width, "code width per node");
  run->add_option("--fusion-hidden", rf.fusion_hidden, "fusion hidden widths")->delimiter(',');
  run->add_option("--head-hidden", rf.head_hidden, "marginal head hidden widths")->delimiter(',');
  run->add_option("--activation", rf.activation, "relu, tanh, sigmoid or identity");
  run->add_option("--epochs", rf.epochs, "training epochs (FL: rounds)");
  run->add_option("--batch-size", rf.batch_size, "mini-batch size");
  run->add_option("--lr", rf.lr, "learning rate");
  run->add_option("--s", rf.s, "Lagrange parameter");
  run->add_option("--samples", rf.samples, "reparametrization draws per datum");
  run->add_option("--local-epochs", rf.local_epochs, "FL local epochs per round");
  run->add_flag("--weighted", rf.weighted, "FL: weight clients by shard size");
  run->add_option("--seed", rf.seed, "training seed");
  run->add_option("--s-bits", rf.s_bits, "bits per transmitted value");
  run->add_option("--quantizer-bits", rf.quantizer_bits, "fixed-width quantizer bits (0: off)");
  run->add_option("--quantizer-range", rf.quantizer_range, "quantizer clamp range");
  run->add_option("--out", rf.out, "output directory (default $INNET_OUT_DIR or runs/)");
  run->add_flag("--messages", rf.messages, "write messages.csv");
  run->add_flag("--no-checkpoints", rf.no_checkpoints, "skip checkpoints");
  run->add_flag("--quiet", rf.quiet, "no per-epoch output");

  std::vector<std::string> dirs;
  std::string merged_out;
  CLI::App* compare = app.add_subcommand("compare", "Merge result bundles sharing a test set");
  compare->add_option("bundles", dirs, "bundle directories")->required();
  compare->add_option("--out", merged_out, "merged CSV path (default stdout)");

  bool check = false;
  bool csv = false;
  double q = 0.0;
  std::string model;
  double s_bits = 32.0;
  CLI::App* table1 = app.add_subcommand("table1", "Bandwidth table for VGG16 and ResNet50");
  table1->add_flag("--check", check, "exit non-zero unless every cell matches the published table");
  table1->add_option("--q", q, "keep rows with this many data points");
  table1->add_option("--model", model, "vgg16 or resnet50");
  table1->add_option("--s-bits", s_bits, "bits per value")->capture_default_str();
  table1->add_flag("--csv", csv, "CSV output");

  std::size_t nodes = 2;
  double crossover = 0.1;
  double s = 1.0;
  double step = 0.25;
  CLI::App* oracle = app.add_subcommand("oracle", "Exact Lagrangian on a binary toy law");
  oracle->add_option("--nodes", nodes, "J")->capture_default_str();
  oracle->add_option("--crossover", crossover, "observation flip probability")->capture_default_str();
  oracle->add_option("--s", s, "Lagrange parameter")->capture_default_str();
  oracle->add_option("--step", step, "encoder grid step")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(rf, *run);
    if (*compare) return cmd_compare(dirs, merged_out);
    if (*table1) return cmd_table1(check, q, model, s_bits, csv);
    if (*oracle) return cmd_oracle(nodes, crossover, s, step);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
