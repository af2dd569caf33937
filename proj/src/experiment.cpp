#include "innet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "innet/baselines.hpp"
#include "innet/checkpoint.hpp"
#include "innet/errors.hpp"
#include "innet/inl.hpp"
#include "innet/protocol.hpp"

namespace innet::exp {

using nlohmann::json;

std::string to_string(SchemeKind scheme) {
  switch (scheme) {
    case SchemeKind::INL: return "inl";
    case SchemeKind::FL: return "fl";
    case SchemeKind::SL: return "sl";
  }
  return "?";
}

SchemeKind scheme_from_string(const std::string& name) {
  if (name == "inl") return SchemeKind::INL;
  if (name == "fl") return SchemeKind::FL;
  if (name == "sl") return SchemeKind::SL;
  throw ValidationError("unknown scheme '" + name + "' (expected inl, fl or sl)");
}

std::string to_string(Layout layout) { return layout == Layout::Exp1 ? "exp1" : "exp2"; }

Layout layout_from_string(const std::string& name) {
  if (name == "exp1") return Layout::Exp1;
  if (name == "exp2") return Layout::Exp2;
  throw ValidationError("unknown layout '" + name + "' (expected exp1 or exp2)");
}

ConfigError::ConfigError(std::string path, std::size_t line, const std::string& message)
    : std::runtime_error(message), path_(std::move(path)), line_(line) {}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"exp1-desk", "exp2-desk"};
  return names;
}

ExperimentConfig preset(const std::string& name, SchemeKind scheme) {
  ExperimentConfig c;
  c.preset = name;
  c.scheme = scheme;
  if (name == "exp1-desk") {
    c.layout = Layout::Exp1;
  } else if (name == "exp2-desk") {
    c.layout = Layout::Exp2;
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected exp1-desk or exp2-desk)");
  }
  c.training.learning_rate = 0.05;
  c.training.s = 0.01;
  return c;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& path, const std::string& msg) {
    throw ConfigError(path, 0, path + ": " + msg);
  };
  const DatasetConfig& d = c.dataset;
  if (d.sigmas.empty()) fail("dataset.sigmas", "at least one view is required");
  for (double s : d.sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("dataset.sigmas", "entries must be finite and >= 0");
  }
  if (d.classes < 2) fail("dataset.classes", "must be at least 2");
  if (d.d < static_cast<std::size_t>(d.classes)) fail("dataset.d", "must be >= dataset.classes");
  if (!(d.separation >= 0.0) || !std::isfinite(d.separation)) {
    fail("dataset.separation", "must be finite and >= 0");
  }
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) {
    fail("dataset.test_fraction", "must lie in (0, 1)");
  }
  const auto train = static_cast<std::size_t>(
      std::llround((1.0 - d.test_fraction) * static_cast<double>(d.q)));
  if (train < c.nodes() || train == d.q) {
    fail("dataset.q", "too small for the test fraction and number of views");
  }

  const ModelConfig& m = c.model;
  if (m.latent_width == 0) fail("model.latent_width", "must be positive");
  for (std::size_t w : m.encoder_hidden) {
    if (w == 0) fail("model.encoder_hidden", "widths must be positive");
  }
  for (std::size_t w : m.fusion_hidden) {
    if (w == 0) fail("model.fusion_hidden", "widths must be positive");
  }
  for (std::size_t w : m.head_hidden) {
    if (w == 0) fail("model.head_hidden", "widths must be positive");
  }
  try {
    const nn::Activation a = nn::activation_from_string(m.activation);
    if (a == nn::Activation::Softmax) fail("model.activation", "softmax is reserved for outputs");
  } catch (const ValidationError& e) {
    fail("model.activation", e.what());
  }

  const TrainingConfig& t = c.training;
  if (t.epochs == 0) fail("training.epochs", "must be positive");
  if (t.batch_size == 0) fail("training.batch_size", "must be positive");
  if (!(t.learning_rate > 0.0) || !std::isfinite(t.learning_rate)) {
    fail("training.learning_rate", "must be positive");
  }
  if (!(t.s >= 0.0) || !std::isfinite(t.s)) fail("training.s", "must be finite and >= 0");
  if (t.samples == 0) fail("training.samples", "must be positive");
  if (t.local_epochs == 0) fail("training.local_epochs", "must be positive");

  if (c.cost.s_bits <= 0) fail("cost.s_bits", "must be positive");
  if (c.cost.quantizer_bits < 0 || c.cost.quantizer_bits > 32) {
    fail("cost.quantizer_bits", "must lie in [0, 32]");
  }
  if (c.cost.quantizer_bits > 0 && !(c.cost.quantizer_range > 0.0)) {
    fail("cost.quantizer_range", "must be positive when quantizing");
  }
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["scheme"] = to_string(c.scheme);
  j["layout"] = to_string(c.layout);
  j["dataset"] = {{"q", c.dataset.q},
                  {"d", c.dataset.d},
                  {"classes", c.dataset.classes},
                  {"separation", c.dataset.separation},
                  {"sigmas", c.dataset.sigmas},
                  {"seed", c.dataset.seed},
                  {"test_fraction", c.dataset.test_fraction}};
  j["model"] = {{"encoder_hidden", c.model.encoder_hidden},
                {"latent_width", c.model.latent_width},
                {"fusion_hidden", c.model.fusion_hidden},
                {"head_hidden", c.model.head_hidden},
                {"activation", c.model.activation}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"learning_rate", c.training.learning_rate},
                   {"s", c.training.s},
                   {"samples", c.training.samples},
                   {"local_epochs", c.training.local_epochs},
                   {"weighted_average", c.training.weighted_average},
                   {"seed", c.training.seed}};
  j["cost"] = {{"s_bits", c.cost.s_bits},
               {"quantizer_bits", c.cost.quantizer_bits},
               {"quantizer_range", c.cost.quantizer_range}};
  j["output"] = {{"dir", c.output.dir},
                 {"messages", c.output.messages},
                 {"checkpoints", c.output.checkpoints}};
  return j.dump(2) + "\n";
}

namespace {

std::size_t line_at(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the key at a dotted path, found by scanning for each quoted key in
// turn. 0 when not found.
std::size_t line_of(const std::string& text, const std::string& path) {
  std::size_t at = 0;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    at = text.find("\"" + key + "\"", at);
    if (at == std::string::npos) return 0;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return line_at(text, at);
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    const std::size_t line = line_of(text_, path);
    std::string where = source_;
    if (line > 0) where += ":" + std::to_string(line);
    throw ConfigError(path, line, where + ": " + path + ": " + msg);
  }

  void check_keys(const json& obj, const std::string& prefix,
                  const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(prefix, "expected an object");
    for (const auto& item : obj.items()) {
      if (!allowed.count(item.key())) {
        fail(prefix.empty() ? item.key() : prefix + "." + item.key(), "unknown field");
      }
    }
  }

  template <typename T>
  void read(const json& obj, const std::string& prefix, const std::string& key, T& out) const {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) fail(path, "expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) fail(path, "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) fail(path, "expected a number");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(path, std::string("wrong type (") + it->type_name() + ")");
    }
  }

  void read_widths(const json& obj, const std::string& prefix, const std::string& key,
                   std::vector<std::size_t>& out) const {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string path = prefix + "." + key;
    if (!it->is_array()) fail(path, "expected an array of widths");
    out.clear();
    for (const json& v : *it) {
      if (!v.is_number_unsigned()) fail(path, "widths must be non-negative integers");
      out.push_back(v.get<std::size_t>());
    }
  }

 private:
  const std::string& text_;
  std::string source_;
};

}  // namespace

ExperimentConfig config_from_json(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t line = line_at(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("", line, source + ":" + std::to_string(line) + ": syntax error: " + e.what());
  }
  const Reader r(text, source);
  r.check_keys(root, "", {"preset", "scheme", "layout", "dataset", "model", "training", "cost", "output"});

  ExperimentConfig c;
  r.read(root, "", "preset", c.preset);
  std::string scheme = to_string(c.scheme);
  std::string layout = to_string(c.layout);
  r.read(root, "", "scheme", scheme);
  r.read(root, "", "layout", layout);
  try {
    c.scheme = scheme_from_string(scheme);
  } catch (const ValidationError& e) {
    r.fail("scheme", e.what());
  }
  try {
    c.layout = layout_from_string(layout);
  } catch (const ValidationError& e) {
    r.fail("layout", e.what());
  }

  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    r.check_keys(d, "dataset", {"q", "d", "classes", "separation", "sigmas", "seed", "test_fraction"});
    r.read(d, "dataset", "q", c.dataset.q);
    r.read(d, "dataset", "d", c.dataset.d);
    r.read(d, "dataset", "classes", c.dataset.classes);
    r.read(d, "dataset", "separation", c.dataset.separation);
    r.read(d, "dataset", "seed", c.dataset.seed);
    r.read(d, "dataset", "test_fraction", c.dataset.test_fraction);
    if (d.contains("sigmas")) {
      if (!d["sigmas"].is_array()) r.fail("dataset.sigmas", "expected an array of numbers");
      c.dataset.sigmas.clear();
      for (const json& v : d["sigmas"]) {
        if (!v.is_number()) r.fail("dataset.sigmas", "expected an array of numbers");
        c.dataset.sigmas.push_back(v.get<double>());
      }
    }
  }
  if (root.contains("model")) {
    const json& m = root["model"];
    r.check_keys(m, "model", {"encoder_hidden", "latent_width", "fusion_hidden", "head_hidden", "activation"});
    r.read_widths(m, "model", "encoder_hidden", c.model.encoder_hidden);
    r.read(m, "model", "latent_width", c.model.latent_width);
    r.read_widths(m, "model", "fusion_hidden", c.model.fusion_hidden);
    r.read_widths(m, "model", "head_hidden", c.model.head_hidden);
    r.read(m, "model", "activation", c.model.activation);
  }
  if (root.contains("training")) {
    const json& t = root["training"];
    r.check_keys(t, "training", {"epochs", "batch_size", "learning_rate", "s", "samples",
                                 "local_epochs", "weighted_average", "seed"});
    r.read(t, "training", "epochs", c.training.epochs);
    r.read(t, "training", "batch_size", c.training.batch_size);
    r.read(t, "training", "learning_rate", c.training.learning_rate);
    r.read(t, "training", "s", c.training.s);
    r.read(t, "training", "samples", c.training.samples);
    r.read(t, "training", "local_epochs", c.training.local_epochs);
    r.read(t, "training", "weighted_average", c.training.weighted_average);
    r.read(t, "training", "seed", c.training.seed);
  }
  if (root.contains("cost")) {
    const json& k = root["cost"];
    r.check_keys(k, "cost", {"s_bits", "quantizer_bits", "quantizer_range"});
    r.read(k, "cost", "s_bits", c.cost.s_bits);
    r.read(k, "cost", "quantizer_bits", c.cost.quantizer_bits);
    r.read(k, "cost", "quantizer_range", c.cost.quantizer_range);
  }
  if (root.contains("output")) {
    const json& o = root["output"];
    r.check_keys(o, "output", {"dir", "messages", "checkpoints"});
    r.read(o, "output", "dir", c.output.dir);
    r.read(o, "output", "messages", c.output.messages);
    r.read(o, "output", "checkpoints", c.output.checkpoints);
  }

  try {
    validate(c);
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    r.fail(e.path(), msg.substr(msg.find(": ") + 2));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), path.string());
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.6f", r.test_acc);
    out += std::to_string(r.epoch) + "," + r.scheme + "," + format_double(r.loss_total) + "," +
           format_double(r.loss_joint) + "," + format_double(r.loss_marginal) + "," +
           format_double(r.loss_rate) + "," + acc + "," + std::to_string(r.cum_bits) + "\n";
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ValidationError("metrics CSV header mismatch");
  }
  std::vector<MetricsRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw ValidationError("metrics CSV line " + std::to_string(n) + ": expected 8 fields");
    try {
      MetricsRow r;
      r.epoch = std::stoull(f[0]);
      r.scheme = f[1];
      r.loss_total = std::stod(f[2]);
      r.loss_joint = std::stod(f[3]);
      r.loss_marginal = std::stod(f[4]);
      r.loss_rate = std::stod(f[5]);
      r.test_acc = std::stod(f[6]);
      r.cum_bits = std::stoull(f[7]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ValidationError("metrics CSV line " + std::to_string(n) + ": malformed number");
    }
  }
  return rows;
}

namespace {

void check_finite(double loss, std::size_t epoch, const std::string& scheme) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error(scheme + " epoch " + std::to_string(epoch) +
                             ": non-finite loss; lower training.learning_rate or training.s");
  }
}

inl::Quantizer make_quantizer(const CostConfig& cost) {
  return cost.quantizer_bits > 0 ? inl::Quantizer::uniform(cost.quantizer_bits, cost.quantizer_range)
                                 : inl::Quantizer::off();
}

std::string checkpoint_bytes(const nn::Network& net) {
  std::ostringstream out(std::ios::binary);
  nn::write_checkpoint(out, net);
  return out.str();
}

struct Data {
  data::TrainTestSplit split;
  std::uint64_t test_hash = 0;
};

Data make_data(const ExperimentConfig& c) {
  const data::LabelledSamples s = data::synth_gaussian_classes(
      c.dataset.q, c.dataset.d, c.dataset.classes, c.dataset.separation, c.dataset.seed);
  const data::MultiViewDataset ds =
      data::make_views(s.features, s.labels, c.dataset.sigmas, c.dataset.seed, c.dataset.classes);
  Data out{data::split_train_test(ds, c.dataset.test_fraction), 0};
  out.test_hash = data::dataset_hash(out.split.test);
  return out;
}

void run_inl(const ExperimentConfig& c, const Data& d, RunResult& result) {
  const std::size_t nodes = c.nodes();
  const data::Partition part = data::partition(d.split.train, data::Scheme::INL);
  std::vector<Tensor> shards;
  for (const data::Shard& s : part.shards) shards.push_back(s.views.front());

  inl::InlArchitecture arch;
  arch.input_widths.assign(nodes, c.dataset.d);
  arch.latent_widths.assign(nodes, c.model.latent_width);
  arch.encoder_hidden = c.model.encoder_hidden;
  arch.fusion_hidden = c.model.fusion_hidden;
  arch.head_hidden = c.model.head_hidden;
  arch.classes = static_cast<std::size_t>(c.dataset.classes);
  arch.activation = nn::activation_from_string(c.model.activation);

  Rng init(derive_seed(c.training.seed, 1));
  inl::InlSystem system =
      inl::build_inl_system(arch, std::move(shards), d.split.train.labels, init);
  result.fusion_width = nodes * c.model.latent_width;
  result.parameter_count = system.parameter_count();

  inl::MessageLog log;
  inl::Channel channel(log, c.cost.s_bits, make_quantizer(c.cost));
  Rng rng(derive_seed(c.training.seed, 2));
  const inl::TrainOptions options{c.training.batch_size, c.training.learning_rate, c.training.s,
                                  c.training.samples};
  for (std::size_t e = 1; e <= c.training.epochs; ++e) {
    const inl::EpochMetrics m = system.train_epoch(options, rng, channel, static_cast<int>(e));
    check_finite(m.loss.total, e, "inl");
    MetricsRow row;
    row.epoch = e;
    row.scheme = "inl";
    row.loss_total = -m.loss.total;
    row.loss_joint = -m.loss.joint_ll;
    row.loss_marginal = -m.loss.marginal_sum();
    row.loss_rate = m.loss.rate_sum();
    row.test_acc = inl::accuracy(system.infer(d.split.test.views), d.split.test.labels);
    row.cum_bits = log.total_bits();
    result.rows.push_back(row);
  }

  if (c.output.messages) {
    std::ostringstream out;
    log.write_csv(out);
    result.messages_csv = out.str();
  }
  if (c.output.checkpoints) {
    for (const inl::EncoderNode& node : system.nodes()) {
      result.checkpoints.emplace_back("encoder" + std::to_string(node.id()) + ".ckpt",
                                      checkpoint_bytes(node.net()));
    }
    result.checkpoints.emplace_back("decoder.ckpt", checkpoint_bytes(system.fusion().decoder()));
    for (std::size_t j = 0; j < nodes; ++j) {
      result.checkpoints.emplace_back("head" + std::to_string(j + 1) + ".ckpt",
                                      checkpoint_bytes(system.fusion().heads()[j]));
    }
  }
}

// Per-participant inputs for the baselines.
struct BaselineLayout {
  std::vector<std::vector<Tensor>> inputs;
  std::vector<std::vector<int>> labels;
  std::vector<Tensor> test_inputs;
  std::size_t branches = 0;
  std::size_t dropped = 0;
};

BaselineLayout baseline_layout(const ExperimentConfig& c, const Data& d) {
  BaselineLayout out;
  const data::MultiViewDataset& train = d.split.train;
  if (c.layout == Layout::Exp1) {
    const data::Partition part = data::partition(
        train, c.scheme == SchemeKind::FL ? data::Scheme::FL_Exp1 : data::Scheme::SL_Exp1);
    for (const data::Shard& s : part.shards) {
      out.inputs.push_back(s.views);
      out.labels.push_back(data::labels_at(train, s.indices));
    }
    out.test_inputs = d.split.test.views;
    out.branches = c.nodes();
    out.dropped = part.dropped;
  } else {
    const data::Partition part = data::partition(train, data::Scheme::Shared_Exp2);
    for (const data::Shard& s : part.shards) {
      out.inputs.push_back(s.views);
      out.labels.push_back(data::labels_at(train, s.indices));
    }
    out.test_inputs = {data::mean_view(d.split.test)};
    out.branches = 1;
  }
  return out;
}

void add_baseline_checkpoints(const baselines::BranchedModel& model, RunResult& result) {
  for (std::size_t b = 0; b < model.branch_count(); ++b) {
    result.checkpoints.emplace_back("branch" + std::to_string(b + 1) + ".ckpt",
                                    checkpoint_bytes(model.branches()[b]));
  }
  result.checkpoints.emplace_back("server.ckpt", checkpoint_bytes(model.head()));
}

void run_baseline(const ExperimentConfig& c, const Data& d, RunResult& result) {
  const BaselineLayout lay = baseline_layout(c, d);
  Rng init(derive_seed(c.training.seed, 1));
  baselines::BranchedModel model = baselines::BranchedModel::build(
      lay.branches, c.dataset.d, c.model.encoder_hidden, c.model.latent_width,
      c.model.fusion_hidden, static_cast<std::size_t>(c.dataset.classes),
      nn::activation_from_string(c.model.activation), init);
  result.fusion_width = model.cut_width();
  result.parameter_count = model.parameter_count();
  result.client_parameter_count = model.client_parameter_count();
  result.dropped = lay.dropped;

  inl::MessageLog log;
  inl::Channel channel(log, c.cost.s_bits, make_quantizer(c.cost));
  const std::string name = to_string(c.scheme);

  std::vector<baselines::FlClient> fl_clients;
  std::vector<baselines::SlClient> sl_clients;
  for (std::size_t k = 0; k < lay.inputs.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (c.scheme == SchemeKind::FL) {
      fl_clients.push_back({id, model, lay.inputs[k], lay.labels[k],
                            Rng(derive_seed(c.training.seed, 100 + k))});
    } else {
      sl_clients.push_back({id, lay.inputs[k]});
    }
  }
  std::vector<double> server = model.parameters();
  Rng rng(derive_seed(c.training.seed, 2));
  const baselines::FlOptions fl{c.training.local_epochs, c.training.batch_size,
                                c.training.learning_rate, c.training.weighted_average};

  for (std::size_t e = 1; e <= c.training.epochs; ++e) {
    double ll = 0.0;
    if (c.scheme == SchemeKind::FL) {
      const baselines::FlRoundResult r =
          baselines::fl_round(fl_clients, server, fl, channel, static_cast<int>(e));
      server = r.params;
      model.assign(server);
      ll = r.mean_ll;
    } else {
      ll = baselines::sl_epoch(sl_clients, lay.labels, model, c.training.batch_size,
                               c.training.learning_rate, rng, channel, static_cast<int>(e))
               .mean_ll;
    }
    check_finite(ll, e, name);
    MetricsRow row;
    row.epoch = e;
    row.scheme = name;
    row.loss_total = -ll;
    row.loss_joint = -ll;
    row.test_acc = baselines::accuracy(model.predict(lay.test_inputs), d.split.test.labels);
    row.cum_bits = log.total_bits();
    result.rows.push_back(row);
  }

  if (c.output.messages) {
    std::ostringstream out;
    log.write_csv(out);
    result.messages_csv = out.str();
  }
  if (c.output.checkpoints) add_baseline_checkpoints(model, result);
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

RunResult run(const ExperimentConfig& config) {
  validate(config);
  const Data d = make_data(config);
  RunResult result;
  result.test_hash = d.test_hash;
  result.q = config.dataset.q;
  result.train_rows = d.split.train.size();
  if (config.scheme == SchemeKind::INL) {
    run_inl(config, d, result);
  } else {
    run_baseline(config, d, result);
  }
  return result;
}

void write_bundle(const std::filesystem::path& dir, const ExperimentConfig& config,
                  const RunResult& result) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", format_metrics_csv(result.rows));
  write_text(dir / "config.json", to_json(config));
  json bundle = {{"scheme", to_string(config.scheme)},
                 {"layout", to_string(config.layout)},
                 {"test_hash", hex64(result.test_hash)},
                 {"q", result.q},
                 {"train_rows", result.train_rows},
                 {"dropped_rows", result.dropped},
                 {"nodes", config.nodes()},
                 {"fusion_width", result.fusion_width},
                 {"parameters", result.parameter_count},
                 {"client_parameters", result.client_parameter_count},
                 {"s_bits", config.cost.s_bits},
                 {"bits_unit", "cumulative metered training bits"}};
  write_text(dir / "bundle.json", bundle.dump(2) + "\n");
  if (!result.messages_csv.empty()) write_text(dir / "messages.csv", result.messages_csv);
  if (!result.checkpoints.empty()) {
    std::filesystem::create_directories(dir / "checkpoints");
    for (const auto& [name, bytes] : result.checkpoints) {
      write_text(dir / "checkpoints" / name, bytes);
    }
  }
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  if (!config.output.dir.empty()) return config.output.dir;
  const char* env = std::getenv("INNET_OUT_DIR");
  const std::filesystem::path root = (env != nullptr && *env != '\0') ? env : "runs";
  const std::string name = (config.preset.empty() ? "custom" : config.preset) + "-" +
                           to_string(config.scheme) + "-seed" +
                           std::to_string(config.training.seed);
  return root / name;
}

Bundle load_bundle(const std::filesystem::path& dir) {
  Bundle b;
  b.dir = dir;
  json meta;
  try {
    meta = json::parse(read_text(dir / "bundle.json"));
    b.scheme = meta.at("scheme").get<std::string>();
    b.test_hash = std::stoull(meta.at("test_hash").get<std::string>(), nullptr, 16);
    b.q = meta.at("q").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(dir.string() + "/bundle.json: " + e.what());
  }
  b.rows = parse_metrics_csv(read_text(dir / "metrics.csv"));
  return b;
}

std::optional<std::uint64_t> bits_to_accuracy(const std::vector<MetricsRow>& rows, double level) {
  for (const MetricsRow& r : rows) {
    if (r.test_acc >= level) return r.cum_bits;
  }
  return std::nullopt;
}

std::string sparkline(const std::vector<double>& values, double lo, double hi) {
  static const char* const kBlocks[] = {"▁", "▂", "▃", "▄",
                                        "▅", "▆", "▇", "█"};
  std::string out;
  for (double v : values) {
    double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    out += kBlocks[static_cast<std::size_t>(std::lround(t * 7.0))];
  }
  return out;
}

Comparison compare(const std::vector<Bundle>& bundles) {
  if (bundles.empty()) throw ValidationError("no bundles to compare");
  const Bundle& ref = bundles.front();
  for (const Bundle& b : bundles) {
    if (b.test_hash != ref.test_hash) {
      throw ValidationError("test set mismatch: " + ref.dir.string() + " has hash " +
                            hex64(ref.test_hash) + ", " + b.dir.string() + " has hash " +
                            hex64(b.test_hash));
    }
    if (b.q != ref.q) {
      throw ValidationError("q mismatch: " + std::to_string(ref.q) + " vs " + std::to_string(b.q));
    }
  }

  Comparison out;
  std::vector<MetricsRow> merged;
  for (const Bundle& b : bundles) merged.insert(merged.end(), b.rows.begin(), b.rows.end());
  out.merged_csv = format_metrics_csv(merged);

  std::ostringstream s;
  s << "bits to reach test accuracy (cumulative metered training bits)\n";
  s << "level";
  for (const Bundle& b : bundles) s << "\t" << b.scheme;
  s << "\n";
  for (int pct = 50; pct <= 95; pct += 5) {
    const double level = pct / 100.0;
    char lv[16];
    std::snprintf(lv, sizeof lv, "%.2f", level);
    s << lv;
    for (const Bundle& b : bundles) {
      const auto bits = bits_to_accuracy(b.rows, level);
      s << "\t" << (bits ? std::to_string(*bits) : std::string("-"));
    }
    s << "\n";
  }
  s << "test accuracy per epoch (0 to 1)\n";
  for (const Bundle& b : bundles) {
    std::vector<double> acc;
    for (const MetricsRow& r : b.rows) acc.push_back(r.test_acc);
    char last[16];
    std::snprintf(last, sizeof last, "%.4f", acc.empty() ? 0.0 : acc.back());
    s << b.scheme << "\t" << sparkline(acc, 0.0, 1.0) << "\t" << last << "\n";
  }
  out.summary = s.str();
  return out;
}

}  // namespace innet::exp
