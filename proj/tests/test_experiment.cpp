#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "innet/errors.hpp"
#include "innet/experiment.hpp"

using namespace innet;
using namespace innet::exp;

namespace {

ExperimentConfig tiny(SchemeKind scheme) {
  ExperimentConfig c = preset("exp1-desk", scheme);
  c.dataset.q = 120;
  c.dataset.d = 6;
  c.dataset.classes = 3;
  c.dataset.sigmas = {0.4, 1.0, 2.0};
  c.model.encoder_hidden = {8};
  c.model.fusion_hidden = {8};
  c.training.epochs = 3;
  c.training.batch_size = 16;
  c.output.checkpoints = false;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("innet_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string error_of(const std::string& text) {
  try {
    config_from_json(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("scheme and layout names") {
  CHECK(to_string(SchemeKind::SL) == "sl");
  CHECK(scheme_from_string("fl") == SchemeKind::FL);
  CHECK(layout_from_string("exp2") == Layout::Exp2);
  CHECK_THROWS(scheme_from_string("gossip"));
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig c = tiny(SchemeKind::SL);
  c.layout = Layout::Exp2;
  c.model.head_hidden = {4};
  c.training.s = 0.25;
  c.cost.quantizer_bits = 8;
  c.cost.quantizer_range = 3.0;
  const std::string text = to_json(c);
  const ExperimentConfig back = config_from_json(text);
  CHECK(to_json(back) == text);
  CHECK(back.scheme == SchemeKind::SL);
  CHECK(back.layout == Layout::Exp2);
  CHECK(back.dataset.sigmas == c.dataset.sigmas);
  CHECK(back.training.s == 0.25);
}

TEST_CASE("config errors carry the line and field") {
  CHECK(error_of("{\n  \"scheme\": \"inl\",\n  \"training\": {\n    \"epochs\": 2,\n").find("cfg.json:") == 0);
  CHECK(error_of("{\n  \"scheme\": \"inl\",\n  \"bogus\": 1\n}") == "cfg.json:3: bogus: unknown field");
  const std::string wrong = error_of("{\n  \"training\": {\n    \"epochs\": 2,\n    \"lr\": 0.1\n  }\n}");
  CHECK(wrong == "cfg.json:4: training.lr: unknown field");
  const std::string type = error_of("{\n  \"dataset\": {\n    \"q\": \"many\"\n  }\n}");
  CHECK(type.find("cfg.json:3: dataset.q:") == 0);
  const std::string bad = error_of("{\n  \"training\": {\n    \"batch_size\": 0\n  }\n}");
  CHECK(bad.find("cfg.json:3: training.batch_size:") == 0);

  ExperimentConfig c = tiny(SchemeKind::INL);
  c.dataset.sigmas.clear();
  try {
    validate(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "dataset.sigmas");
    CHECK(e.line() == 0);
  }
}

TEST_CASE("metrics CSV round trip") {
  std::vector<MetricsRow> rows(2);
  rows[0] = {1, "inl", 1.25, 1.0, 0.5, 0.125, 0.5, 320};
  rows[1] = {2, "inl", 0.75, 0.5, 0.25, 0.0625, 0.875, 640};
  const std::string csv = format_metrics_csv(rows);
  CHECK(csv.substr(0, csv.find('\n')) == kMetricsHeader);
  const std::vector<MetricsRow> back = parse_metrics_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[1].cum_bits == 640);
  CHECK(back[1].test_acc == 0.875);
  CHECK(format_metrics_csv(back) == csv);
}

TEST_CASE("runs are deterministic and meter the closed-form costs") {
  for (SchemeKind scheme : {SchemeKind::INL, SchemeKind::FL, SchemeKind::SL}) {
    const ExperimentConfig c = tiny(scheme);
    const RunResult a = run(c);
    const RunResult b = run(c);
    CHECK(format_metrics_csv(a.rows) == format_metrics_csv(b.rows));
    REQUIRE(a.rows.size() == 3);

    const std::uint64_t j = c.nodes();
    std::uint64_t per_epoch = 0;
    if (scheme == SchemeKind::INL) {
      per_epoch = 2 * a.fusion_width * (j * a.train_rows) * 32 / j;
    } else if (scheme == SchemeKind::FL) {
      per_epoch = 2 * a.parameter_count * j * 32;
    } else {
      per_epoch = (2 * a.fusion_width * (a.train_rows - a.dropped) + a.client_parameter_count * j) * 32;
    }
    std::uint64_t prev = 0;
    for (const MetricsRow& r : a.rows) {
      CHECK(r.cum_bits - prev == per_epoch);
      prev = r.cum_bits;
    }
  }
}

TEST_CASE("the shared-view layout runs for the baselines") {
  ExperimentConfig c = tiny(SchemeKind::SL);
  c.layout = Layout::Exp2;
  const RunResult r = run(c);
  CHECK(r.dropped == 0);
  CHECK(r.fusion_width == c.model.latent_width);
  const std::uint64_t j = c.nodes();
  CHECK(r.rows[0].cum_bits ==
        (2 * r.fusion_width * j * r.train_rows + r.client_parameter_count * j) * 32);
  c.scheme = SchemeKind::FL;
  CHECK(run(c).rows.size() == 3);
}

TEST_CASE("a diverging run stops with a diagnostic") {
  ExperimentConfig c = tiny(SchemeKind::FL);
  c.model.activation = "identity";
  c.training.learning_rate = 1e6;
  c.training.epochs = 20;
  CHECK_THROWS_AS(run(c), std::runtime_error);
}

TEST_CASE("bundles are written, loaded and compared") {
  const std::filesystem::path root = scratch("bundles");
  std::vector<Bundle> bundles;
  for (SchemeKind scheme : {SchemeKind::INL, SchemeKind::FL}) {
    ExperimentConfig c = tiny(scheme);
    c.output.messages = true;
    c.output.checkpoints = true;
    const RunResult r = run(c);
    const std::filesystem::path dir = root / to_string(scheme);
    write_bundle(dir, c, r);
    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK(std::filesystem::exists(dir / "messages.csv"));
    CHECK(!std::filesystem::is_empty(dir / "checkpoints"));
    CHECK(slurp(dir / "metrics.csv") == format_metrics_csv(r.rows));
    CHECK(to_json(load_config(dir / "config.json")) == to_json(c));
    bundles.push_back(load_bundle(dir));
    CHECK(bundles.back().test_hash == r.test_hash);
  }
  const Comparison cmp = compare(bundles);
  CHECK(std::count(cmp.merged_csv.begin(), cmp.merged_csv.end(), '\n') == 7);
  CHECK(cmp.summary.find("inl") != std::string::npos);

  const std::vector<Bundle> single = {bundles[0]};
  CHECK(compare(single).merged_csv == slurp(root / "inl" / "metrics.csv"));

  std::vector<Bundle> other_test = bundles;
  other_test[1].test_hash ^= 1;
  CHECK_THROWS(compare(other_test));
  std::vector<Bundle> other_q = bundles;
  other_q[1].q += 1;
  CHECK_THROWS(compare(other_q));
  std::filesystem::remove_all(root);
}

TEST_CASE("bits to accuracy") {
  std::vector<MetricsRow> rows(3);
  rows[0].test_acc = 0.4;
  rows[0].cum_bits = 10;
  rows[1].test_acc = 0.7;
  rows[1].cum_bits = 20;
  rows[2].test_acc = 0.6;
  rows[2].cum_bits = 30;
  CHECK(bits_to_accuracy(rows, 0.6) == 20u);
  CHECK(bits_to_accuracy(rows, 0.4) == 10u);
  CHECK_FALSE(bits_to_accuracy(rows, 0.8).has_value());
}

TEST_CASE("output directory defaults") {
  ExperimentConfig c = tiny(SchemeKind::FL);
  c.output.dir = "explicit";
  CHECK(resolve_output_dir(c) == std::filesystem::path("explicit"));
  c.output.dir.clear();
  ::setenv("INNET_OUT_DIR", "/tmp/innet_env", 1);
  CHECK(resolve_output_dir(c) == std::filesystem::path("/tmp/innet_env/exp1-desk-fl-seed7"));
  ::unsetenv("INNET_OUT_DIR");
  CHECK(resolve_output_dir(c) == std::filesystem::path("runs/exp1-desk-fl-seed7"));
}

TEST_CASE("sparkline spans the block range") {
  CHECK(sparkline({0.0, 1.0}, 0.0, 1.0) == "▁█");
  CHECK(sparkline({}, 0.0, 1.0).empty());
}
