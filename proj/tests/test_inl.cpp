#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "innet/cost_model.hpp"
#include "innet/errors.hpp"
#include "innet/glued.hpp"
#include "innet/inl.hpp"
#include "innet/protocol.hpp"
#include "support.hpp"

using namespace innet;
using namespace innet::inl;
using innet::testing::node_noise;
using innet::testing::tiny_stack;

TEST_CASE("one protocol step equals the glued gradient step bit for bit") {
  for (std::size_t nodes : {1, 2, 3}) {
    for (double s : {0.0, 0.6}) {
      auto stack = tiny_stack(nodes, 12, 100 + nodes, nn::Activation::ReLU, 16, 3, 3, true);
      GluedModel glued = GluedModel::from(stack.system);
      MessageLog log;
      Channel channel(log, 32);
      Rng rng(7);
      for (int step = 0; step < 5; ++step) {
        std::vector<std::size_t> rows(6);
        for (auto& r : rows) r = rng.index(12);
        const std::vector<Tensor> noise = node_noise(stack.system, rows.size(), rng);
        channel.set_round(1, step, Phase::Training);
        stack.system.train_step(rows, noise, s, 0.1, channel);
        glued.step(rows, noise, s, 0.1);
      }
      CHECK(stack.system.parameters() == glued.parameters());
    }
  }
}

TEST_CASE("protocol gradient matches central differences of the objective") {
  for (std::uint64_t seed : {1, 2}) {
    auto stack = tiny_stack(2, 5, seed, nn::Activation::Tanh, 5, 2, 3, true);
    const GluedModel glued = GluedModel::from(stack.system);
    Rng rng(seed + 50);
    const std::vector<std::size_t> rows = {0, 1, 2, 3, 4};
    const std::vector<Tensor> noise = node_noise(stack.system, rows.size(), rng);
    const double s = 0.7;
    MessageLog log;
    Channel channel(log, 32);
    const std::vector<double> analytic =
        flatten(stack.system.compute_gradients(rows, noise, s, channel));
    const std::vector<double> params = glued.parameters();
    REQUIRE(analytic.size() == params.size());
    GluedModel probe = glued;
    const double h = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
      std::vector<double> p = params;
      p[k] += h;
      probe.assign(p);
      const double up = -probe.evaluate(rows, noise, s, false).loss.total;
      p[k] -= 2 * h;
      probe.assign(p);
      const double down = -probe.evaluate(rows, noise, s, false).loss.total;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(analytic[k] - fd) <= 1e-4 * std::abs(fd) + 1e-9);
    }
  }
}

TEST_CASE("error slices follow the concatenation widths") {
  Rng rng(3);
  InlArchitecture arch;
  arch.input_widths = {4, 4};
  arch.latent_widths = {3, 5};
  arch.encoder_hidden = {6};
  arch.fusion_hidden = {7};
  arch.classes = 2;
  std::vector<Tensor> views = {rng.normal_tensor(4, 4), rng.normal_tensor(4, 4)};
  InlSystem system = build_inl_system(arch, views, {0, 1, 1, 0}, rng);
  CHECK(system.fusion().decoder().input_width() == 8);

  MessageLog log;
  Channel channel(log, 32);
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  system.compute_gradients(rows, node_noise(system, 4, rng), 1.0, channel);
  REQUIRE(log.records().size() == 4);
  CHECK(log.records()[2].kind == MessageKind::ErrorSlice);
  CHECK(log.records()[2].elements == 4 * 3);
  CHECK(log.records()[3].elements == 4 * 5);
  const std::size_t widths[] = {3, 5};
  CHECK(audit_inl_log(log, widths, 2).empty());
}

TEST_CASE("protocol violations name the node") {
  auto stack = tiny_stack(2, 4, 9);
  EncoderNode& node = stack.system.node(1);
  CHECK_THROWS_AS(node.backward(Tensor({2, node.latent_width()}), 1.0), ProtocolError);
  Rng rng(1);
  const std::vector<std::size_t> rows = {0, 1};
  node.forward(rows, rng.normal_tensor(2, node.latent_width()));
  try {
    node.backward(Tensor({2, node.latent_width() + 1}), 1.0);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.node_id() == 2);
  }
  std::vector<Tensor> bad = {Tensor({2, 3}), Tensor({2, 1})};
  try {
    stack.system.fusion().process(bad, rows, 1.0);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.node_id() == 2);
  }
}

TEST_CASE("inference needs every view") {
  auto stack = tiny_stack(3, 4, 5);
  std::vector<Tensor> views = stack.views;
  views[1] = Tensor();
  try {
    stack.system.infer(views);
    FAIL("expected UnavailableViewError");
  } catch (const UnavailableViewError& e) {
    CHECK(e.node_id() == 2);
  }
  views.pop_back();
  CHECK_THROWS_AS(stack.system.infer(std::span<const Tensor>(views.data(), 1)), UnavailableViewError);
}

TEST_CASE("zero weights infer the uniform distribution") {
  auto stack = tiny_stack(2, 4, 6);
  for (std::size_t j = 0; j < 2; ++j) {
    nn::Network& net = stack.system.node(j).net();
    net.assign(std::vector<double>(net.parameter_count(), 0.0));
  }
  nn::Network& dec = stack.system.fusion().decoder();
  dec.assign(std::vector<double>(dec.parameter_count(), 0.0));
  const Tensor p = stack.system.infer(stack.views);
  for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("soft predictions are distributions and inference is metered") {
  auto stack = tiny_stack(2, 6, 8);
  MessageLog log;
  Channel channel(log, 32);
  channel.set_round(0, 0, Phase::Inference);
  const Tensor p = stack.system.infer(stack.views, &channel);
  for (std::size_t n = 0; n < p.rows(); ++n) {
    double total = 0.0;
    for (double v : p.row(n)) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  CHECK(log.bits(Phase::Training) == 0);
  const std::size_t widths[] = {3, 4};
  CHECK(audit_inl_log(log, widths, 3).empty());
  CHECK(log.records().back().kind == MessageKind::SoftPrediction);
  CHECK(log.records().back().node == 3);
}

TEST_CASE("meter examples") {
  MessageLog log;
  CHECK(log.total_bits() == 0);
  Channel channel(log, 32);
  channel.send(MessageKind::ActivationBatch, 1, Tensor({1, 10}));
  CHECK(log.total_bits() == 320);
  CHECK(meter(log.records()) == 320);
  channel.send(MessageKind::ErrorSlice, 1, Tensor({2, 5}));
  CHECK(log.bits(Phase::Training, Direction::Forward) == 320);
  CHECK(log.bits(Phase::Training, Direction::Backward) == 320);
  std::ostringstream csv;
  log.write_csv(csv);
  CHECK(csv.str() == "epoch,batch,direction,node,elements,bits\n0,0,fwd,1,10,320\n0,0,bwd,1,10,320\n");
}

TEST_CASE("quantizer clamps, rounds and charges its width") {
  const Quantizer q = Quantizer::uniform(2, 1.0);
  const Tensor out = q.apply(Tensor::vector({-3.0, -0.2, 0.2, 0.9}));
  // four levels on [-1, 1]: -1, -1/3, 1/3, 1
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(-1.0 / 3.0));
  CHECK(out[2] == doctest::Approx(1.0 / 3.0));
  CHECK(out[3] == doctest::Approx(1.0));
  CHECK(q.element_bits(32) == 2);
  CHECK(Quantizer::off().element_bits(32) == 32);
  const Tensor exact = Tensor::vector({0.123456789});
  CHECK(Quantizer::off().apply(exact) == exact);

  MessageLog log;
  Channel channel(log, 32, q);
  channel.send(MessageKind::ActivationBatch, 1, Tensor({3, 4}));
  CHECK(log.total_bits() == 24);
  CHECK_THROWS_AS(Quantizer::uniform(0, 1.0), ValidationError);
}

TEST_CASE("an epoch meters exactly the closed-form cost") {
  for (std::size_t nodes : {1, 2, 4}) {
    const std::size_t rows = 37;
    Rng rng(2);
    InlArchitecture arch;
    arch.input_widths.assign(nodes, 3);
    arch.latent_widths.assign(nodes, 2);
    arch.encoder_hidden = {5};
    arch.fusion_hidden = {4};
    arch.classes = 3;
    std::vector<Tensor> views;
    for (std::size_t j = 0; j < nodes; ++j) views.push_back(rng.normal_tensor(rows, 3));
    std::vector<int> labels(rows);
    for (auto& y : labels) y = static_cast<int>(rng.index(3));
    InlSystem system = build_inl_system(arch, views, labels, rng);

    MessageLog log;
    Channel channel(log, 32);
    TrainOptions options;
    options.batch_size = 8;
    options.s = 0.5;
    const EpochMetrics m = system.train_epoch(options, rng, channel, 1);
    const double p = static_cast<double>(2 * nodes);
    const double q = static_cast<double>(nodes * rows);  // data points summed over nodes
    const cost::CostModel model{p, q, static_cast<double>(nodes), 0.0, 32.0, 0.0};
    CHECK(static_cast<double>(m.bits) == cost::inl_bits(model));
    CHECK(log.bits(Phase::Training, Direction::Forward) ==
          log.bits(Phase::Training, Direction::Backward));
    std::vector<std::size_t> widths(nodes, 2);
    CHECK(audit_inl_log(log, widths, 3).empty());
  }
}

TEST_CASE("the audit flags out-of-order and mis-sized messages") {
  MessageLog log;
  Channel channel(log, 32);
  channel.send(MessageKind::ActivationBatch, 2, Tensor({1, 2}));
  channel.send(MessageKind::ActivationBatch, 1, Tensor({1, 2}));
  channel.send(MessageKind::ErrorSlice, 1, Tensor({1, 3}));
  channel.send(MessageKind::ErrorSlice, 2, Tensor({1, 2}));
  const std::size_t widths[] = {2, 2};
  CHECK_FALSE(audit_inl_log(log, widths, 2).empty());
}

TEST_CASE("training is deterministic") {
  auto a = tiny_stack(2, 20, 4);
  auto b = tiny_stack(2, 20, 4);
  MessageLog la, lb;
  Channel ca(la, 32), cb(lb, 32);
  Rng ra(5), rb(5);
  TrainOptions options;
  options.batch_size = 6;
  options.samples = 2;
  for (int e = 1; e <= 3; ++e) {
    a.system.train_epoch(options, ra, ca, e);
    b.system.train_epoch(options, rb, cb, e);
  }
  CHECK(a.system.parameters() == b.system.parameters());
}
