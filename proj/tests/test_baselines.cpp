#include <doctest.h>

#include <algorithm>

#include "innet/baselines.hpp"
#include "innet/cost_model.hpp"
#include "innet/errors.hpp"

using namespace innet;
using namespace innet::baselines;

namespace {

BranchedModel small_model(std::size_t branches, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t hidden[] = {5};
  const std::size_t server[] = {4};
  return BranchedModel::build(branches, 3, hidden, 2, server, 3, nn::Activation::Tanh, rng);
}

struct Shard {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
};

Shard random_shard(std::size_t branches, std::size_t rows, Rng& rng) {
  Shard s;
  for (std::size_t b = 0; b < branches; ++b) s.inputs.push_back(rng.normal_tensor(rows, 3));
  for (std::size_t n = 0; n < rows; ++n) s.labels.push_back(static_cast<int>(rng.index(3)));
  return s;
}

}  // namespace

TEST_CASE("federated average examples") {
  const std::vector<std::vector<double>> two = {{0.0}, {2.0}};
  CHECK(federated_average(two)[0] == 1.0);
  const std::vector<std::vector<double>> same(5, std::vector<double>{0.3, -1.7, 4.0});
  CHECK(federated_average(same) == same.front());
  const double weights[] = {3.0, 1.0};
  CHECK(federated_average(two, weights)[0] == doctest::Approx(0.5));
  const std::vector<std::vector<double>> ragged = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(federated_average(ragged), ValidationError);
}

TEST_CASE("federated average ignores client order") {
  Rng rng(4);
  std::vector<std::vector<double>> params(6);
  for (auto& p : params) {
    for (int k = 0; k < 50; ++k) p.push_back(rng.normal() * 1e3 + rng.uniform() * 1e-9);
  }
  const std::vector<double> ref = federated_average(params);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(params);
    CHECK(federated_average(params) == ref);
  }
}

TEST_CASE("one client and one local epoch is plain SGD") {
  Rng data_rng(8);
  const Shard shard = random_shard(2, 30, data_rng);
  BranchedModel plain = small_model(2, 1);
  std::vector<FlClient> clients = {{1, plain, shard.inputs, shard.labels, Rng(77)}};
  Rng plain_rng(77);
  std::vector<double> server = plain.parameters();
  inl::MessageLog log;
  inl::Channel channel(log, 32);
  FlOptions options;
  options.batch_size = 7;
  options.learning_rate = 0.1;
  for (int round = 1; round <= 3; ++round) {
    server = fl_round(clients, server, options, channel, round).params;
    train_epoch(plain, shard.inputs, shard.labels, 7, 0.1, plain_rng);
  }
  CHECK(server == plain.parameters());
}

TEST_CASE("FL rounds meter 2 N J s bits") {
  Rng rng(2);
  const BranchedModel model = small_model(2, 3);
  std::vector<FlClient> clients;
  for (int id = 1; id <= 4; ++id) {
    const Shard s = random_shard(2, 10, rng);
    clients.push_back({id, model, s.inputs, s.labels, Rng(static_cast<std::uint64_t>(id))});
  }
  inl::MessageLog log;
  inl::Channel channel(log, 32);
  const FlRoundResult r = fl_round(clients, model.parameters(), FlOptions{}, channel, 1);
  const double n = static_cast<double>(model.parameter_count());
  CHECK(static_cast<double>(r.bits) == cost::fl_bits({0, 0, 4, n, 32, 0}));
  CHECK(static_cast<double>(r.bits) == 2.0 * n * 4 * 32);

  BranchedModel other = small_model(1, 3);
  clients.push_back({5, other, {}, {}, Rng(5)});
  CHECK_THROWS_AS(fl_round(clients, model.parameters(), FlOptions{}, channel, 2), ValidationError);
}

TEST_CASE("the published VGG16 FL cell") {
  const double bits = cost::fl_bits({0, 0, 500, 138'344'128, 32, 0});
  CHECK(bits == doctest::Approx(4.427e12).epsilon(1e-4));
}

TEST_CASE("SL epochs meter activations, errors and handoffs") {
  Rng rng(6);
  BranchedModel model = small_model(3, 9);
  std::vector<SlClient> clients;
  std::vector<std::vector<int>> labels;
  std::size_t total = 0;
  for (int id = 1; id <= 3; ++id) {
    const Shard s = random_shard(3, 11, rng);
    clients.push_back({id, s.inputs});
    labels.push_back(s.labels);
    total += s.labels.size();
  }
  inl::MessageLog log;
  inl::Channel channel(log, 32);
  const SlEpochResult r = sl_epoch(clients, labels, model, 4, 0.05, rng, channel, 1);
  const double p = static_cast<double>(model.cut_width());
  const double n = static_cast<double>(model.parameter_count());
  const double eta = static_cast<double>(model.client_parameter_count()) / n;
  const cost::CostModel cm{p, static_cast<double>(total), 3, n, 32, eta};
  CHECK(static_cast<double>(r.bits) == doctest::Approx(cost::sl_bits(cm)).epsilon(1e-12));

  // no handoff weight: pure activation traffic
  CHECK(cost::sl_bits({p, static_cast<double>(total), 3, n, 32, 0.0}) ==
        2.0 * p * static_cast<double>(total) * 32.0);

  const std::vector<SlClient> none;
  CHECK_THROWS_AS(sl_epoch(none, {}, model, 4, 0.05, rng, channel, 2), ValidationError);
}

TEST_CASE("a single SL client is plain split training") {
  Rng data_rng(10);
  const Shard s = random_shard(2, 25, data_rng);
  BranchedModel split = small_model(2, 4);
  BranchedModel direct = small_model(2, 4);
  const std::vector<SlClient> clients = {{1, s.inputs}};
  const std::vector<std::vector<int>> labels = {s.labels};
  inl::MessageLog log;
  inl::Channel channel(log, 32);
  Rng ra(3), rb(3);
  for (int e = 1; e <= 2; ++e) {
    sl_epoch(clients, labels, split, 6, 0.1, ra, channel, e);
    train_epoch(direct, s.inputs, s.labels, 6, 0.1, rb);
  }
  CHECK(split.parameters() == direct.parameters());
}

TEST_CASE("branched model shape checks") {
  Rng rng(1);
  std::vector<nn::Network> branches = {
      nn::Network::build(3, std::vector<nn::LayerSpec>{{2, nn::Activation::ReLU}}, rng)};
  const nn::Network head =
      nn::Network::build(3, std::vector<nn::LayerSpec>{{2, nn::Activation::Softmax}}, rng);
  CHECK_THROWS_AS(BranchedModel(branches, head), ValidationError);
  BranchedModel m = small_model(2, 2);
  CHECK(m.cut_width() == 4);
  std::vector<double> p = m.parameters();
  std::transform(p.begin(), p.end(), p.begin(), [](double v) { return v * 0.5; });
  m.assign(p);
  CHECK(m.parameters() == p);
}
