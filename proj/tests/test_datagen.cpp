#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "innet/datagen.hpp"
#include "innet/errors.hpp"

using namespace innet;
using namespace innet::data;

namespace {

// Multinomial logistic regression by full-batch gradient descent; returns
// held-out accuracy on the last quarter of the rows.
double logistic_accuracy(const LabelledSamples& s, int classes) {
  const std::size_t q = s.labels.size(), d = s.features.cols();
  const std::size_t train = q * 3 / 4;
  const auto k = static_cast<std::size_t>(classes);
  std::vector<double> w(k * (d + 1), 0.0);
  auto scores = [&](std::size_t n, std::vector<double>& p) {
    double mx = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double z = w[c * (d + 1) + d];
      for (std::size_t i = 0; i < d; ++i) z += w[c * (d + 1) + i] * s.features(n, i);
      p[c] = z;
      mx = std::max(mx, z);
    }
    double total = 0.0;
    for (double& v : p) total += (v = std::exp(v - mx));
    for (double& v : p) v /= total;
  };
  std::vector<double> p(k);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t n = 0; n < train; ++n) {
      scores(n, p);
      for (std::size_t c = 0; c < k; ++c) {
        const double e = p[c] - (static_cast<int>(c) == s.labels[n] ? 1.0 : 0.0);
        for (std::size_t i = 0; i < d; ++i) g[c * (d + 1) + i] += e * s.features(n, i);
        g[c * (d + 1) + d] += e;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * g[i] / static_cast<double>(train);
  }
  std::size_t hits = 0;
  for (std::size_t n = train; n < q; ++n) {
    scores(n, p);
    const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    hits += best == s.labels[n] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(q - train);
}

MultiViewDataset small_dataset(std::size_t q, std::vector<double> sigmas, std::uint64_t seed) {
  LabelledSamples s = synth_gaussian_classes(q, 4, 3, 2.0, seed);
  return make_views(s.features, std::move(s.labels), std::move(sigmas), seed + 1, 3);
}

}  // namespace

TEST_CASE("zero noise copies the normalized base") {
  const MultiViewDataset ds = small_dataset(50, {0.0, 1.0}, 3);
  CHECK(ds.views[0] == ds.base);
  CHECK_FALSE(ds.views[1] == ds.base);
  CHECK(data::default_sigmas() == std::vector<double>{0.4, 1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("base is normalized before the noise is added") {
  const MultiViewDataset ds = small_dataset(400, {0.5}, 9);
  for (std::size_t i = 0; i < ds.width(); ++i) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < ds.size(); ++n) mean += ds.base(n, i);
    mean /= static_cast<double>(ds.size());
    for (std::size_t n = 0; n < ds.size(); ++n) sq += (ds.base(n, i) - mean) * (ds.base(n, i) - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(sq / static_cast<double>(ds.size()) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("noise variance matches sigma squared") {
  const std::vector<double> sigmas = {0.4, 1.0, 2.0, 3.0, 4.0};
  LabelledSamples s = synth_gaussian_classes(10000, 16, 4, 4.0, 1);
  const MultiViewDataset ds = make_views(s.features, s.labels, sigmas, 2, 4);
  for (std::size_t j = 0; j < sigmas.size(); ++j) {
    double sum = 0.0, sq = 0.0;
    const std::size_t n = ds.views[j].size();
    for (std::size_t k = 0; k < n; ++k) {
      const double e = ds.views[j][k] - ds.base[k];
      sum += e;
      sq += e * e;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    CHECK(var == doctest::Approx(sigmas[j] * sigmas[j]).epsilon(0.05));
  }
}

TEST_CASE("labels are balanced") {
  for (std::size_t q : {40, 41, 103}) {
    const LabelledSamples s = synth_gaussian_classes(q, 5, 4, 1.0, 2);
    std::vector<std::size_t> counts(4, 0);
    for (int y : s.labels) ++counts.at(static_cast<std::size_t>(y));
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);
  }
  CHECK_THROWS_AS(synth_gaussian_classes(10, 2, 3, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(synth_gaussian_classes(10, 2, 1, 1.0, 1), ValidationError);
}

TEST_CASE("separation controls learnability") {
  const LabelledSamples none = synth_gaussian_classes(2000, 8, 4, 0.0, 11);
  CHECK(std::abs(logistic_accuracy(none, 4) - 0.25) <= 0.05);
  const LabelledSamples far = synth_gaussian_classes(2000, 8, 4, 10.0, 11);
  CHECK(logistic_accuracy(far, 4) >= 0.99);
}

TEST_CASE("INL partition gives each node its own view of every sample") {
  const MultiViewDataset ds = small_dataset(4, {0.5, 1.5}, 1);
  const Partition p = partition(ds, Scheme::INL);
  REQUIRE(p.shards.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(p.shards[j].indices == std::vector<std::size_t>{0, 1, 2, 3});
    REQUIRE(p.shards[j].views.size() == 1);
    CHECK(p.shards[j].views[0] == ds.views[j]);
  }
  CHECK(p.dropped == 0);
}

TEST_CASE("Exp1 partitions are disjoint and carry all views") {
  const MultiViewDataset ds = small_dataset(4, {0.5, 1.5}, 1);
  for (Scheme scheme : {Scheme::FL_Exp1, Scheme::SL_Exp1}) {
    const Partition p = partition(ds, scheme);
    REQUIRE(p.shards.size() == 2);
    std::set<std::size_t> seen;
    for (const Shard& s : p.shards) {
      CHECK(s.indices.size() == 2);
      REQUIRE(s.views.size() == 2);
      for (std::size_t r = 0; r < s.indices.size(); ++r) {
        CHECK(seen.insert(s.indices[r]).second);
        for (std::size_t j = 0; j < 2; ++j) {
          for (std::size_t c = 0; c < ds.width(); ++c) {
            CHECK(s.views[j](r, c) == ds.views[j](s.indices[r], c));
          }
        }
      }
    }
    CHECK(seen == std::set<std::size_t>{0, 1, 2, 3});
  }

  const MultiViewDataset odd = small_dataset(11, {0.5, 1.0, 2.0}, 4);
  const Partition p = partition(odd, Scheme::FL_Exp1);
  CHECK(p.dropped == 2);
  for (const Shard& s : p.shards) CHECK(s.indices.size() == 3);
}

TEST_CASE("shared partition and label alignment") {
  const MultiViewDataset ds = small_dataset(9, {0.5, 1.0, 2.0}, 4);
  const Partition p = partition(ds, Scheme::Shared_Exp2);
  REQUIRE(p.shards.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(p.shards[j].indices.size() == 9);
    CHECK(p.shards[j].views[0] == ds.views[j]);
  }
  const std::vector<std::size_t> rows = {8, 0, 3};
  const std::vector<int> y = labels_at(ds, rows);
  CHECK(y == std::vector<int>{ds.labels[8], ds.labels[0], ds.labels[3]});
  const MultiViewDataset sub = select_rows(ds, rows);
  CHECK(sub.labels == y);
  CHECK(sub.views[2](0, 1) == ds.views[2](8, 1));

  const Tensor mean = mean_view(ds);
  CHECK(mean(4, 2) == doctest::Approx((ds.views[0](4, 2) + ds.views[1](4, 2) + ds.views[2](4, 2)) / 3.0));
}

TEST_CASE("train and test split") {
  const MultiViewDataset ds = small_dataset(10, {1.0}, 2);
  const TrainTestSplit split = split_train_test(ds, 0.2);
  CHECK(split.train.size() == 8);
  CHECK(split.test.size() == 2);
  CHECK(split.test.labels[1] == ds.labels[9]);
  CHECK_THROWS_AS(split_train_test(ds, 1.0), ValidationError);
}

TEST_CASE("export round trip and hash") {
  const MultiViewDataset ds = small_dataset(30, {0.4, 2.0}, 6);
  std::stringstream buf;
  write_dataset(buf, ds);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == "INNETDS1");
  // header + sigmas + seed + labels + base + views
  CHECK(bytes.size() == 8 + 16 + 16 + 8 + 4 * 30 + 8 * 120 * 3);
  std::stringstream in(bytes);
  const MultiViewDataset back = read_dataset(in);
  CHECK(back.labels == ds.labels);
  CHECK(back.base == ds.base);
  CHECK(back.views == ds.views);
  CHECK(back.sigmas == ds.sigmas);
  CHECK(back.seed == ds.seed);
  CHECK(dataset_hash(back) == dataset_hash(ds));

  MultiViewDataset moved = ds;
  moved.views[1][7] += 1e-12;
  CHECK(dataset_hash(moved) != dataset_hash(ds));

  std::stringstream truncated(bytes.substr(0, 100));
  CHECK_THROWS(read_dataset(truncated));
}

TEST_CASE("identical seeds give identical datasets") {
  const MultiViewDataset a = small_dataset(50, {0.4, 1.0, 2.0}, 12);
  const MultiViewDataset b = small_dataset(50, {0.4, 1.0, 2.0}, 12);
  CHECK(a.views == b.views);
  CHECK(a.labels == b.labels);
  CHECK(partition(a, Scheme::FL_Exp1).shards[1].indices ==
        partition(b, Scheme::FL_Exp1).shards[1].indices);
  const MultiViewDataset c = small_dataset(50, {0.4, 1.0, 2.0}, 13);
  CHECK_FALSE(a.views == c.views);
}
