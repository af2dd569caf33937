#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "innet/tensor.hpp"

namespace innet::data {

struct LabelledSamples {
  Tensor features;  // [q, d]
  std::vector<int> labels;
};

// K unit-variance Gaussian blobs in d dimensions. Centroid k sits at
// separation / sqrt(2) along axis k, so every pair of centroids is
// `separation` apart. Labels are balanced (counts differ by at most one) and
// shuffled. Requires 2 <= K <= d.
LabelledSamples synth_gaussian_classes(std::size_t q, std::size_t d, int classes,
                                       double separation, std::uint64_t seed);

// Per-feature standardization to zero mean and unit (population) variance.
// Constant features are only centred.
Tensor standardize(const Tensor& x);

// One latent labelled sample seen through J noisy views.
struct MultiViewDataset {
  Tensor base;  // normalized features [q, d]
  std::vector<int> labels;
  std::vector<Tensor> views;  // views[j] = base + N(0, sigmas[j]^2)
  std::vector<double> sigmas;
  std::uint64_t seed = 0;
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return base.cols(); }
  std::size_t view_count() const noexcept { return views.size(); }
};

// Normalizes base, then adds i.i.d. Gaussian noise of std dev sigmas[j] to
// form view j. View j draws from its own seeded stream.
MultiViewDataset make_views(const Tensor& base, std::vector<int> labels,
                            std::vector<double> sigmas, std::uint64_t seed, int classes);

inline const std::vector<double>& default_sigmas() {
  static const std::vector<double> sigmas = {0.4, 1.0, 2.0, 3.0, 4.0};
  return sigmas;
}

// Rows of a dataset, keeping view alignment.
MultiViewDataset select_rows(const MultiViewDataset& ds, std::span<const std::size_t> rows);

// First round((1 - test_fraction) * q) rows for training, the rest for test.
struct TrainTestSplit {
  MultiViewDataset train;
  MultiViewDataset test;
};
TrainTestSplit split_train_test(const MultiViewDataset& ds, double test_fraction);

enum class Scheme { INL, FL_Exp1, SL_Exp1, Shared_Exp2 };
std::string_view to_string(Scheme scheme);

// One node's or client's share. views holds the inputs that participant
// observes: one view (INL, Shared_Exp2) or all J views of its own samples
// (FL_Exp1, SL_Exp1). Labels stay with whoever holds them and are looked up
// by index.
struct Shard {
  std::vector<std::size_t> indices;
  std::vector<Tensor> views;
};

struct Partition {
  Scheme scheme;
  std::vector<Shard> shards;
  std::size_t dropped = 0;  // remainder rows not assigned (Exp1 schemes)
};

Partition partition(const MultiViewDataset& ds, Scheme scheme);

std::vector<int> labels_at(const MultiViewDataset& ds, std::span<const std::size_t> indices);

// Per-feature arithmetic mean of the J views.
Tensor mean_view(const MultiViewDataset& ds);

// Binary export:
//   "INNETDS1", u32 q, u32 d, u32 K, u32 J, f64 sigmas[J], u64 seed,
//   i32 labels[q], f64 base[q*d], f64 views[J][q*d]   (little-endian)
void write_dataset(std::ostream& out, const MultiViewDataset& ds);
MultiViewDataset read_dataset(std::istream& in);

// FNV-1a over labels, base and views; identifies a test set across runs.
std::uint64_t dataset_hash(const MultiViewDataset& ds);

}  // namespace innet::data
