#include "innet/datagen.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "innet/errors.hpp"
#include "innet/rng.hpp"

namespace innet::data {

LabelledSamples synth_gaussian_classes(std::size_t q, std::size_t d, int classes,
                                       double separation, std::uint64_t seed) {
  if (classes < 2) throw ValidationError("at least two classes are required");
  if (static_cast<std::size_t>(classes) > d) {
    throw ValidationError("class count may not exceed the feature width");
  }
  if (separation < 0.0) throw ValidationError("separation must be non-negative");

  Rng rng(seed);
  LabelledSamples out{Tensor({q, d}), std::vector<int>(q)};
  for (std::size_t i = 0; i < q; ++i) out.labels[i] = static_cast<int>(i % classes);
  rng.shuffle(out.labels);

  const double offset = separation / std::sqrt(2.0);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double centre = static_cast<int>(k) == out.labels[i] ? offset : 0.0;
      out.features(i, k) = centre + rng.normal();
    }
  }
  return out;
}

Tensor standardize(const Tensor& x) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < cols; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += x(i, k);
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) var += (x(i, k) - mean) * (x(i, k) - mean);
    var /= static_cast<double>(rows);
    const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < rows; ++i) out(i, k) = (x(i, k) - mean) * scale;
  }
  return out;
}

MultiViewDataset make_views(const Tensor& base, std::vector<int> labels,
                            std::vector<double> sigmas, std::uint64_t seed, int classes) {
  if (labels.size() != base.rows()) throw ValidationError("labels not aligned with base");
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ValidationError("noise std dev must be non-negative");
  }
  MultiViewDataset ds;
  ds.base = standardize(base);
  ds.labels = std::move(labels);
  ds.sigmas = std::move(sigmas);
  ds.seed = seed;
  ds.classes = classes;
  for (std::size_t j = 0; j < ds.sigmas.size(); ++j) {
    Tensor view = ds.base;
    if (ds.sigmas[j] > 0.0) {
      Rng rng(derive_seed(seed, j));
      for (double& v : view.data()) v += ds.sigmas[j] * rng.normal();
    }
    ds.views.push_back(std::move(view));
  }
  return ds;
}

MultiViewDataset select_rows(const MultiViewDataset& ds, std::span<const std::size_t> rows) {
  MultiViewDataset out;
  out.base = gather_rows(ds.base, rows);
  out.labels = labels_at(ds, rows);
  for (const Tensor& v : ds.views) out.views.push_back(gather_rows(v, rows));
  out.sigmas = ds.sigmas;
  out.seed = ds.seed;
  out.classes = ds.classes;
  return out;
}

TrainTestSplit split_train_test(const MultiViewDataset& ds, double test_fraction) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ValidationError("test fraction must lie in (0, 1)");
  }
  const auto train_rows = static_cast<std::size_t>(
      std::llround((1.0 - test_fraction) * static_cast<double>(ds.size())));
  std::vector<std::size_t> train(train_rows), test(ds.size() - train_rows);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(test.begin(), test.end(), train_rows);
  return {select_rows(ds, train), select_rows(ds, test)};
}

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::INL: return "inl";
    case Scheme::FL_Exp1: return "fl_exp1";
    case Scheme::SL_Exp1: return "sl_exp1";
    case Scheme::Shared_Exp2: return "shared_exp2";
  }
  return "unknown";
}

Partition partition(const MultiViewDataset& ds, Scheme scheme) {
  const std::size_t nodes = ds.view_count();
  if (nodes == 0) throw ValidationError("dataset has no views");
  Partition out{scheme, {}, 0};
  const std::size_t q = ds.size();

  if (scheme == Scheme::INL || scheme == Scheme::Shared_Exp2) {
    std::vector<std::size_t> all(q);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t j = 0; j < nodes; ++j) out.shards.push_back({all, {ds.views[j]}});
    return out;
  }

  // Exp1 layouts: disjoint contiguous blocks of q / J samples, all views each.
  const std::size_t per = q / nodes;
  if (per == 0) throw ValidationError("fewer samples than clients");
  out.dropped = q - per * nodes;
  for (std::size_t j = 0; j < nodes; ++j) {
    std::vector<std::size_t> idx(per);
    std::iota(idx.begin(), idx.end(), j * per);
    Shard shard{idx, {}};
    for (const Tensor& v : ds.views) shard.views.push_back(gather_rows(v, idx));
    out.shards.push_back(std::move(shard));
  }
  return out;
}

std::vector<int> labels_at(const MultiViewDataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(ds.labels.at(i));
  return out;
}

Tensor mean_view(const MultiViewDataset& ds) {
  if (ds.views.empty()) throw ValidationError("dataset has no views");
  Tensor out(ds.views.front().shape());
  for (const Tensor& v : ds.views) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
  }
  const double inv = 1.0 / static_cast<double>(ds.views.size());
  for (double& v : out.data()) v *= inv;
  return out;
}

namespace {

constexpr char kMagic[] = "INNETDS1";
constexpr std::size_t kMagicLength = sizeof(kMagic) - 1;

void put_le(std::ostream& out, std::uint64_t v, int width) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < width; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), width);
}

std::uint64_t get_le(std::istream& in, int width) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), width);
  if (in.gcount() != width) throw ValidationError("dataset file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& out, std::span<const double> values) {
  for (double d : values) put_le(out, std::bit_cast<std::uint64_t>(d), 8);
}

void get_f64s(std::istream& in, std::span<double> values) {
  for (double& d : values) d = std::bit_cast<double>(get_le(in, 8));
}

}  // namespace

void write_dataset(std::ostream& out, const MultiViewDataset& ds) {
  out.write(kMagic, kMagicLength);
  put_le(out, ds.size(), 4);
  put_le(out, ds.width(), 4);
  put_le(out, static_cast<std::uint64_t>(ds.classes), 4);
  put_le(out, ds.view_count(), 4);
  put_f64s(out, ds.sigmas);
  put_le(out, ds.seed, 8);
  for (int y : ds.labels) put_le(out, static_cast<std::uint32_t>(y), 4);
  put_f64s(out, ds.base.data());
  for (const Tensor& v : ds.views) put_f64s(out, v.data());
}

MultiViewDataset read_dataset(std::istream& in) {
  std::array<char, kMagicLength> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) ||
      std::memcmp(magic.data(), kMagic, kMagicLength) != 0) {
    throw ValidationError("not an INNETDS1 dataset");
  }
  MultiViewDataset ds;
  const auto q = static_cast<std::size_t>(get_le(in, 4));
  const auto d = static_cast<std::size_t>(get_le(in, 4));
  ds.classes = static_cast<int>(get_le(in, 4));
  const auto nodes = static_cast<std::size_t>(get_le(in, 4));
  ds.sigmas.resize(nodes);
  get_f64s(in, ds.sigmas);
  ds.seed = get_le(in, 8);
  ds.labels.resize(q);
  for (int& y : ds.labels) y = static_cast<int>(static_cast<std::int32_t>(get_le(in, 4)));
  ds.base = Tensor({q, d});
  get_f64s(in, ds.base.data());
  for (std::size_t j = 0; j < nodes; ++j) {
    Tensor v({q, d});
    get_f64s(in, v.data());
    ds.views.push_back(std::move(v));
  }
  return ds;
}

std::uint64_t dataset_hash(const MultiViewDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(ds.size());
  mix(ds.width());
  for (int y : ds.labels) mix(static_cast<std::uint64_t>(y));
  for (double v : ds.base.data()) mix(std::bit_cast<std::uint64_t>(v));
  for (const Tensor& view : ds.views) {
    for (double v : view.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace innet::data
