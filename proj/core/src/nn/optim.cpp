#include "pairint/nn/optim.hpp"

#include <map>

namespace pairint::nn {

std::vector<double> inverse_frequency_weights(std::span<const int> labels, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error(ErrorCode::InvalidTarget, "label outside class range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> w(counts.size(), 1.0);
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      w[c] = 1.0 / counts[c];
      sum += w[c];
      ++present;
    }
  }
  if (present == 0) return w;
  const double mean = sum / present;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) w[c] /= mean;
  }
  return w;
}

std::vector<std::size_t> weighted_sampler(std::span<const int> labels, Rng& rng, std::size_t n) {
  if (labels.empty()) throw Error(ErrorCode::EmptyDataset, "weighted sampler over an empty label set");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> classes;
  for (const auto& [label, idx] : members) classes.push_back(&idx);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& idx = *classes[uniform_index(rng, classes.size())];
    out.push_back(idx[uniform_index(rng, idx.size())]);
  }
  return out;
}

std::uint64_t count_flops(std::span<const LayerDesc> layers) {
  std::uint64_t total = 0;
  for (const auto& l : layers) {
    const std::uint64_t in = l.in;
    const std::uint64_t out = l.out;
    if (l.kind == "linear") {
      total += 2 * in * out + out;
    } else if (l.kind == "batchnorm" || l.kind == "relu" || l.kind == "silu") {
      total += 4 * out;
    } else if (l.kind == "dropout" || l.kind == "concat") {
      // identity at inference / pure data movement
    } else if (l.kind == "add" || l.kind == "mul") {
      total += out;
    } else if (l.kind == "standardize" || l.kind == "absdiff" || l.kind == "average") {
      total += 2 * out;
    } else if (l.kind == "reweight") {
      total += 3 * out;
    } else {
      throw Error(ErrorCode::UnknownLayer, "no FLOPs rule for layer kind '" + l.kind + "'");
    }
  }
  return total;
}

}  // namespace pairint::nn
