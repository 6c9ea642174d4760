#pragma once

// Graph representation, image -> grid-graph construction, and the
// fixed-size neighbor sampler feeding the GraphSage layers.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uwdet/errors.hpp"
#include "uwdet/image.hpp"
#include "uwdet/rng.hpp"
#include "uwdet/tensor.hpp"

namespace uwdet {

struct GridInfo {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_size = 0;  // pixels per patch side
};

// Undirected graph with per-node features. Immutable once built; neighbor
// lists are sorted ascending, self-loop free, and symmetric.
struct FeatureGraph {
  std::size_t num_nodes = 0;
  Tensor features;                                  // N x F
  std::vector<std::vector<std::size_t>> neighbors;  // sorted per node
  std::optional<GridInfo> grid;
  Tensor labels;       // optional N x C of 0/1 class indicators
  Tensor intensities;  // N, per-node mean intensity

  bool has_labels() const { return labels.defined(); }

  std::size_t feature_dim() const { return features.dim(1); }

  std::size_t max_degree() const {
    std::size_t d = 0;
    for (const auto& ns : neighbors) d = std::max(d, ns.size());
    return d;
  }

  // Checked on every built graph: symmetry, no self-loops, indices in range.
  void validate() const {
    if (neighbors.size() != num_nodes) throw ContractError("FeatureGraph: neighbor list count");
    if (features.defined() && features.dim(0) != num_nodes) {
      throw ContractError("FeatureGraph: feature row count");
    }
    for (std::size_t v = 0; v < num_nodes; ++v) {
      for (std::size_t u : neighbors[v]) {
        if (u >= num_nodes) throw ContractError("FeatureGraph: neighbor index out of range");
        if (u == v) throw ContractError("FeatureGraph: self-loop");
        const auto& back = neighbors[u];
        if (!std::binary_search(back.begin(), back.end(), v)) {
          throw ContractError("FeatureGraph: adjacency not symmetric");
        }
      }
      if (!std::is_sorted(neighbors[v].begin(), neighbors[v].end())) {
        throw ContractError("FeatureGraph: neighbor list not sorted");
      }
    }
    if (grid && grid->rows * grid->cols != num_nodes) {
      throw ContractError("FeatureGraph: grid does not match node count");
    }
    if (labels.defined()) {
      for (double v : labels.value()) {
        if (v != 0.0 && v != 1.0) throw ContractError("FeatureGraph: labels must be 0/1");
      }
    }
  }
};

// Sorted 4-neighborhood lists for a rows x cols grid, row-major node order.
inline std::vector<std::vector<std::size_t>> grid_adjacency(std::size_t rows, std::size_t cols) {
  std::vector<std::vector<std::size_t>> adj(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto& ns = adj[r * cols + c];
      if (r > 0) ns.push_back((r - 1) * cols + c);
      if (c > 0) ns.push_back(r * cols + (c - 1));
      if (c + 1 < cols) ns.push_back(r * cols + (c + 1));
      if (r + 1 < rows) ns.push_back((r + 1) * cols + c);
      std::sort(ns.begin(), ns.end());
    }
  }
  return adj;
}

// One node per patch, row-major. Per-node features are
// [mean per channel, std per channel, normalized row, normalized col],
// so F = 2*channels + 2. Std is the population standard deviation.
inline FeatureGraph from_image_grid(const ImageBuffer& img, std::size_t patch_size) {
  if (patch_size == 0) throw InputError("from_image_grid: patch_size must be positive");
  if (img.width % patch_size != 0 || img.height % patch_size != 0) {
    throw InputError("from_image_grid: image " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " not divisible by patch size " +
                     std::to_string(patch_size));
  }
  const std::size_t rows = img.height / patch_size;
  const std::size_t cols = img.width / patch_size;
  const std::size_t n = rows * cols;
  const std::size_t ch = img.channels;
  const std::size_t fdim = 2 * ch + 2;

  std::vector<double> feats(n * fdim, 0.0);
  std::vector<double> inten(n, 0.0);
  const double area = static_cast<double>(patch_size * patch_size);
  for (std::size_t gr = 0; gr < rows; ++gr) {
    for (std::size_t gc = 0; gc < cols; ++gc) {
      const std::size_t v = gr * cols + gc;
      double node_mean = 0.0;
      for (std::size_t k = 0; k < ch; ++k) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t pr = 0; pr < patch_size; ++pr) {
          for (std::size_t pc = 0; pc < patch_size; ++pc) {
            const double p = img.at(gr * patch_size + pr, gc * patch_size + pc, k);
            s += p;
            s2 += p * p;
          }
        }
        const double m = s / area;
        double var = s2 / area - m * m;
        if (var < 0.0) var = 0.0;  // rounding guard
        feats[v * fdim + k] = m;
        feats[v * fdim + ch + k] = std::sqrt(var);
        node_mean += m;
      }
      feats[v * fdim + 2 * ch] = rows > 1 ? static_cast<double>(gr) / (rows - 1) : 0.0;
      feats[v * fdim + 2 * ch + 1] = cols > 1 ? static_cast<double>(gc) / (cols - 1) : 0.0;
      inten[v] = node_mean / static_cast<double>(ch);
    }
  }

  FeatureGraph g;
  g.num_nodes = n;
  g.features = Tensor::from_data({n, fdim}, std::move(feats));
  g.neighbors = grid_adjacency(rows, cols);
  g.grid = GridInfo{rows, cols, patch_size};
  g.intensities = Tensor::from_data({n}, std::move(inten));
  g.validate();
  return g;
}

// Fixed-size neighbor sample for node v.
//   - degree <= k: all neighbors, ascending (no subsampling);
//   - degree > k: k distinct neighbors, uniform without replacement. The
//     draw assigns each neighbor a priority hashed from one stream output
//     and the neighbor id, and keeps the k smallest; the returned order is
//     priority order, which is stable under node relabeling when callers
//     supply explicit per-node substream keys.
//   - isolated node: its own index repeated k times.
inline std::vector<std::size_t> sample_neighbors(const FeatureGraph& g, std::size_t v,
                                                 std::size_t k, RngStream& rng) {
  if (v >= g.num_nodes) {
    throw IndexError("sample_neighbors: node " + std::to_string(v) + " out of range");
  }
  if (k == 0) throw ContractError("sample_neighbors: k must be positive");
  const auto& ns = g.neighbors[v];
  if (ns.empty()) return std::vector<std::size_t>(k, v);
  if (ns.size() <= k) return ns;

  const std::uint64_t draw = rng.next_u64();
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  ranked.reserve(ns.size());
  for (std::size_t u : ranked.empty() ? ns : ns) {
    ranked.emplace_back(mix64(draw ^ mix64(static_cast<std::uint64_t>(u) + kGoldenGamma)), u);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].second);
  return out;
}

}  // namespace uwdet
