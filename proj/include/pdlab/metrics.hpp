#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdlab/tensor.hpp"

namespace pdlab {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-query gallery ordering. order[q] lists gallery indices from best to
// worst similarity (ties broken by ascending gallery index); hit[q][r] flags
// whether the item at rank position r shares the query's id.
struct Ranking {
  std::vector<std::vector<int>> order;
  std::vector<std::vector<char>> hit;
  Index num_queries() const { return static_cast<Index>(order.size()); }
  Index num_gallery() const { return order.empty() ? 0 : static_cast<Index>(order.front().size()); }
};

// sim is queries x gallery. Throws MetricsError when shapes and id lists
// disagree or when some query has no relevant gallery item at all.
Ranking rank_gallery(const Tensor& sim, std::span<const int> query_ids,
                     std::span<const int> gallery_ids);

// All three return percentages in [0, 100].
double cmc_at_k(const Ranking& ranking, int k);
double mean_ap(const Ranking& ranking);
double m_inp(const Ranking& ranking);

struct MetricsReport {
  double rank1 = 0, rank5 = 0, rank10 = 0, mAP = 0, mINP = 0;
  Index num_queries = 0, num_gallery = 0;
  std::string stage;
  long long seed = 0;
  std::string config_hash;
};

// Full text-query / image-gallery evaluation from precomputed unit features.
// Per-query statistics are computed across the PDLAB_THREADS budget and
// reduced in index order, so the report is identical at any thread count.
MetricsReport evaluate_features(const Tensor& text_feats, std::span<const int> text_ids,
                                const Tensor& image_feats, std::span<const int> image_ids);

// CSV with one line per (query, rank) pair: query id, rank position, gallery
// index, gallery id, similarity, relevance flag.
void dump_rankings_csv(const std::string& path, const Tensor& sim,
                       std::span<const int> query_ids, std::span<const int> gallery_ids);

}  // namespace pdlab
