#include "pdlab/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "pdlab/parallel.hpp"

namespace pdlab {
namespace {

void check_inputs(const Tensor& sim, std::span<const int> query_ids,
                  std::span<const int> gallery_ids) {
  if (sim.rank() != 2) throw MetricsError("similarity matrix must be rank-2");
  if (sim.rows() != static_cast<Index>(query_ids.size()))
    throw MetricsError("query id count does not match similarity rows");
  if (sim.cols() != static_cast<Index>(gallery_ids.size()))
    throw MetricsError("gallery id count does not match similarity columns");
  if (query_ids.empty()) throw MetricsError("no queries to evaluate");
  if (gallery_ids.empty()) throw MetricsError("empty gallery");
}

// Number of relevant items seen in order[q]; throws if a query has none.
Index relevant_count(const Ranking& ranking, Index q) {
  Index r = 0;
  for (char h : ranking.hit[q]) r += h ? 1 : 0;
  return r;
}

}  // namespace

Ranking rank_gallery(const Tensor& sim, std::span<const int> query_ids,
                     std::span<const int> gallery_ids) {
  check_inputs(sim, query_ids, gallery_ids);
  const Index q_count = sim.rows();
  const Index g_count = sim.cols();
  ConstMapRM s(sim.array().data(), q_count, g_count);

  Ranking ranking;
  ranking.order.assign(q_count, {});
  ranking.hit.assign(q_count, {});
  std::vector<std::string> errors(q_count);
  parallel_for(q_count, [&](long long q) {
    std::vector<int> order(g_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return s(q, a) > s(q, b); });
    std::vector<char> hit(g_count);
    Index rel = 0;
    for (Index r = 0; r < g_count; ++r) {
      hit[r] = gallery_ids[order[r]] == query_ids[q] ? 1 : 0;
      rel += hit[r];
    }
    if (rel == 0) {
      errors[q] = "query " + std::to_string(q) + " (id " + std::to_string(query_ids[q]) +
                  ") has no relevant gallery item";
      return;
    }
    ranking.order[q] = std::move(order);
    ranking.hit[q] = std::move(hit);
  });
  for (const auto& e : errors)
    if (!e.empty()) throw MetricsError(e);
  return ranking;
}

double cmc_at_k(const Ranking& ranking, int k) {
  if (k < 1) throw MetricsError("cmc rank cutoff must be >= 1");
  const Index q_count = ranking.num_queries();
  if (q_count == 0) throw MetricsError("no queries to evaluate");
  const Index limit = std::min<Index>(k, ranking.num_gallery());
  Index matched = 0;
  for (Index q = 0; q < q_count; ++q) {
    for (Index r = 0; r < limit; ++r)
      if (ranking.hit[q][r]) {
        ++matched;
        break;
      }
  }
  return 100.0 * static_cast<double>(matched) / static_cast<double>(q_count);
}

double mean_ap(const Ranking& ranking) {
  const Index q_count = ranking.num_queries();
  if (q_count == 0) throw MetricsError("no queries to evaluate");
  double total = 0;
  for (Index q = 0; q < q_count; ++q) {
    const Index rel = relevant_count(ranking, q);
    double ap = 0;
    Index hits = 0;
    for (Index r = 0; r < ranking.num_gallery(); ++r) {
      if (!ranking.hit[q][r]) continue;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    total += ap / static_cast<double>(rel);
  }
  return 100.0 * total / static_cast<double>(q_count);
}

double m_inp(const Ranking& ranking) {
  const Index q_count = ranking.num_queries();
  if (q_count == 0) throw MetricsError("no queries to evaluate");
  double total = 0;
  for (Index q = 0; q < q_count; ++q) {
    const Index rel = relevant_count(ranking, q);
    Index hardest = 0;
    for (Index r = 0; r < ranking.num_gallery(); ++r)
      if (ranking.hit[q][r]) hardest = r + 1;
    total += static_cast<double>(rel) / static_cast<double>(hardest);
  }
  return 100.0 * total / static_cast<double>(q_count);
}

MetricsReport evaluate_features(const Tensor& text_feats, std::span<const int> text_ids,
                                const Tensor& image_feats, std::span<const int> image_ids) {
  if (text_feats.rank() != 2 || image_feats.rank() != 2)
    throw MetricsError("features must be rank-2");
  if (text_feats.cols() != image_feats.cols())
    throw MetricsError("text and image features differ in width");
  ConstMapRM t(text_feats.array().data(), text_feats.rows(), text_feats.cols());
  ConstMapRM v(image_feats.array().data(), image_feats.rows(), image_feats.cols());
  Tensor sim = Tensor::zeros({text_feats.rows(), image_feats.rows()});
  MapRM(sim.mutable_array().data(), sim.rows(), sim.cols()) = t * v.transpose();

  const Ranking ranking = rank_gallery(sim, text_ids, image_ids);
  MetricsReport report;
  report.rank1 = cmc_at_k(ranking, 1);
  report.rank5 = cmc_at_k(ranking, 5);
  report.rank10 = cmc_at_k(ranking, 10);
  report.mAP = mean_ap(ranking);
  report.mINP = m_inp(ranking);
  report.num_queries = ranking.num_queries();
  report.num_gallery = ranking.num_gallery();
  return report;
}

void dump_rankings_csv(const std::string& path, const Tensor& sim,
                       std::span<const int> query_ids, std::span<const int> gallery_ids) {
  const Ranking ranking = rank_gallery(sim, query_ids, gallery_ids);
  ConstMapRM s(sim.array().data(), sim.rows(), sim.cols());
  std::ofstream out(path);
  if (!out) throw MetricsError("cannot write " + path);
  out << "query,query_id,rank,gallery_index,gallery_id,similarity,relevant\n";
  out.precision(17);
  for (Index q = 0; q < ranking.num_queries(); ++q)
    for (Index r = 0; r < ranking.num_gallery(); ++r) {
      const int g = ranking.order[q][r];
      out << q << ',' << query_ids[q] << ',' << (r + 1) << ',' << g << ',' << gallery_ids[g]
          << ',' << s(q, g) << ',' << int(ranking.hit[q][r]) << '\n';
    }
}

}  // namespace pdlab
