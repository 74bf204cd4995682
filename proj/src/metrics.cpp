#include "pt2i/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pt2i/errors.hpp"
#include "pt2i/simulator.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace {

double neg_log(double q) { return -std::log(std::max(q, kProbabilityFloor)); }

}  // namespace

bool is_known_metric(const std::string& id) {
  return id == kMetricNll || id == kMetricT2t || id == kMetricI2i || id == kMetricVqa;
}

double nll(const BeliefGraph& belief, const GroundTruthState& gt, std::vector<std::string>* unmatched) {
  auto miss = [&](const std::string& what) {
    if (unmatched) unmatched->push_back(what);
  };
  double total = 0.0;
  for (const auto& ge : gt.entities) {
    const Entity* be = belief.find_entity(ge.name);
    if (!be) {
      // An entity the belief never heard of is one it implicitly expects to
      // be absent, which is only wrong when the entity exists.
      if (ge.exists) {
        miss(ge.name);
        total += neg_log(0.0);
        for (const auto& ga : ge.attributes) {
          miss(ge.name + "." + ga.name);
          total += neg_log(0.0);
        }
      }
      continue;
    }
    const double p = be->prob_appearing.value();
    total += neg_log(ge.exists ? p : 1.0 - p);
    if (!ge.exists) continue;
    for (const auto& ga : ge.attributes) {
      const Attribute* ba = be->find_attribute(ga.name);
      if (!ba) miss(ge.name + "." + ga.name);
      total += neg_log(ba ? ba->distribution.probability_of(ga.value) : 0.0);
    }
  }
  for (const auto& gr : gt.relations) {
    auto endpoint_absent = [&](const std::string& name) {
      for (const auto& ge : gt.entities)
        if (same_name(ge.name, name)) return !ge.exists;
      return false;
    };
    if (endpoint_absent(gr.entity_1) || endpoint_absent(gr.entity_2)) continue;
    const Relation* br = belief.find_relation(gr.name);
    if (!br) br = belief.find_relation_between(gr.entity_1, gr.entity_2);
    if (!br) miss(gr.name);
    total += neg_log(br ? br->spatial_distribution.probability_of(gr.spatial_value) : 0.0);
  }
  return total;
}

double t2t_similarity(TextEmbedder& embedder, const std::string& a, const std::string& b) {
  if (trim(a).empty() || trim(b).empty()) throw PreconditionError("t2t_similarity needs two non-empty texts");
  return cosine(embedder.embed(a), embedder.embed(b));
}

std::vector<std::string> rank_images(const ImageScores& scores) {
  if (scores.empty()) throw EmptyInputError("no images to rank");
  const std::size_t n = scores.front().second.size();
  std::vector<std::pair<double, std::string>> means;
  for (const auto& [id, s] : scores) {
    if (s.size() != n) throw PreconditionError("score lists differ in length");
    const double mean = s.empty() ? 0.0 : std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    means.emplace_back(mean, id);
  }
  std::sort(means.begin(), means.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<std::string> out;
  for (auto& m : means) out.push_back(std::move(m.second));
  return out;
}

std::string select_best_image(const ImageScores& scores) { return rank_images(scores).front(); }

MetricSeries metric_series(const Transcript& transcript) {
  MetricSeries out;
  out.flags = transcript.flags;
  for (const auto& id : transcript.config.metric_set) {
    for (const auto& turn : transcript.turns) {
      auto it = turn.metrics.find(id);
      if (it != turn.metrics.end()) out.values.push_back({id, it->second, turn.turn});
    }
  }
  return out;
}

}  // namespace pt2i
