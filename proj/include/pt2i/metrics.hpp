#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pt2i/backends.hpp"
#include "pt2i/belief_graph.hpp"

namespace pt2i {

// Metric ids used in transcripts and aggregate tables.
inline constexpr const char* kMetricNll = "nll";
inline constexpr const char* kMetricT2t = "t2t_embed";
inline constexpr const char* kMetricI2i = "i2i_ext";
inline constexpr const char* kMetricVqa = "t2i_vqa_ext";

bool is_known_metric(const std::string& id);

/// Probability used for ground-truth facts the belief omits or gives 0.
inline constexpr double kProbabilityFloor = 1e-4;

/// Negative log likelihood of the ground-truth facts under the belief,
/// treating every fact as independent. Names match after trim and
/// case-folding; relations match by name, then by endpoint pair. Attributes
/// and relations of ground-truth entities that do not exist are not scored.
/// Names that found no match are appended to `unmatched` when given.
double nll(const BeliefGraph& belief, const GroundTruthState& gt, std::vector<std::string>* unmatched = nullptr);

double t2t_similarity(TextEmbedder& embedder, const std::string& a, const std::string& b);

using ImageScores = std::vector<std::pair<std::string, std::vector<double>>>;

/// Image ids ordered by mean score, highest first; ties go to the lower id.
/// Throws EmptyInputError on no images and PreconditionError on ragged scores.
std::vector<std::string> rank_images(const ImageScores& scores);
std::string select_best_image(const ImageScores& scores);

struct MetricValue {
  std::string id;
  double value = 0.0;
  int turn = 0;
  bool operator==(const MetricValue&) const = default;
};

struct Transcript;

struct MetricSeries {
  std::vector<MetricValue> values;  // grouped by metric, then turn
  std::vector<std::string> flags;   // e.g. "i2i_ext: no image scorer configured"
};

MetricSeries metric_series(const Transcript& transcript);

}  // namespace pt2i
