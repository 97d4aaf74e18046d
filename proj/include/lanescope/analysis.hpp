#pragma once

// Aggregations over pattern labels: stable relabeling, occupancy, prototype
// fields, lateral states, region-restricted transition counts, pattern-count
// curves and matched label error against a reference segmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lanescope/bnp.hpp"
#include "lanescope/core.hpp"
#include "lanescope/ingest.hpp"
#include "lanescope/parallel.hpp"
#include "lanescope/segment.hpp"

namespace lanescope {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------- relabel

struct Relabeling {
  LabelSet labels;            // pattern ids 1..K
  std::vector<int> original;  // original[k - 1] = source label of pattern k
};

// Pattern 1 = most frequent source label; ties go to the earlier first occurrence.
inline Relabeling relabel_by_frequency(const LabelSet& labels) {
  struct Stat {
    std::int64_t count = 0;
    std::int64_t first = 0;
  };
  std::unordered_map<int, Stat> stats;
  std::int64_t position = 0;
  for (const auto& seq : labels)
    for (int k : seq) {
      auto [it, fresh] = stats.try_emplace(k, Stat{0, position});
      ++it->second.count;
      ++position;
    }
  if (position == 0) throw EmptyInput("no labels to relabel");
  Relabeling out;
  for (const auto& [k, s] : stats) out.original.push_back(k);
  std::sort(out.original.begin(), out.original.end(), [&](int a, int b) {
    const auto &sa = stats.at(a), &sb = stats.at(b);
    return sa.count != sb.count ? sa.count > sb.count : sa.first < sb.first;
  });
  std::unordered_map<int, int> id;
  for (std::size_t i = 0; i < out.original.size(); ++i) id[out.original[i]] = static_cast<int>(i) + 1;
  out.labels.reserve(labels.size());
  for (const auto& seq : labels) {
    Labels mapped;
    mapped.reserve(seq.size());
    for (int k : seq) mapped.push_back(id.at(k));
    out.labels.push_back(std::move(mapped));
  }
  return out;
}

inline Relabeling relabel_by_frequency(const Labels& labels) { return relabel_by_frequency(LabelSet{labels}); }

// -------------------------------------------------------------- occupancy

inline std::map<int, std::int64_t> occupancy_histogram(const LabelSet& labels) {
  std::map<int, std::int64_t> out;
  for (const auto& seq : labels)
    for (int k : seq) ++out[k];
  if (out.empty()) throw EmptyInput("no labels to count");
  return out;
}

inline std::map<int, std::int64_t> occupancy_histogram(const Labels& labels) {
  return occupancy_histogram(LabelSet{labels});
}

// Bins holding strictly more than `threshold` of all labels.
inline int bins_above(const std::map<int, std::int64_t>& histogram, double threshold = 0.01) {
  std::int64_t total = 0;
  for (const auto& [k, c] : histogram) total += c;
  int n = 0;
  for (const auto& [k, c] : histogram) n += static_cast<double>(c) > threshold * static_cast<double>(total) ? 1 : 0;
  return n;
}

// ------------------------------------------------------------- prototypes

// Elementwise mean field per label; labels without members are absent.
inline std::map<int, FieldTensor> prototype_fields(std::span<const FieldTensor> fields, const Labels& labels) {
  if (fields.size() != labels.size())
    throw LengthMismatch(std::to_string(fields.size()) + " fields but " + std::to_string(labels.size()) + " labels");
  std::map<int, FieldTensor> sums;
  std::map<int, std::int64_t> counts;
  for (std::size_t t = 0; t < fields.size(); ++t) {
    const auto& f = fields[t];
    auto [it, fresh] = sums.try_emplace(labels[t], f.rows(), f.cols());
    auto& acc = it->second;
    if (f.rows() != acc.rows() || f.cols() != acc.cols()) throw ShapeError("fields differ in grid shape");
    for (std::size_t i = 0; i < f.size(); ++i) acc.values()[i] += f.values()[i];
    ++counts[labels[t]];
  }
  for (auto& [k, acc] : sums) {
    const double n = static_cast<double>(counts.at(k));
    for (double& v : acc.values()) v /= n;
    acc.set_frame(0);
  }
  return sums;
}

// -------------------------------------------------------- lateral states

struct LateralState {
  double vy = 0.0;
  double ay = 0.0;
  bool operator==(const LateralState&) const = default;
};

inline std::map<int, std::vector<LateralState>> lateral_state_table(const Labels& labels,
                                                                    std::span<const VehicleState> ego) {
  if (labels.size() != ego.size())
    throw LengthMismatch(std::to_string(labels.size()) + " labels but " + std::to_string(ego.size()) + " ego states");
  std::map<int, std::vector<LateralState>> out;
  for (std::size_t t = 0; t < labels.size(); ++t) out[labels[t]].push_back({ego[t].vy, ego[t].ay});
  return out;
}

// ------------------------------------------------------------ transitions

struct TransitionMatrix {
  CountMatrix counts;            // counts(i, j): pattern i + 1 -> pattern j + 1
  bool include_self = true;
  std::optional<Region> region;  // nullopt = ALL

  std::int64_t total() const { return counts.sum(); }
  int patterns() const { return static_cast<int>(counts.rows()); }
};

inline const char* region_name(const std::optional<Region>& r) { return r ? to_string(*r) : "ALL"; }

inline std::optional<Region> region_filter_from_string(const std::string& s) {
  if (s == "ALL") return std::nullopt;
  return region_from_string(s);
}

// Counts (z_t, z_{t+1}) whose later frame lies in `region`. Labels are pattern
// ids 1..patterns; `tags` may be empty when region is ALL.
inline void add_transitions(TransitionMatrix& m, const Labels& labels, const std::vector<Region>& tags) {
  if (m.region && tags.size() != labels.size())
    throw LengthMismatch(std::to_string(labels.size()) + " labels but " + std::to_string(tags.size()) + " region tags");
  const int L = m.patterns();
  for (std::size_t t = 1; t < labels.size(); ++t) {
    const int a = labels[t - 1], b = labels[t];
    if (a < 1 || a > L || b < 1 || b > L) throw InvalidArgument("pattern id outside 1.." + std::to_string(L));
    if (m.region && tags[t] != *m.region) continue;
    if (!m.include_self && a == b) continue;
    ++m.counts(a - 1, b - 1);
  }
}

inline int max_label(const LabelSet& labels) {
  int L = 0;
  for (const auto& seq : labels)
    for (int k : seq) L = std::max(L, k);
  return L;
}

// `regions` must hold one tag vector per label sequence unless region is ALL.
inline TransitionMatrix transition_counts(const LabelSet& labels, const std::vector<std::vector<Region>>& regions,
                                          std::optional<Region> region, bool include_self, int patterns = 0) {
  if (region && regions.size() != labels.size())
    throw LengthMismatch(std::to_string(labels.size()) + " label sequences but " + std::to_string(regions.size()) +
                         " region sequences");
  TransitionMatrix m;
  m.include_self = include_self;
  m.region = region;
  const int L = patterns > 0 ? patterns : max_label(labels);
  m.counts = CountMatrix::Zero(L, L);
  static const std::vector<Region> none;
  for (std::size_t s = 0; s < labels.size(); ++s) add_transitions(m, labels[s], region ? regions[s] : none);
  return m;
}

inline TransitionMatrix transition_counts(const Labels& labels, const std::vector<Region>& regions,
                                          std::optional<Region> region, bool include_self, int patterns = 0) {
  return transition_counts(LabelSet{labels}, std::vector<std::vector<Region>>{regions}, region, include_self, patterns);
}

// -------------------------------------------------------- matched error

// Fraction of frames whose label disagrees with the reference after the best
// one-to-one matching of label values. Unmatched values count as errors.
inline double matched_label_error(const Labels& reference, const Labels& estimate) {
  if (reference.size() != estimate.size()) throw LengthMismatch("reference and estimate lengths differ");
  if (reference.empty()) throw EmptyInput("no labels to compare");
  std::map<int, int> ra, ea;
  for (int k : reference) ra.try_emplace(k, static_cast<int>(ra.size()));
  for (int k : estimate) ea.try_emplace(k, static_cast<int>(ea.size()));
  int a = static_cast<int>(ra.size()), b = static_cast<int>(ea.size());
  std::vector<std::vector<std::int64_t>> c(static_cast<std::size_t>(a), std::vector<std::int64_t>(static_cast<std::size_t>(b), 0));
  for (std::size_t t = 0; t < reference.size(); ++t) ++c[static_cast<std::size_t>(ra[reference[t]])][static_cast<std::size_t>(ea[estimate[t]])];
  // Mask over the smaller side, iterate over the larger one.
  const bool flip = a > b;
  if (flip) std::swap(a, b);
  auto weight = [&](int small, int large) { return flip ? c[static_cast<std::size_t>(large)][static_cast<std::size_t>(small)] : c[static_cast<std::size_t>(small)][static_cast<std::size_t>(large)]; };
  if (a > 20) throw InvalidArgument("too many distinct labels for exact matching");
  const std::size_t masks = std::size_t{1} << a;
  constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::min();
  std::vector<std::int64_t> best(masks, kNone);
  best[0] = 0;
  for (int j = 0; j < b; ++j) {
    auto next = best;  // large-side value j left unmatched
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (best[mask] == kNone) continue;
      for (int i = 0; i < a; ++i) {
        if (mask & (std::size_t{1} << i)) continue;
        const auto m2 = mask | (std::size_t{1} << i);
        next[m2] = std::max(next[m2], best[mask] + weight(i, j));
      }
    }
    best = std::move(next);
  }
  const auto matched = *std::max_element(best.begin(), best.end());
  return 1.0 - static_cast<double>(matched) / static_cast<double>(reference.size());
}

// ------------------------------------------------------ pattern counts

// First `frames` frames of the concatenated sequences; a trailing partial
// sequence is kept when it has at least two frames; shorter pieces are dropped.
inline std::vector<FeatureSequence> frame_prefix(const std::vector<FeatureSequence>& data, Eigen::Index frames) {
  std::vector<FeatureSequence> out;
  for (const auto& s : data) {
    if (frames <= 0) break;
    const auto take = std::min(frames, s.rows());
    if (take >= 2) out.push_back(s.topRows(take));
    frames -= take;
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw EmptyInput("median of nothing");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct PatternCountPoint {
  double fraction = 0.0;
  std::int64_t frames = 0;
  std::vector<int> counts;  // one per seed, in seed order
  double median = 0.0;
};

// Runs the segment stage on nested frame prefixes and reports the median
// effective state count over seeds per fraction.
inline std::vector<PatternCountPoint> pattern_count_curve(const std::vector<FeatureSequence>& raw,
                                                          const SegmentConfig& cfg, const std::vector<double>& fractions,
                                                          const std::vector<std::uint64_t>& seeds,
                                                          std::size_t workers = worker_count()) {
  if (fractions.empty() || seeds.empty()) throw InvalidArgument("pattern_count_curve needs fractions and seeds");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument("fractions must lie in (0, 1]");
  Eigen::Index total = 0;
  for (const auto& s : raw) total += s.rows();
  std::vector<PatternCountPoint> out(fractions.size());
  std::vector<std::vector<FeatureSequence>> prefixes(fractions.size());
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const auto frames = std::max<Eigen::Index>(2, std::llround(fractions[i] * static_cast<double>(total)));
    prefixes[i] = frame_prefix(raw, frames);
    out[i].fraction = fractions[i];
    out[i].frames = std::min(frames, total);
    out[i].counts.assign(seeds.size(), 0);
  }
  parallel_for(
      fractions.size() * seeds.size(),
      [&](std::size_t job) {
        const auto i = job / seeds.size(), s = job % seeds.size();
        out[i].counts[s] = segment(prefixes[i], cfg, seeds[s]).fit.effective_states;
      },
      workers);
  for (auto& p : out) p.median = median(std::vector<double>(p.counts.begin(), p.counts.end()));
  return out;
}

}  // namespace lanescope
