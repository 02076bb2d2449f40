#pragma once

// Temporal relevance profiles, the quadratic/linear imbalance fits, top-k
// accuracy, and the step/offset sweep drivers.

#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "vxt/network.hpp"
#include "vxt/relevance.hpp"
#include "vxt/sampler.hpp"
#include "vxt/tensor.hpp"

namespace vxt {

class degenerate_profile_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TemporalProfile {
  std::vector<double> relevance;  // R_t, frame-wise totals
  std::vector<double> share;      // P_t = R_t / sum_t R_t
};

// Marginalizes an attribution map onto its time axis (axis 1 of C,T,H,W).
inline TemporalProfile temporal_profile(const AttributionMap& map) {
  if (map.scores.rank() != 4)
    throw std::invalid_argument("temporal_profile: scores must be rank 4 (C,T,H,W)");
  TemporalProfile profile;
  profile.relevance = reduce_over_axes(map.scores, 1);
  double total = 0.0;
  for (double v : profile.relevance) total += v;
  if (!(total > 0.0))
    throw degenerate_profile_error("temporal_profile: total relevance is not positive");
  profile.share.resize(profile.relevance.size());
  for (std::size_t t = 0; t < profile.relevance.size(); ++t)
    profile.share[t] = profile.relevance[t] / total;
  return profile;
}

namespace detail {

inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const std::size_t spawn = std::min(jobs, count);
  workers.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& w : workers) w.join();
}

}  // namespace detail

// Element-wise mean of the share vectors, accumulated in list order with
// pairwise summation so the result is independent of worker scheduling.
inline std::vector<double> mean_profile(std::span<const TemporalProfile> profiles) {
  if (profiles.empty()) throw std::invalid_argument("mean_profile: empty profile list");
  const std::size_t frames = profiles.front().share.size();
  for (const auto& p : profiles)
    if (p.share.size() != frames)
      throw std::invalid_argument("mean_profile: profiles of differing length");
  std::vector<double> mean(frames);
  std::vector<double> column(profiles.size());
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < profiles.size(); ++i) column[i] = profiles[i].share[t];
    mean[t] = detail::pairwise_sum(column) / static_cast<double>(profiles.size());
  }
  return mean;
}

struct QuadraticFit {
  double curvature = 0.0;  // border strength
  double slope = 0.0;
  double intercept = 0.0;
};

struct LinearFit {
  double slope = 0.0;  // lookahead strength
  double intercept = 0.0;
};

namespace detail {

inline std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m,
                                    std::array<double, 3> rhs) {
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::fabs(m[row][col]) > std::fabs(m[pivot][col])) pivot = row;
    if (m[pivot][col] == 0.0) throw std::runtime_error("solve3: singular normal matrix");
    std::swap(m[pivot], m[col]);
    std::swap(rhs[pivot], rhs[col]);
    for (int row = col + 1; row < 3; ++row) {
      const double f = m[row][col] / m[col][col];
      for (int c = col; c < 3; ++c) m[row][c] -= f * m[col][c];
      rhs[row] -= f * rhs[col];
    }
  }
  std::array<double, 3> x{};
  for (int row = 2; row >= 0; --row) {
    double acc = rhs[row];
    for (int c = row + 1; c < 3; ++c) acc -= m[row][c] * x[c];
    x[row] = acc / m[row][row];
  }
  return x;
}

}  // namespace detail

// Least squares of mean_p against (t^2, t, 1) with t in {1..T}, solved via
// the pivoted 3x3 normal equations.
inline QuadraticFit fit_quadratic(std::span<const double> mean_p) {
  const std::size_t frames = mean_p.size();
  if (frames < 3) throw std::invalid_argument("fit_quadratic: need at least 3 frames");
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0, b0 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i + 1);
    const double t2 = t * t;
    s1 += t;
    s2 += t2;
    s3 += t2 * t;
    s4 += t2 * t2;
    b2 += mean_p[i] * t2;
    b1 += mean_p[i] * t;
    b0 += mean_p[i];
  }
  const double s0 = static_cast<double>(frames);
  const auto x = detail::solve3({{{s4, s3, s2}, {s3, s2, s1}, {s2, s1, s0}}}, {b2, b1, b0});
  return {x[0], x[1], x[2]};
}

// Ordinary least squares slope/intercept over t in {1..T}.
inline LinearFit fit_linear(std::span<const double> mean_p) {
  const std::size_t frames = mean_p.size();
  if (frames < 2) throw std::invalid_argument("fit_linear: need at least 2 frames");
  double t_mean = 0, p_mean = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    t_mean += static_cast<double>(i + 1);
    p_mean += mean_p[i];
  }
  t_mean /= static_cast<double>(frames);
  p_mean /= static_cast<double>(frames);
  double cov = 0, var = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    const double dt = static_cast<double>(i + 1) - t_mean;
    cov += dt * (mean_p[i] - p_mean);
    var += dt * dt;
  }
  const double slope = cov / var;
  return {slope, p_mean - slope * t_mean};
}

inline QuadraticFit fit_quadratic(const std::vector<double>& mean_p) {
  return fit_quadratic(std::span<const double>(mean_p));
}
inline LinearFit fit_linear(const std::vector<double>& mean_p) {
  return fit_linear(std::span<const double>(mean_p));
}

// True iff the true label sits among the k highest logits.
inline bool top_k_hit(std::span<const double> logits, std::size_t true_class,
                      std::size_t k = 5) {
  if (true_class >= logits.size())
    throw std::invalid_argument("top_k_hit: class out of range");
  for (std::size_t idx : top_k_indices(logits, k))
    if (idx == true_class) return true;
  return false;
}

inline bool top_k_hit(const std::vector<double>& logits, std::size_t true_class,
                      std::size_t k = 5) {
  return top_k_hit(std::span<const double>(logits), true_class, k);
}

struct StepSweepRow {
  Rational step;
  QuadraticFit quad;
  LinearFit lin;
  double topk_accuracy = 0.0;
  std::size_t excluded = 0;
};

struct OffsetSweepRow {
  std::size_t offset = 0;
  LinearFit lin;
  QuadraticFit quad;
  std::size_t excluded = 0;
};

namespace detail {

struct VideoOutcome {
  bool hit = false;
  bool excluded = true;
  TemporalProfile profile;
};

// Explains one snippet for its predicted class. Degenerate explanations
// (non-positive explained logit for the deep Taylor path, zero total
// relevance) surface as exclusions, never as sweep failures.
inline VideoOutcome evaluate_video(const NetworkSpec& net, const Video& video,
                                   const Explainer& explainer, const SnippetSpec& spec,
                                   std::size_t topk) {
  VideoOutcome outcome;
  try {
    const Tensor snippet = extract_snippet(video, spec);
    const ForwardTrace trace = forward(net, snippet);
    std::size_t predicted = 0;
    for (std::size_t i = 1; i < trace.logits.size(); ++i)
      if (trace.logits[i] > trace.logits[predicted]) predicted = i;
    outcome.hit = top_k_hit(trace.logits, video.true_class, topk);
    AttributionMap map;
    if (explainer.method == Method::DTD) {
      if (!(trace.logits[predicted] > 0.0)) return outcome;
      RelevanceConfig config = explainer.config;
      config.target_class = predicted;
      map = dtd_explain(net, trace, config);
    } else {
      map = sensitivity_explain(net, snippet, predicted);
    }
    outcome.profile = temporal_profile(map);
    outcome.excluded = false;
  } catch (const std::exception&) {
    outcome.excluded = true;  // degenerate or failed videos never abort a sweep
  }
  return outcome;
}

}  // namespace detail

// Mean relevance-share profile of a dataset at one (offset, step) cell, with
// both fitted models, top-k accuracy over all videos, and the number of
// videos whose explanation degenerated (excluded from the mean, not from
// accuracy). NaN fits signal that every video was excluded.
struct ProfileSummary {
  std::vector<double> mean_share;
  QuadraticFit quad;
  LinearFit lin;
  double topk_accuracy = 0.0;
  std::size_t excluded = 0;
};

inline ProfileSummary profile_summary(const NetworkSpec& net, std::span<const Video> videos,
                                      const Explainer& explainer, const SnippetSpec& spec,
                                      std::size_t topk, std::size_t jobs = 1) {
  std::vector<detail::VideoOutcome> outcomes(videos.size());
  detail::parallel_for(videos.size(), jobs, [&](std::size_t i) {
    outcomes[i] = detail::evaluate_video(net, videos[i], explainer, spec, topk);
  });
  ProfileSummary cell;
  std::vector<TemporalProfile> profiles;
  profiles.reserve(videos.size());
  std::size_t hits = 0;
  for (auto& outcome : outcomes) {  // dataset order, independent of scheduling
    if (outcome.hit) ++hits;
    if (outcome.excluded)
      ++cell.excluded;
    else
      profiles.push_back(std::move(outcome.profile));
  }
  cell.topk_accuracy = static_cast<double>(hits) / static_cast<double>(videos.size());
  if (profiles.empty()) {
    const double nan = std::nan("");
    cell.quad = {nan, nan, nan};
    cell.lin = {nan, nan};
  } else {
    cell.mean_share = mean_profile(profiles);
    cell.quad = fit_quadratic(cell.mean_share);
    cell.lin = fit_linear(cell.mean_share);
  }
  return cell;
}

// One row per schedule entry: snippets at a fixed offset, explained for the
// predicted class, averaged, fitted, and scored for top-k accuracy.
inline std::vector<StepSweepRow> sweep_step(const NetworkSpec& net,
                                            std::span<const Video> videos,
                                            const Explainer& explainer,
                                            std::span<const Rational> schedule,
                                            std::size_t offset = 0, std::size_t topk = 5,
                                            std::size_t jobs = 1) {
  if (videos.empty()) throw std::invalid_argument("sweep_step: empty dataset");
  if (topk < 1 || topk > net.class_count)
    throw std::invalid_argument("sweep_step: top-k out of range");
  std::vector<StepSweepRow> rows;
  rows.reserve(schedule.size());
  for (const Rational& step : schedule) {
    const SnippetSpec spec{offset, step, net.input_shape[1]};
    const auto cell = profile_summary(net, videos, explainer, spec, topk, jobs);
    rows.push_back({step, cell.quad, cell.lin, cell.topk_accuracy, cell.excluded});
  }
  return rows;
}

// One row per offset at a fixed step; no accuracy column.
inline std::vector<OffsetSweepRow> sweep_offset(const NetworkSpec& net,
                                                std::span<const Video> videos,
                                                const Explainer& explainer,
                                                std::span<const std::size_t> offsets,
                                                Rational step = Rational(1, 1),
                                                std::size_t jobs = 1) {
  if (videos.empty()) throw std::invalid_argument("sweep_offset: empty dataset");
  for (const Video& video : videos)
    for (std::size_t offset : offsets)
      if (offset >= video.frames.extent(1))
        throw std::invalid_argument("sweep_offset: offset beyond video '" + video.id + "'");
  std::vector<OffsetSweepRow> rows;
  rows.reserve(offsets.size());
  for (std::size_t offset : offsets) {
    const SnippetSpec spec{offset, step, net.input_shape[1]};
    const auto cell = profile_summary(net, videos, explainer, spec, net.class_count, jobs);
    rows.push_back({offset, cell.lin, cell.quad, cell.excluded});
  }
  return rows;
}

}  // namespace vxt
