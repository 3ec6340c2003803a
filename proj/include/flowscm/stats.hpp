// Copyright 2026 The flowscm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "flowscm/error.hpp"
#include "flowscm/rng.hpp"

namespace flowscm::stats {

// Draws from one distribution: numeric scalars or discrete levels, optionally
// weighted. Weights are honoured by the Discrete estimator; the remaining
// operations are unweighted.
struct SampleSet {
  std::vector<double> numbers;
  std::vector<std::string> levels;
  std::vector<double> weights;

  static SampleSet of(std::vector<double> xs) { return SampleSet{std::move(xs), {}, {}}; }
  static SampleSet of_levels(std::vector<std::string> ls) { return SampleSet{{}, std::move(ls), {}}; }

  bool numeric() const { return levels.empty(); }
  std::size_t size() const { return numeric() ? numbers.size() : levels.size(); }
};

inline double mean(const std::vector<double>& x) {
  if (x.empty()) throw Error(Errc::EmptySample, "mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance.
inline double variance(const std::vector<double>& x) {
  if (x.size() < 2) throw Error(Errc::DegenerateSample, "variance needs n >= 2");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

// --- KL divergence ----------------------------------------------------------

struct HistogramKl {
  int bins = 32;
  double alpha = 0.5;  // per-bin pseudo-count
};

struct KnnKl {
  int k = 5;
};

struct DiscreteKl {
  double alpha = 0.0;  // 0 enforces absolute continuity strictly
};

using KlEstimator = std::variant<HistogramKl, KnnKl, DiscreteKl>;

struct KlEstimate {
  double value = 0.0;
  bool clamped = false;  // a negative raw estimate was clamped to 0
};

namespace detail {

inline KlEstimate kl_histogram(const std::vector<double>& p, const std::vector<double>& q,
                               const HistogramKl& opt) {
  const int bins = std::max(1, opt.bins);
  double lo = p[0], hi = p[0];
  for (double v : p) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : q) { lo = std::min(lo, v); hi = std::max(hi, v); }
  if (!(hi > lo)) return {0.0, false};  // all mass in one point
  const double width = (hi - lo) / bins;
  std::vector<double> cp(bins, 0.0), cq(bins, 0.0);
  auto bin_of = [&](double x) {
    int b = static_cast<int>((x - lo) / width);
    return std::min(std::max(b, 0), bins - 1);
  };
  for (double v : p) cp[bin_of(v)] += 1.0;
  for (double v : q) cq[bin_of(v)] += 1.0;
  const double np = static_cast<double>(p.size()) + opt.alpha * bins;
  const double nq = static_cast<double>(q.size()) + opt.alpha * bins;
  double kl = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double fp = (cp[b] + opt.alpha) / np;
    const double fq = (cq[b] + opt.alpha) / nq;
    kl += fp * std::log(fp / fq);
  }
  if (kl < 0.0) return {0.0, true};
  return {kl, false};
}

// k-th nearest neighbour distance from sorted[i0] among sorted values,
// excluding the element itself when self_index >= 0.
inline double knn_distance(const std::vector<double>& sorted, double x, long self_index, int k) {
  const long n = static_cast<long>(sorted.size());
  long lo = static_cast<long>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
  long left = lo - 1, right = lo;
  double dist = 0.0;
  for (int taken = 0; taken < k;) {
    double dl = left >= 0 ? x - sorted[left] : std::numeric_limits<double>::infinity();
    double dr = right < n ? sorted[right] - x : std::numeric_limits<double>::infinity();
    if (dl <= dr) {
      if (left != self_index) { dist = dl; ++taken; }
      --left;
    } else {
      if (right != self_index) { dist = dr; ++taken; }
      ++right;
    }
  }
  return dist;
}

// 1-D nearest-neighbour KL estimator (Wang-Kulkarni-Verdu).
inline KlEstimate kl_knn(const std::vector<double>& p, const std::vector<double>& q,
                         const KnnKl& opt) {
  const int k = std::max(1, opt.k);
  if (p.size() <= static_cast<std::size_t>(k) || q.size() < static_cast<std::size_t>(k)) {
    throw Error(Errc::InsufficientData, "kNN KL needs more than k samples per side");
  }
  std::vector<double> ps(p), qs(q);
  std::sort(ps.begin(), ps.end());
  std::sort(qs.begin(), qs.end());
  const double n = static_cast<double>(ps.size());
  const double m = static_cast<double>(qs.size());
  constexpr double kFloor = 1e-12;
  double acc = 0.0;
  for (long i = 0; i < static_cast<long>(ps.size()); ++i) {
    const double x = ps[i];
    const double rho = std::max(knn_distance(ps, x, i, k), kFloor);
    const double nu = std::max(knn_distance(qs, x, -1, k), kFloor);
    acc += std::log(nu / rho);
  }
  const double kl = acc / n + std::log(m / (n - 1.0));
  if (kl < 0.0) return {0.0, true};
  return {kl, false};
}

inline KlEstimate kl_discrete(const SampleSet& p, const SampleSet& q, const DiscreteKl& opt) {
  auto tally = [](const SampleSet& s) {
    std::map<std::string, double> counts;
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double w = s.weights.empty() ? 1.0 : s.weights[i];
      if (w < 0.0) throw Error(Errc::Usage, "negative sample weight");
      const std::string key = s.numeric() ? std::to_string(s.numbers[i]) : s.levels[i];
      counts[key] += w;
      total += w;
    }
    if (total <= 0.0) throw Error(Errc::EmptySample, "zero total weight");
    return std::make_pair(counts, total);
  };
  auto [cp, np] = tally(p);
  auto [cq, nq] = tally(q);
  std::map<std::string, bool> support;
  for (const auto& [key, c] : cp) support[key] = true;
  for (const auto& [key, c] : cq) support[key] = true;
  const double bins = static_cast<double>(support.size());
  double kl = 0.0;
  for (const auto& [key, seen] : support) {
    const double pc = (cp.count(key) ? cp[key] : 0.0) + opt.alpha;
    const double qc = (cq.count(key) ? cq[key] : 0.0) + opt.alpha;
    if (pc <= 0.0) continue;
    if (qc <= 0.0) {
      throw Error(Errc::AbsoluteContinuityViolation,
                  "q has no mass on level '" + key + "' where p does");
    }
    const double fp = pc / (np + opt.alpha * bins);
    const double fq = qc / (nq + opt.alpha * bins);
    kl += fp * std::log(fp / fq);
  }
  if (kl < 0.0) return {0.0, true};
  return {kl, false};
}

}  // namespace detail

// KL(p || q). Histogram and kNN apply to numeric samples, Discrete to levels
// (or numeric values treated as levels). Estimates are clamped at 0.
inline KlEstimate kl_divergence(const SampleSet& p, const SampleSet& q,
                                const KlEstimator& estimator) {
  if (p.size() == 0 || q.size() == 0) throw Error(Errc::EmptySample, "empty sample set");
  if (p.numeric() != q.numeric()) throw Error(Errc::Usage, "mismatched sample kinds");
  if (std::holds_alternative<DiscreteKl>(estimator)) {
    return detail::kl_discrete(p, q, std::get<DiscreteKl>(estimator));
  }
  if (!p.numeric()) throw Error(Errc::Usage, "numeric estimator on level samples");
  if (std::holds_alternative<HistogramKl>(estimator)) {
    return detail::kl_histogram(p.numbers, q.numbers, std::get<HistogramKl>(estimator));
  }
  return detail::kl_knn(p.numbers, q.numbers, std::get<KnnKl>(estimator));
}

// --- classical tests ---------------------------------------------------------

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Unequal-variance t-test with Welch-Satterthwaite degrees of freedom,
// two-sided p.
inline TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(Errc::DegenerateSample, "welch needs n >= 2 per side");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = variance(a), vb = variance(b);
  if (va <= 0.0 && vb <= 0.0) throw Error(Errc::DegenerateSample, "both samples have zero variance");
  const double se2 = va / na + vb / nb;
  const double t = (ma - mb) / std::sqrt(se2);
  const double dof = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  boost::math::students_t dist(dof);
  const double p = 2.0 * boost::math::cdf(dist, -std::abs(t));
  return {t, p};
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Mean +/- t-quantile * standard error.
inline Interval confidence_interval(const std::vector<double>& samples, double level = 0.95) {
  if (samples.size() < 2) throw Error(Errc::DegenerateSample, "interval needs n >= 2");
  const double n = static_cast<double>(samples.size());
  const double m = mean(samples);
  const double sd = std::sqrt(variance(samples));
  if (sd == 0.0) return {m, m};
  boost::math::students_t dist(n - 1.0);
  const double tq = boost::math::quantile(dist, 1.0 - (1.0 - level) / 2.0);
  const double half = tq * sd / std::sqrt(n);
  return {m - half, m + half};
}

// --- least squares ------------------------------------------------------------

struct OlsFit {
  std::vector<double> coef;  // intercept first
  double rss = 0.0;
  std::vector<double> residuals;
};

// Ordinary least squares with an intercept, solved by normal equations with a
// small relative ridge term to tolerate collinear designs.
inline OlsFit ols(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                  double ridge = 1e-9) {
  const std::size_t n = y.size();
  if (n == 0) throw Error(Errc::EmptySample, "ols on empty data");
  const std::size_t d = (x.empty() ? 0 : x[0].size()) + 1;
  std::vector<std::vector<double>> ata(d, std::vector<double>(d, 0.0));
  std::vector<double> aty(d, 0.0);
  std::vector<double> row(d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 1; j < d; ++j) row[j] = x[i][j - 1];
    for (std::size_t a = 0; a < d; ++a) {
      aty[a] += row[a] * y[i];
      for (std::size_t b = 0; b < d; ++b) ata[a][b] += row[a] * row[b];
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += ata[a][a];
  const double lambda = ridge * (trace / static_cast<double>(d)) + 1e-30;
  for (std::size_t a = 0; a < d; ++a) ata[a][a] += lambda;

  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::abs(ata[r][col]) > std::abs(ata[pivot][col])) pivot = r;
    }
    std::swap(ata[col], ata[pivot]);
    std::swap(aty[col], aty[pivot]);
    const double diag = ata[col][col];
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col || ata[r][col] == 0.0) continue;
      const double f = ata[r][col] / diag;
      for (std::size_t c2 = col; c2 < d; ++c2) ata[r][c2] -= f * ata[col][c2];
      aty[r] -= f * aty[col];
    }
  }
  OlsFit fit;
  fit.coef.resize(d);
  for (std::size_t a = 0; a < d; ++a) fit.coef[a] = aty[a] / ata[a][a];
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pred = fit.coef[0];
    for (std::size_t j = 1; j < d; ++j) pred += fit.coef[j] * x[i][j - 1];
    const double r = y[i] - pred;
    fit.residuals[i] = r;
    fit.rss += r * r;
  }
  return fit;
}

// --- conditional shift tests ---------------------------------------------------
//
// Both tests ask whether the conditional law p(value | parents) differs
// between two windows. Numeric targets: pooled vs per-window least squares
// (Chow-style F on the residual sums of squares). Categorical targets:
// stratified G-test across discretised parent configurations.

struct NumericPairs {
  std::vector<std::vector<double>> parents;  // encoded feature rows
  std::vector<double> values;
};

struct CategoricalPairs {
  std::vector<int> parent_configs;  // discretised parent configuration per row
  std::vector<int> values;          // target level index per row
  int value_levels = 0;
};

inline TestResult conditional_shift_test(const NumericPairs& old_pairs,
                                         const NumericPairs& new_pairs,
                                         std::size_t min_samples = 50) {
  const std::size_t n1 = old_pairs.values.size(), n2 = new_pairs.values.size();
  if (n1 < min_samples || n2 < min_samples) {
    throw Error(Errc::InsufficientData, "conditional shift test: have " +
                                            std::to_string(std::min(n1, n2)) + ", need " +
                                            std::to_string(min_samples) + " per window");
  }
  std::vector<std::vector<double>> pooled_x(old_pairs.parents);
  pooled_x.insert(pooled_x.end(), new_pairs.parents.begin(), new_pairs.parents.end());
  std::vector<double> pooled_y(old_pairs.values);
  pooled_y.insert(pooled_y.end(), new_pairs.values.begin(), new_pairs.values.end());

  const auto pooled = ols(pooled_x, pooled_y);
  const auto fit1 = ols(old_pairs.parents, old_pairs.values);
  const auto fit2 = ols(new_pairs.parents, new_pairs.values);

  const double k = static_cast<double>(pooled.coef.size());
  const double dof2 = static_cast<double>(n1 + n2) - 2.0 * k;
  if (dof2 < 1.0) throw Error(Errc::InsufficientData, "too few rows for the design size");

  const double scale = pooled.rss + std::abs(mean(pooled_y)) + 1.0;
  double num = (pooled.rss - fit1.rss - fit2.rss) / k;
  double den = (fit1.rss + fit2.rss) / dof2;
  if (num < 0.0) num = 0.0;
  if (den <= scale * 1e-14) {
    // both windows fit (near-)deterministically
    if (num <= scale * 1e-14) return {0.0, 1.0};
    return {std::numeric_limits<double>::infinity(), 0.0};
  }
  const double f = num / den;
  boost::math::fisher_f dist(k, dof2);
  const double p = boost::math::cdf(boost::math::complement(dist, f));
  return {f, p};
}

inline TestResult conditional_shift_test(const CategoricalPairs& old_pairs,
                                         const CategoricalPairs& new_pairs,
                                         std::size_t min_samples = 50) {
  const std::size_t n1 = old_pairs.values.size(), n2 = new_pairs.values.size();
  if (n1 < min_samples || n2 < min_samples) {
    throw Error(Errc::InsufficientData, "conditional shift test: have " +
                                            std::to_string(std::min(n1, n2)) + ", need " +
                                            std::to_string(min_samples) + " per window");
  }
  const int levels = std::max(old_pairs.value_levels, new_pairs.value_levels);
  // stratum -> window -> level counts
  std::map<int, std::array<std::vector<double>, 2>> strata;
  auto add = [&](const CategoricalPairs& pairs, int w) {
    for (std::size_t i = 0; i < pairs.values.size(); ++i) {
      auto& cell = strata[pairs.parent_configs[i]];
      for (auto& v : cell) {
        if (v.empty()) v.assign(levels, 0.0);
      }
      cell[w][pairs.values[i]] += 1.0;
    }
  };
  add(old_pairs, 0);
  add(new_pairs, 1);

  double g = 0.0;
  double df = 0.0;
  for (const auto& [config, cell] : strata) {
    const auto& c0 = cell[0];
    const auto& c1 = cell[1];
    if (c0.empty() || c1.empty()) continue;
    const double t0 = std::accumulate(c0.begin(), c0.end(), 0.0);
    const double t1 = std::accumulate(c1.begin(), c1.end(), 0.0);
    if (t0 <= 0.0 || t1 <= 0.0) continue;
    const double total = t0 + t1;
    int present_levels = 0;
    for (int l = 0; l < levels; ++l) {
      const double col = c0[l] + c1[l];
      if (col <= 0.0) continue;
      ++present_levels;
      const double e0 = t0 * col / total;
      const double e1 = t1 * col / total;
      if (c0[l] > 0.0) g += 2.0 * c0[l] * std::log(c0[l] / e0);
      if (c1[l] > 0.0) g += 2.0 * c1[l] * std::log(c1[l] / e1);
    }
    if (present_levels >= 2) df += static_cast<double>(present_levels - 1);
  }
  if (df <= 0.0) return {0.0, 1.0};
  if (g < 0.0) g = 0.0;
  boost::math::chi_squared dist(df);
  const double p = boost::math::cdf(boost::math::complement(dist, g));
  return {g, p};
}

// --- Shapley values -------------------------------------------------------------

struct ShapleyProblem {
  enum class Mode { Exact, Permutation };

  std::vector<std::string> players;
  // value of a coalition; bit i set means players[i] is in the coalition
  std::function<double(std::uint64_t)> value_fn;
  Mode mode = Mode::Exact;
  std::size_t permutation_samples = 2000;
  std::uint64_t seed = 0;
};

constexpr std::size_t kMaxExactShapleyPlayers = 12;

// Shapley scores of the coalition game. Exact mode enumerates all subsets and
// satisfies efficiency identically; permutation mode averages marginal
// contributions over sampled player orders (the value function is memoised,
// so repeated coalitions cost nothing).
inline std::map<std::string, double> shapley(const ShapleyProblem& problem) {
  const std::size_t n = problem.players.size();
  if (n == 0) return {};
  if (n > 63) throw Error(Errc::TooManyPlayersForExact, "more than 63 players");

  std::map<std::uint64_t, double> memo;
  auto value = [&](std::uint64_t mask) {
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second;
    const double v = problem.value_fn(mask);
    memo.emplace(mask, v);
    return v;
  };

  std::vector<double> phi(n, 0.0);
  if (problem.mode == ShapleyProblem::Mode::Exact) {
    if (n > kMaxExactShapleyPlayers) {
      throw Error(Errc::TooManyPlayersForExact,
                  std::to_string(n) + " players exceeds exact limit of " +
                      std::to_string(kMaxExactShapleyPlayers));
    }
    std::vector<double> factorial(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
    const std::uint64_t full = (n == 64) ? ~0ULL : ((1ULL << n) - 1);
    for (std::uint64_t mask = 0; mask <= full; ++mask) {
      const int s = std::popcount(mask);
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) continue;
        const double w = factorial[s] * factorial[n - s - 1] / factorial[n];
        phi[i] += w * (value(mask | (1ULL << i)) - value(mask));
      }
    }
  } else {
    Rng rng(problem.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t s = 0; s < problem.permutation_samples; ++s) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      std::uint64_t mask = 0;
      double prev = value(0);
      for (std::size_t i = 0; i < n; ++i) {
        mask |= (1ULL << order[i]);
        const double cur = value(mask);
        phi[order[i]] += cur - prev;
        prev = cur;
      }
    }
    for (auto& v : phi) v /= static_cast<double>(problem.permutation_samples);
  }

  std::map<std::string, double> out;
  for (std::size_t i = 0; i < n; ++i) out[problem.players[i]] = phi[i];
  return out;
}

// Empirical quantile (linear index, no interpolation) used for bootstrap
// thresholds.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw Error(Errc::EmptySample, "quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t idx = static_cast<std::size_t>(std::ceil(pos));
  return xs[std::min(idx, xs.size() - 1)];
}

}  // namespace flowscm::stats
