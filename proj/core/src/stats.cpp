#include "p300/stats.hpp"

#include "p300/parallel.hpp"
#include "p300/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace p300 {

namespace {

// continued-fraction evaluation of the incomplete beta (Lentz)
double betacf(double a, double b, double x) {
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-15) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * betacf(a, b, x) / a;
  }
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// t statistics from per-subject difference maps under a sign assignment.
// sum_sq is precomputed sum of squares per cell, which sign flips leave
// unchanged. Degenerate cells (zero variance, nonzero mean) become +-huge
// when guarded, otherwise they throw.
Eigen::MatrixXd tmap_of_signs(std::span<const Eigen::MatrixXd> diffs,
                              const Eigen::MatrixXd& sum_sq, std::span<const double> signs,
                              bool guarded) {
  const Eigen::Index rows = diffs.front().rows();
  const Eigen::Index cols = diffs.front().cols();
  const auto n = static_cast<double>(diffs.size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t i = 0; i < diffs.size(); ++i) sum += signs[i] * diffs[i];

  Eigen::MatrixXd t(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double mean = sum(r, c) / n;
      const double var = std::max(0.0, (sum_sq(r, c) - n * mean * mean) / (n - 1.0));
      if (var == 0.0) {
        if (mean == 0.0) {
          t(r, c) = 0.0;
        } else if (guarded) {
          t(r, c) = mean > 0 ? 1e300 : -1e300;
        } else {
          throw std::runtime_error("paired t: zero variance with nonzero mean at channel " +
                                   std::to_string(r) + ", sample " + std::to_string(c));
        }
      } else {
        t(r, c) = mean / std::sqrt(var / n);
      }
    }
  }
  return t;
}

std::vector<Eigen::MatrixXd> subject_diffs(std::span<const DifferenceWave> a,
                                           std::span<const DifferenceWave> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired test: unequal subject counts");
  if (a.size() < 2) throw std::invalid_argument("paired test needs at least 2 subjects");
  const Eigen::Index rows = a.front().data.rows();
  const Eigen::Index cols = a.front().data.cols();
  std::vector<Eigen::MatrixXd> diffs;
  diffs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].data.rows() != rows || a[i].data.cols() != cols || b[i].data.rows() != rows ||
        b[i].data.cols() != cols) {
      throw std::invalid_argument("paired test: wave shapes do not match");
    }
    diffs.push_back(a[i].data - b[i].data);
  }
  return diffs;
}

double max_abs_cluster_mass(const Eigen::MatrixXd& tmap, const ElectrodeLayout& layout,
                            double threshold) {
  double best = 0.0;
  // connectivity scan without building member lists
  const Eigen::Index rows = tmap.rows();
  const Eigen::Index cols = tmap.cols();
  std::vector<char> visited(static_cast<std::size_t>(rows * cols), 0);
  std::vector<std::pair<int, int>> stack;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::size_t id = static_cast<std::size_t>(r * cols + c);
      if (visited[id] || std::abs(tmap(r, c)) <= threshold) continue;
      const int sign = tmap(r, c) > 0 ? 1 : -1;
      double mass = 0.0;
      stack.assign(1, {static_cast<int>(r), static_cast<int>(c)});
      visited[id] = 1;
      while (!stack.empty()) {
        const auto [cr, cc] = stack.back();
        stack.pop_back();
        mass += tmap(cr, cc);
        auto push = [&](int nr, int nc) {
          const std::size_t nid = static_cast<std::size_t>(nr) * static_cast<std::size_t>(cols) +
                                  static_cast<std::size_t>(nc);
          if (visited[nid]) return;
          const double v = tmap(nr, nc);
          if ((sign > 0 && v > threshold) || (sign < 0 && v < -threshold)) {
            visited[nid] = 1;
            stack.push_back({nr, nc});
          }
        };
        if (cc > 0) push(cr, cc - 1);
        if (cc + 1 < cols) push(cr, cc + 1);
        for (int nb : layout.neighbors[static_cast<std::size_t>(cr)]) push(nb, cc);
      }
      best = std::max(best, std::abs(mass));
    }
  }
  return best;
}

}  // namespace

double student_t_cdf(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_cdf: df must be >= 1");
  const double x = df / (df + t * t);
  const double tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, int df) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("student_t_quantile: p must be in (0,1)");
  double lo = -1e3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd paired_tmap(std::span<const DifferenceWave> a, std::span<const DifferenceWave> b) {
  const std::vector<Eigen::MatrixXd> diffs = subject_diffs(a, b);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(diffs.front().rows(), diffs.front().cols());
  for (const Eigen::MatrixXd& d : diffs) sum_sq.array() += d.array().square();
  const std::vector<double> signs(diffs.size(), 1.0);
  return tmap_of_signs(diffs, sum_sq, signs, /*guarded=*/false);
}

std::vector<Cluster> form_clusters(const Eigen::MatrixXd& tmap, const ElectrodeLayout& layout,
                                   double threshold) {
  if (layout.size() == 0) throw std::invalid_argument("form_clusters: empty layout");
  if (static_cast<std::size_t>(tmap.rows()) != layout.size()) {
    throw std::invalid_argument("form_clusters: tmap rows must match layout size");
  }
  const Eigen::Index rows = tmap.rows();
  const Eigen::Index cols = tmap.cols();
  std::vector<char> visited(static_cast<std::size_t>(rows * cols), 0);
  std::vector<Cluster> clusters;
  std::vector<std::pair<int, int>> stack;

  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::size_t id = static_cast<std::size_t>(r * cols + c);
      if (visited[id] || std::abs(tmap(r, c)) <= threshold) continue;
      Cluster cl;
      cl.sign = tmap(r, c) > 0 ? 1 : -1;
      stack.assign(1, {static_cast<int>(r), static_cast<int>(c)});
      visited[id] = 1;
      while (!stack.empty()) {
        const auto [cr, cc] = stack.back();
        stack.pop_back();
        cl.members.emplace_back(cr, cc);
        cl.mass += tmap(cr, cc);
        auto push = [&](int nr, int nc) {
          const std::size_t nid = static_cast<std::size_t>(nr) * static_cast<std::size_t>(cols) +
                                  static_cast<std::size_t>(nc);
          if (visited[nid]) return;
          const double v = tmap(nr, nc);
          if ((cl.sign > 0 && v > threshold) || (cl.sign < 0 && v < -threshold)) {
            visited[nid] = 1;
            stack.push_back({nr, nc});
          }
        };
        if (cc > 0) push(cr, cc - 1);
        if (cc + 1 < cols) push(cr, cc + 1);
        for (int nb : layout.neighbors[static_cast<std::size_t>(cr)]) push(nb, cc);
      }
      std::sort(cl.members.begin(), cl.members.end());
      clusters.push_back(std::move(cl));
    }
  }
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& x, const Cluster& y) {
    if (std::abs(x.mass) != std::abs(y.mass)) return std::abs(x.mass) > std::abs(y.mass);
    return x.members < y.members;
  });
  return clusters;
}

int ClusterResult::n_significant() const {
  return static_cast<int>(
      std::count_if(clusters.begin(), clusters.end(), [](const Cluster& c) { return c.significant; }));
}

ClusterResult permutation_test(std::span<const DifferenceWave> a, std::span<const DifferenceWave> b,
                               const ElectrodeLayout& layout, const PermutationConfig& cfg,
                               int n_workers) {
  if (cfg.n_permutations < 1) throw std::invalid_argument("need at least one permutation");
  const std::vector<Eigen::MatrixXd> diffs = subject_diffs(a, b);
  const auto n_subjects = static_cast<int>(diffs.size());
  if (static_cast<std::size_t>(diffs.front().rows()) != layout.size()) {
    throw std::invalid_argument("waves have " + std::to_string(diffs.front().rows()) +
                                " channels, layout has " + std::to_string(layout.size()));
  }

  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(diffs.front().rows(), diffs.front().cols());
  for (const Eigen::MatrixXd& d : diffs) sum_sq.array() += d.array().square();

  ClusterResult result;
  result.alpha = cfg.alpha;
  result.n_permutations = cfg.n_permutations;
  result.n_subjects = n_subjects;
  result.threshold = student_t_quantile(1.0 - cfg.cluster_alpha, n_subjects - 1);
  {
    const std::vector<double> ones(diffs.size(), 1.0);
    result.tmap = tmap_of_signs(diffs, sum_sq, ones, /*guarded=*/false);
  }
  result.clusters = form_clusters(result.tmap, layout, result.threshold);

  std::vector<double> null_max(static_cast<std::size_t>(cfg.n_permutations), 0.0);
  parallel_for(cfg.n_permutations, n_workers, [&](int perm) {
    std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(perm));
    std::vector<double> signs(static_cast<std::size_t>(n_subjects));
    for (double& s : signs) s = (rng() & 1) ? 1.0 : -1.0;
    const Eigen::MatrixXd t = tmap_of_signs(diffs, sum_sq, signs, /*guarded=*/true);
    null_max[static_cast<std::size_t>(perm)] = max_abs_cluster_mass(t, layout, result.threshold);
  });

  for (Cluster& cl : result.clusters) {
    const double observed = std::abs(cl.mass);
    long count = 0;
    for (double m : null_max) {
      if (m >= observed) ++count;
    }
    cl.p_value = static_cast<double>(1 + count) / static_cast<double>(1 + cfg.n_permutations);
    cl.significant = cl.p_value <= cfg.alpha;
  }
  return result;
}

std::string cluster_result_to_json(const ClusterResult& result) {
  nlohmann::json j;
  j["threshold"] = result.threshold;
  j["alpha"] = result.alpha;
  j["n_permutations"] = result.n_permutations;
  j["n_subjects"] = result.n_subjects;
  j["n_significant"] = result.n_significant();
  j["clusters"] = nlohmann::json::array();
  for (const Cluster& cl : result.clusters) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& [ch, s] : cl.members) members.push_back({ch, s});
    j["clusters"].push_back({{"sign", cl.sign},
                             {"mass", cl.mass},
                             {"p_value", cl.p_value},
                             {"significant", cl.significant},
                             {"size", cl.members.size()},
                             {"members", std::move(members)}});
  }
  return j.dump(2);
}

std::string cluster_mask_csv(const ClusterResult& result, const ElectrodeLayout& layout) {
  std::ostringstream out;
  out << "channel,label,sample,cluster_id,significant\n";
  for (std::size_t i = 0; i < result.clusters.size(); ++i) {
    const Cluster& cl = result.clusters[i];
    for (const auto& [ch, s] : cl.members) {
      out << ch << ',' << layout.labels[static_cast<std::size_t>(ch)] << ',' << s << ',' << i
          << ',' << (cl.significant ? 1 : 0) << "\n";
    }
  }
  return out.str();
}

}  // namespace p300
