#include "p300/eval.hpp"

#include "p300/parallel.hpp"
#include "p300/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace p300 {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_error_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  }
  return area;
}

void check_disjoint(const std::vector<int>& train_blocks, const std::vector<int>& test_blocks) {
  for (int b : test_blocks) {
    if (std::binary_search(train_blocks.begin(), train_blocks.end(), b)) {
      throw std::logic_error("train/test isolation violated: block " + std::to_string(b) +
                             " is in both sets");
    }
  }
}

}  // namespace

std::vector<int> SessionEpochs::block_ids() const {
  std::set<int> ids;
  for (const TagEvent& ev : events) ids.insert(ev.block_index);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> SessionEpochs::block_epochs(int b) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].block_index == b) idx.push_back(i);
  }
  return idx;
}

SessionEpochs make_session_epochs(const Recording& preprocessed, double window_seconds,
                                  const LatencyTable& latency) {
  EpochExtraction ex = extract_epochs(preprocessed, window_seconds, latency);
  SessionEpochs out;
  out.subject = preprocessed.subject_id;
  out.condition = preprocessed.condition;
  out.set = std::move(ex.set);
  out.events.reserve(ex.kept_events.size());
  for (std::size_t i : ex.kept_events) out.events.push_back(preprocessed.events[i]);
  return out;
}

double selection_seconds(const TimingConfig& timing, int r) {
  return (r * kFlashesPerRepetition * timing.soa_ms + timing.pause_ms) / 1000.0;
}

std::pair<std::vector<int>, std::vector<int>> split_blocks(const std::vector<int>& blocks,
                                                           double fraction, std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("training fraction must lie in (0,1)");
  }
  const auto n = static_cast<int>(blocks.size());
  if (n < 2) throw std::invalid_argument("need at least 2 blocks to split");
  const int n_train = std::clamp(static_cast<int>(std::floor(fraction * n + 0.5)), 1, n - 1);

  std::vector<int> shuffled = blocks;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<int> train(shuffled.begin(), shuffled.begin() + n_train);
  std::vector<int> test(shuffled.begin() + n_train, shuffled.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::vector<Epoch> repetition_average(std::span<const Epoch> block_epochs, int r) {
  if (r < 1) throw std::invalid_argument("repetition count must be >= 1");
  // slots[rep][class-order j], targets then nontargets
  std::map<int, std::vector<const Epoch*>> targets, nontargets;
  for (const Epoch& e : block_epochs) {
    (e.label == EpochLabel::TA ? targets : nontargets)[e.repetition_index].push_back(&e);
  }
  if (static_cast<int>(targets.size()) < r || static_cast<int>(nontargets.size()) < r) {
    throw std::invalid_argument("block has fewer than " + std::to_string(r) + " repetitions");
  }

  auto average_slot = [&](const std::map<int, std::vector<const Epoch*>>& by_rep, int j) {
    Epoch out;
    int used = 0;
    auto it = by_rep.begin();
    for (int rep = 0; rep < r; ++rep, ++it) {
      const auto& slot = it->second;
      if (j >= static_cast<int>(slot.size())) {
        throw std::invalid_argument("repetition " + std::to_string(it->first) +
                                    " is missing flash slots");
      }
      const Epoch& src = *slot[static_cast<std::size_t>(j)];
      if (used == 0) {
        out = src;
        out.repetition_index = 0;
      } else {
        out.data += src.data;
      }
      ++used;
    }
    out.data /= used;
    return out;
  };

  const int n_ta = static_cast<int>(targets.begin()->second.size());
  const int n_nt = static_cast<int>(nontargets.begin()->second.size());
  std::vector<Epoch> out;
  out.reserve(static_cast<std::size_t>(n_ta + n_nt));
  for (int j = 0; j < n_ta; ++j) out.push_back(average_slot(targets, j));
  for (int j = 0; j < n_nt; ++j) out.push_back(average_slot(nontargets, j));
  return out;
}

SpdMatrix feature_of(const MdmModel& model, const Epoch& epoch) {
  return epoch_feature(apply_filter(model.filter, epoch.data), model.prototype, model.mode);
}

TrainedModel train_model(const SessionEpochs& session, const std::vector<int>& train_blocks,
                         int n_components, FeatureMode mode) {
  std::vector<Epoch> ta, nt;
  for (std::size_t i = 0; i < session.events.size(); ++i) {
    const int b = session.events[i].block_index;
    if (std::find(train_blocks.begin(), train_blocks.end(), b) == train_blocks.end()) continue;
    (session.set.epochs[i].label == EpochLabel::TA ? ta : nt).push_back(session.set.epochs[i]);
  }
  if (ta.empty() || nt.empty()) {
    throw std::invalid_argument("training blocks must contain both target and nontarget epochs");
  }

  TrainedModel trained;
  trained.train_blocks = train_blocks;
  std::sort(trained.train_blocks.begin(), trained.train_blocks.end());

  MdmModel& model = trained.model;
  model.mode = mode;
  model.filter = fit_spatial_filter(ta, nt, n_components);

  Eigen::MatrixXd ta_mean = Eigen::MatrixXd::Zero(ta.front().data.rows(), ta.front().data.cols());
  for (const Epoch& e : ta) ta_mean += e.data;
  ta_mean /= static_cast<double>(ta.size());
  model.prototype = apply_filter(model.filter, ta_mean);

  std::vector<SpdMatrix> ta_features, nt_features;
  ta_features.reserve(ta.size());
  nt_features.reserve(nt.size());
  for (const Epoch& e : ta) ta_features.push_back(feature_of(model, e));
  for (const Epoch& e : nt) nt_features.push_back(feature_of(model, e));

  const MdmModel means = mdm_fit(ta_features, nt_features, mode);
  model.mean_ta = means.mean_ta;
  model.mean_nt = means.mean_nt;
  return trained;
}

int select_symbol(std::span<const double> flash_scores,
                  std::span<const std::array<int, kGroupSize>> flash_groups) {
  if (flash_scores.size() != flash_groups.size() || flash_scores.empty()) {
    throw std::invalid_argument("select_symbol: need matching, nonempty scores and groups");
  }
  std::array<double, kSymbolCount> symbol_scores{};
  for (std::size_t i = 0; i < flash_scores.size(); ++i) {
    for (int sym : flash_groups[i]) {
      symbol_scores[static_cast<std::size_t>(sym)] += flash_scores[i];
    }
  }
  int best = 0;
  for (int s = 1; s < kSymbolCount; ++s) {
    if (symbol_scores[static_cast<std::size_t>(s)] > symbol_scores[static_cast<std::size_t>(best)]) {
      best = s;
    }
  }
  return best;
}

double hit_rate(const TrainedModel& trained, const SessionEpochs& session,
                const std::vector<int>& test_blocks, int r) {
  if (test_blocks.empty()) throw std::invalid_argument("hit_rate: empty test set");
  check_disjoint(trained.train_blocks, test_blocks);
  int hits = 0;
  for (int b : test_blocks) {
    const std::vector<std::size_t> idx = session.block_epochs(b);
    if (idx.empty()) throw std::invalid_argument("test block " + std::to_string(b) + " has no epochs");
    std::vector<double> scores;
    std::vector<std::array<int, kGroupSize>> groups;
    for (std::size_t i : idx) {
      if (session.events[i].repetition_index >= r) continue;
      scores.push_back(mdm_score(trained.model, feature_of(trained.model, session.set.epochs[i])));
      groups.push_back(session.events[i].flash_group);
    }
    if (select_symbol(scores, groups) == session.events[idx.front()].target_symbol) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_blocks.size());
}

double balanced_accuracy(long a, long b, long c, long d) {
  if (a + b <= 0 || c + d <= 0) {
    throw std::invalid_argument("balanced accuracy needs flashes of both classes");
  }
  return 0.5 * (static_cast<double>(a) / static_cast<double>(a + b) +
                static_cast<double>(c) / static_cast<double>(c + d));
}

double roc_auc(std::span<const double> scores, std::span<const EpochLabel> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  // midranks over ties
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double ta_rank_sum = 0.0;
  std::size_t n_ta = 0, n_nt = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == EpochLabel::TA) {
      ta_rank_sum += rank[k];
      ++n_ta;
    } else {
      ++n_nt;
    }
  }
  if (n_ta == 0 || n_nt == 0) throw std::invalid_argument("roc_auc needs both labels");
  return (ta_rank_sum - 0.5 * static_cast<double>(n_ta) * static_cast<double>(n_ta + 1)) /
         (static_cast<double>(n_ta) * static_cast<double>(n_nt));
}

ItrResult itr(int n_symbols, double accuracy, double seconds_per_selection) {
  if (n_symbols < 2) throw std::invalid_argument("itr: need at least 2 symbols");
  if (!(seconds_per_selection > 0)) throw std::invalid_argument("itr: selection time must be positive");
  const double chance = 1.0 / n_symbols;
  if (accuracy < chance) return {0.0, true};
  const double p = std::min(accuracy, 1.0);
  double bits = std::log2(static_cast<double>(n_symbols));
  if (p > 0.0) bits += p * std::log2(p);
  if (p < 1.0) bits += (1.0 - p) * std::log2((1.0 - p) / (n_symbols - 1));
  return {std::max(0.0, bits) * 60.0 / seconds_per_selection, false};
}

SplitMetrics evaluate_split(const TrainedModel& trained, const SessionEpochs& session,
                            const std::vector<int>& test_blocks, int r) {
  const std::array<int, 1> reps{r};
  return evaluate_repetitions(trained, session, test_blocks, reps).front();
}

std::vector<SplitMetrics> evaluate_repetitions(const TrainedModel& trained,
                                               const SessionEpochs& session,
                                               const std::vector<int>& test_blocks,
                                               std::span<const int> repetitions) {
  if (test_blocks.empty()) throw std::invalid_argument("evaluate: empty test set");
  check_disjoint(trained.train_blocks, test_blocks);

  struct BlockData {
    std::vector<Epoch> epochs;                          // event order
    std::vector<double> flash_scores;                   // aligned with epochs
    std::vector<std::array<int, kGroupSize>> groups;    // aligned with epochs
    std::vector<int> flash_repetition;                  // aligned with epochs
    int target{0};
  };
  std::vector<BlockData> blocks;
  blocks.reserve(test_blocks.size());
  for (int b : test_blocks) {
    const std::vector<std::size_t> idx = session.block_epochs(b);
    if (idx.empty()) throw std::invalid_argument("test block " + std::to_string(b) + " has no epochs");
    BlockData data;
    data.target = session.events[idx.front()].target_symbol;
    for (std::size_t i : idx) {
      data.epochs.push_back(session.set.epochs[i]);
      data.groups.push_back(session.events[i].flash_group);
      data.flash_repetition.push_back(session.events[i].repetition_index);
      data.flash_scores.push_back(
          mdm_score(trained.model, feature_of(trained.model, session.set.epochs[i])));
    }
    blocks.push_back(std::move(data));
  }

  std::vector<SplitMetrics> out;
  out.reserve(repetitions.size());
  for (int r : repetitions) {
    SplitMetrics m;
    int hits = 0;
    long a = 0, b = 0, c = 0, d = 0;
    std::vector<double> scores;
    std::vector<EpochLabel> labels;
    for (const BlockData& block : blocks) {
      std::vector<double> flash_scores;
      std::vector<std::array<int, kGroupSize>> groups;
      for (std::size_t i = 0; i < block.epochs.size(); ++i) {
        if (block.flash_repetition[i] >= r) continue;
        flash_scores.push_back(block.flash_scores[i]);
        groups.push_back(block.groups[i]);
      }
      if (select_symbol(flash_scores, groups) == block.target) ++hits;

      for (const Epoch& e : repetition_average(block.epochs, r)) {
        const double s = mdm_score(trained.model, feature_of(trained.model, e));
        scores.push_back(s);
        labels.push_back(e.label);
        if (e.label == EpochLabel::TA) {
          (s > 0 ? c : d) += 1;
        } else {
          (s > 0 ? b : a) += 1;
        }
      }
    }
    m.hr = static_cast<double>(hits) / static_cast<double>(blocks.size());
    m.ba = balanced_accuracy(a, b, c, d);
    m.auc = roc_auc(scores, labels);
    out.push_back(m);
  }
  return out;
}

MetricsReport training_curve(const SessionEpochs& session, const CvConfig& cfg, int n_workers) {
  if (cfg.fractions.empty() || cfg.repetitions.empty() || cfg.n_random_sets < 1) {
    throw std::invalid_argument("training_curve: empty cross-validation grid");
  }
  const std::vector<int> blocks = session.block_ids();

  MetricsReport report;
  report.subject = session.subject;
  report.condition = session.condition;
  report.fractions = cfg.fractions;
  report.repetitions = cfg.repetitions;

  const std::size_t n_fracs = cfg.fractions.size();
  const std::size_t n_reps = cfg.repetitions.size();
  const int n_tasks = static_cast<int>(n_fracs) * cfg.n_random_sets;

  // results[task][rep]; every task writes only its own row
  std::vector<std::vector<SplitMetrics>> results(static_cast<std::size_t>(n_tasks),
                                                 std::vector<SplitMetrics>(n_reps));
  parallel_for(n_tasks, n_workers, [&](int task) {
    const std::size_t frac_idx = static_cast<std::size_t>(task) / cfg.n_random_sets;
    std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(task));
    const auto [train, test] = split_blocks(blocks, cfg.fractions[frac_idx], rng);
    const TrainedModel trained = train_model(session, train, cfg.n_components, cfg.feature_mode);
    results[static_cast<std::size_t>(task)] =
        evaluate_repetitions(trained, session, test, cfg.repetitions);
  });

  report.cells.assign(n_fracs, std::vector<MetricCell>(n_reps));
  for (std::size_t fi = 0; fi < n_fracs; ++fi) {
    for (std::size_t ri = 0; ri < n_reps; ++ri) {
      std::vector<double> hr, ba, auc;
      hr.reserve(static_cast<std::size_t>(cfg.n_random_sets));
      for (int s = 0; s < cfg.n_random_sets; ++s) {
        const SplitMetrics& sm = results[fi * static_cast<std::size_t>(cfg.n_random_sets) +
                                         static_cast<std::size_t>(s)][ri];
        hr.push_back(sm.hr);
        ba.push_back(sm.ba);
        auc.push_back(sm.auc);
      }
      MetricCell& cell = report.cells[fi][ri];
      cell.hr_mean = mean_of(hr);
      cell.hr_se = std_error_of(hr, cell.hr_mean);
      cell.ba_mean = mean_of(ba);
      cell.ba_se = std_error_of(ba, cell.ba_mean);
      cell.auc_mean = mean_of(auc);
      cell.auc_se = std_error_of(auc, cell.auc_mean);
      cell.itr_bits_per_minute =
          itr(kSymbolCount, cell.hr_mean, selection_seconds(cfg.timing, cfg.repetitions[ri]))
              .bits_per_minute;
    }
  }

  std::vector<double> r_axis(n_reps);
  for (std::size_t ri = 0; ri < n_reps; ++ri) r_axis[ri] = cfg.repetitions[ri];
  report.repetition_curve_auc.resize(n_fracs);
  for (std::size_t fi = 0; fi < n_fracs; ++fi) {
    std::vector<double> hr(n_reps), ba(n_reps), auc(n_reps);
    for (std::size_t ri = 0; ri < n_reps; ++ri) {
      hr[ri] = report.cells[fi][ri].hr_mean;
      ba[ri] = report.cells[fi][ri].ba_mean;
      auc[ri] = report.cells[fi][ri].auc_mean;
    }
    report.repetition_curve_auc[fi] = {trapezoid(r_axis, hr), trapezoid(r_axis, ba),
                                       trapezoid(r_axis, auc)};
  }
  report.fraction_curve_auc.resize(n_reps);
  for (std::size_t ri = 0; ri < n_reps; ++ri) {
    std::vector<double> hr(n_fracs), ba(n_fracs), auc(n_fracs);
    for (std::size_t fi = 0; fi < n_fracs; ++fi) {
      hr[fi] = report.cells[fi][ri].hr_mean;
      ba[fi] = report.cells[fi][ri].ba_mean;
      auc[fi] = report.cells[fi][ri].auc_mean;
    }
    report.fraction_curve_auc[ri] = {trapezoid(report.fractions, hr),
                                     trapezoid(report.fractions, ba),
                                     trapezoid(report.fractions, auc)};
  }
  return report;
}

std::string metrics_report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["subject"] = report.subject;
  j["condition"] = std::string(to_string(report.condition));
  j["fractions"] = report.fractions;
  j["repetitions"] = report.repetitions;
  j["cells"] = nlohmann::json::array();
  for (std::size_t fi = 0; fi < report.fractions.size(); ++fi) {
    for (std::size_t ri = 0; ri < report.repetitions.size(); ++ri) {
      const MetricCell& c = report.cells[fi][ri];
      j["cells"].push_back({{"fraction", report.fractions[fi]},
                            {"repetitions", report.repetitions[ri]},
                            {"hr_mean", c.hr_mean},
                            {"hr_se", c.hr_se},
                            {"ba_mean", c.ba_mean},
                            {"ba_se", c.ba_se},
                            {"auc_mean", c.auc_mean},
                            {"auc_se", c.auc_se},
                            {"itr_bits_per_minute", c.itr_bits_per_minute}});
    }
  }
  j["repetition_curve_auc"] = nlohmann::json::array();
  for (std::size_t fi = 0; fi < report.repetition_curve_auc.size(); ++fi) {
    const CurveAuc& c = report.repetition_curve_auc[fi];
    j["repetition_curve_auc"].push_back(
        {{"fraction", report.fractions[fi]}, {"hr", c.hr}, {"ba", c.ba}, {"auc", c.auc}});
  }
  j["fraction_curve_auc"] = nlohmann::json::array();
  for (std::size_t ri = 0; ri < report.fraction_curve_auc.size(); ++ri) {
    const CurveAuc& c = report.fraction_curve_auc[ri];
    j["fraction_curve_auc"].push_back(
        {{"repetitions", report.repetitions[ri]}, {"hr", c.hr}, {"ba", c.ba}, {"auc", c.auc}});
  }
  return j.dump(2);
}

}  // namespace p300
