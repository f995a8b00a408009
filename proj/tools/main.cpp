#include "p300/epochs.hpp"
#include "p300/eval.hpp"
#include "p300/layout.hpp"
#include "p300/preprocess.hpp"
#include "p300/recording_io.hpp"
#include "p300/rng.hpp"
#include "p300/sim.hpp"
#include "p300/stats.hpp"
#include "p300/svg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

using namespace p300;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitComputation = 1;
constexpr int kExitUsage = 2;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct RunConfig {
  std::vector<std::string> inputs;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int workers{1};
  std::string layout_file;  // empty: built-in montage

  PreprocessConfig preprocess;
  LatencyTable latency;
  double erp_window_seconds{1.0};
  double eval_window_seconds{0.6};
  std::vector<std::string> erp_channels{"CZ", "PZ", "OZ"};

  CvConfig cv;
  PermutationConfig perm;

  int sim_subjects{3};
  std::vector<std::string> sim_conditions{"PC", "VR"};
  std::vector<double> sim_snr{1.0};
  double sim_noise_uv{10.0};
  FlashTiming sim_timing;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("bad JSON in " + path.string() + ": " + e.what());
  }
  cfg.inputs = j.value("inputs", cfg.inputs);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.workers = j.value("workers", cfg.workers);
  cfg.layout_file = j.value("layout", cfg.layout_file);
  if (j.contains("preprocess")) {
    const json& p = j.at("preprocess");
    cfg.preprocess.band_low_hz = p.value("band_low_hz", cfg.preprocess.band_low_hz);
    cfg.preprocess.band_high_hz = p.value("band_high_hz", cfg.preprocess.band_high_hz);
    cfg.preprocess.band_order = p.value("band_order", cfg.preprocess.band_order);
    cfg.preprocess.notch_hz = p.value("notch_hz", cfg.preprocess.notch_hz);
    cfg.preprocess.notch_q = p.value("notch_q", cfg.preprocess.notch_q);
    cfg.preprocess.decimation = p.value("decimation", cfg.preprocess.decimation);
  }
  if (j.contains("latency_ms")) {
    cfg.latency.pc_mean_ms = j.at("latency_ms").value("PC", cfg.latency.pc_mean_ms);
    cfg.latency.vr_mean_ms = j.at("latency_ms").value("VR", cfg.latency.vr_mean_ms);
  }
  if (j.contains("erp")) {
    cfg.erp_window_seconds = j.at("erp").value("window_seconds", cfg.erp_window_seconds);
    cfg.erp_channels = j.at("erp").value("channels", cfg.erp_channels);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    cfg.eval_window_seconds = e.value("window_seconds", cfg.eval_window_seconds);
    cfg.cv.fractions = e.value("fractions", cfg.cv.fractions);
    cfg.cv.n_random_sets = e.value("n_random_sets", cfg.cv.n_random_sets);
    cfg.cv.repetitions = e.value("repetitions", cfg.cv.repetitions);
    cfg.cv.n_components = e.value("n_components", cfg.cv.n_components);
    if (e.contains("feature_mode")) {
      cfg.cv.feature_mode = feature_mode_from_string(e.at("feature_mode").get<std::string>());
    }
    cfg.cv.timing.soa_ms = e.value("soa_ms", cfg.cv.timing.soa_ms);
    cfg.cv.timing.pause_ms = e.value("pause_ms", cfg.cv.timing.pause_ms);
  }
  if (j.contains("stats")) {
    const json& s = j.at("stats");
    cfg.perm.n_permutations = s.value("n_permutations", cfg.perm.n_permutations);
    cfg.perm.cluster_alpha = s.value("cluster_alpha", cfg.perm.cluster_alpha);
    cfg.perm.alpha = s.value("alpha", cfg.perm.alpha);
  }
  if (j.contains("simulate")) {
    const json& s = j.at("simulate");
    cfg.sim_subjects = s.value("subjects", cfg.sim_subjects);
    cfg.sim_conditions = s.value("conditions", cfg.sim_conditions);
    cfg.sim_snr = s.value("snr", cfg.sim_snr);
    cfg.sim_noise_uv = s.value("noise_uv", cfg.sim_noise_uv);
    cfg.sim_timing.soa_ms = s.value("soa_ms", cfg.sim_timing.soa_ms);
    cfg.sim_timing.pause_ms = s.value("pause_ms", cfg.sim_timing.pause_ms);
  }
}

json config_echo(const RunConfig& cfg, const std::string& command) {
  json j;
  j["command"] = command;
  j["inputs"] = cfg.inputs;
  // out_dir and workers are deliberately not echoed: neither affects results,
  // and reruns into other directories or with other worker counts must stay
  // byte-identical
  if (cfg.seed) j["seed"] = *cfg.seed;
  j["preprocess"] = {{"band_low_hz", cfg.preprocess.band_low_hz},
                     {"band_high_hz", cfg.preprocess.band_high_hz},
                     {"band_order", cfg.preprocess.band_order},
                     {"notch_hz", cfg.preprocess.notch_hz},
                     {"notch_q", cfg.preprocess.notch_q},
                     {"decimation", cfg.preprocess.decimation}};
  j["latency_ms"] = {{"PC", cfg.latency.pc_mean_ms}, {"VR", cfg.latency.vr_mean_ms}};
  j["erp"] = {{"window_seconds", cfg.erp_window_seconds}, {"channels", cfg.erp_channels}};
  j["eval"] = {{"window_seconds", cfg.eval_window_seconds},
               {"fractions", cfg.cv.fractions},
               {"n_random_sets", cfg.cv.n_random_sets},
               {"repetitions", cfg.cv.repetitions},
               {"n_components", cfg.cv.n_components},
               {"feature_mode", std::string(to_string(cfg.cv.feature_mode))},
               {"soa_ms", cfg.cv.timing.soa_ms},
               {"pause_ms", cfg.cv.timing.pause_ms}};
  j["stats"] = {{"n_permutations", cfg.perm.n_permutations},
                {"cluster_alpha", cfg.perm.cluster_alpha},
                {"alpha", cfg.perm.alpha}};
  j["simulate"] = {{"subjects", cfg.sim_subjects},    {"conditions", cfg.sim_conditions},
                   {"snr", cfg.sim_snr},              {"noise_uv", cfg.sim_noise_uv},
                   {"soa_ms", cfg.sim_timing.soa_ms}, {"pause_ms", cfg.sim_timing.pause_ms}};
  return j;
}

// collects output names and writes the manifest last
class OutputTracker {
 public:
  OutputTracker(fs::path dir, json echo) : dir_(std::move(dir)), echo_(std::move(echo)) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) {
    outputs_.push_back(name);
    return dir_ / name;
  }

  void write_text(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
  }

  void finish() {
    json manifest;
    manifest["config"] = echo_;
    manifest["outputs"] = outputs_;
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  json echo_;
  std::vector<std::string> outputs_;
};

void require_inputs_exist(const RunConfig& cfg) {
  if (cfg.inputs.empty()) throw UsageError("no input files given (--in)");
  for (const std::string& path : cfg.inputs) {
    if (!fs::exists(path)) throw UsageError("no such input file: " + path);
  }
}

void require_seed(const RunConfig& cfg) {
  if (!cfg.seed) throw UsageError("this command is stochastic, --seed is mandatory");
}

void require_out(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw UsageError("--out is required");
}

RecordingFormat format_of(const fs::path& path) {
  return path.extension() == ".csv" ? RecordingFormat::csv : RecordingFormat::columnar_binary;
}

ElectrodeLayout layout_of(const RunConfig& cfg) {
  return cfg.layout_file.empty() ? default_layout() : load_layout(cfg.layout_file);
}

std::string stem_of(const fs::path& path) { return path.stem().string(); }

// ---- simulate ---------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
  require_out(cfg);
  require_seed(cfg);
  for (double snr : cfg.sim_snr) {
    if (snr < 0) throw UsageError("snr must be nonnegative");
  }
  if (cfg.sim_subjects < 1) throw UsageError("need at least one subject");

  OutputTracker out(cfg.out_dir, config_echo(cfg, "simulate"));
  std::uint64_t stream = 0;
  for (int s = 1; s <= cfg.sim_subjects; ++s) {
    char subject[16];
    std::snprintf(subject, sizeof subject, "sub%02d", s);
    for (const std::string& cond_name : cfg.sim_conditions) {
      const Condition cond = condition_from_string(cond_name);
      for (double snr : cfg.sim_snr) {
        std::mt19937_64 rng = make_rng(*cfg.seed, stream++);
        const SessionSchedule schedule = gen_session(rng, cfg.sim_timing);
        SynthOptions opt;
        opt.condition = cond;
        opt.subject = subject;
        opt.noise_uv = cfg.sim_noise_uv;
        const Recording rec = synth_recording(schedule, default_templates(cond), snr, rng, opt);

        std::string name = std::string(subject) + "_" + cond_name;
        if (cfg.sim_snr.size() > 1) name += "_snr" + fmt(snr);
        name += ".rec";
        save_recording(rec, out.path(name), RecordingFormat::columnar_binary);
        out.path(name + ".f32");
        out.path(name + ".events.csv");

        // the protocol's random feedback, drawn per block at p = 0.7
        std::string feedback = "block,feedback\n";
        for (int b = 0; b < kBlocksPerSession; ++b) {
          feedback += std::to_string(b) + "," +
                      (draw_feedback(rng) == Feedback::correct ? "correct" : "incorrect") + "\n";
        }
        out.write_text(name + ".feedback.csv", feedback);
      }
    }
  }
  out.finish();
  return kExitOk;
}

// ---- preprocess -------------------------------------------------------------

int cmd_preprocess(const RunConfig& cfg) {
  require_out(cfg);
  require_inputs_exist(cfg);

  // load everything up front: a bad input must not leave partial outputs
  std::vector<Recording> recordings;
  for (const std::string& input : cfg.inputs) {
    recordings.push_back(load_recording(input, format_of(input)));
  }

  OutputTracker out(cfg.out_dir, config_echo(cfg, "preprocess"));
  json provenance;
  provenance["config"] = config_echo(cfg, "preprocess");
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    const Recording pre = preprocess(recordings[i], cfg.preprocess, cfg.workers);
    const std::string name = stem_of(cfg.inputs[i]) + "_preproc.rec";
    save_recording(pre, out.path(name), RecordingFormat::columnar_binary);
    out.path(name + ".f32");
    out.path(name + ".events.csv");
    const IirFilter band =
        design_bandpass(cfg.preprocess.band_low_hz, cfg.preprocess.band_high_hz,
                        cfg.preprocess.band_order, recordings[i].sample_rate);
    const IirFilter notch = design_notch(cfg.preprocess.notch_hz, cfg.preprocess.notch_q,
                                         recordings[i].sample_rate);
    provenance["filters"][stem_of(cfg.inputs[i])] = {
        {"bandpass", json::parse(filter_to_json(band))},
        {"notch", json::parse(filter_to_json(notch))}};
  }
  out.write_text("provenance.json", provenance.dump(2) + "\n");
  out.finish();
  return kExitOk;
}

// ---- epoch ------------------------------------------------------------------

void save_epochs(const SessionEpochs& session, int dropped, const fs::path& path) {
  json header;
  header["format"] = "p300-epochs";
  header["version"] = 1;
  header["subject"] = session.subject;
  header["condition"] = std::string(to_string(session.condition));
  header["sample_rate"] = session.set.sample_rate;
  header["window_seconds"] = session.set.window_seconds;
  header["channels"] = session.set.channel_labels;
  header["n_epochs"] = session.set.epochs.size();
  header["dropped"] = dropped;
  json labels = json::array(), blocks = json::array(), repetitions = json::array();
  for (std::size_t i = 0; i < session.set.epochs.size(); ++i) {
    labels.push_back(std::string(to_string(session.set.epochs[i].label)));
    blocks.push_back(session.events[i].block_index);
    repetitions.push_back(session.events[i].repetition_index);
  }
  header["labels"] = std::move(labels);
  header["blocks"] = std::move(blocks);
  header["repetitions"] = std::move(repetitions);
  header["data_file"] = path.filename().string() + ".f32";
  {
    std::ofstream out(path, std::ios::binary);
    out << header.dump(2) << "\n";
  }
  std::ofstream data(path.string() + ".f32", std::ios::binary);
  for (const Epoch& e : session.set.epochs) {
    for (Eigen::Index c = 0; c < e.data.rows(); ++c) {
      for (Eigen::Index s = 0; s < e.data.cols(); ++s) {
        const float v = static_cast<float>(e.data(c, s));
        data.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
}

int cmd_epoch(const RunConfig& cfg) {
  require_out(cfg);
  require_inputs_exist(cfg);
  OutputTracker out(cfg.out_dir, config_echo(cfg, "epoch"));
  std::string counts = "input,subject,condition,window_seconds,ta,nt,dropped\n";
  for (const std::string& input : cfg.inputs) {
    const Recording rec = load_recording(input, format_of(input));
    EpochExtraction ex = extract_epochs(rec, cfg.erp_window_seconds, cfg.latency);
    SessionEpochs session;
    session.subject = rec.subject_id;
    session.condition = rec.condition;
    for (std::size_t i : ex.kept_events) session.events.push_back(rec.events[i]);
    session.set = std::move(ex.set);
    save_epochs(session, ex.dropped, out.path(stem_of(input) + ".epochs"));
    out.path(stem_of(input) + ".epochs.f32");
    counts += stem_of(input) + "," + rec.subject_id + "," + std::string(to_string(rec.condition)) +
              "," + fmt(cfg.erp_window_seconds) + "," +
              std::to_string(session.set.count(EpochLabel::TA)) + "," +
              std::to_string(session.set.count(EpochLabel::NT)) + "," + std::to_string(ex.dropped) +
              "\n";
  }
  out.write_text("epoch_counts.csv", counts);
  out.finish();
  return kExitOk;
}

// ---- erp / stats ------------------------------------------------------------

struct SubjectWaves {
  std::string subject;
  Condition condition;
  Eigen::MatrixXd ta_mean;
  Eigen::MatrixXd nt_mean;
  DifferenceWave diff;
};

std::vector<SubjectWaves> collect_waves(const RunConfig& cfg) {
  std::vector<SubjectWaves> waves;
  for (const std::string& input : cfg.inputs) {
    const Recording rec = load_recording(input, format_of(input));
    const EpochExtraction ex = extract_epochs(rec, cfg.erp_window_seconds, cfg.latency);
    SubjectWaves w;
    w.subject = rec.subject_id;
    w.condition = rec.condition;
    w.ta_mean = average_epochs(ex.set, EpochLabel::TA);
    w.nt_mean = average_epochs(ex.set, EpochLabel::NT);
    w.diff.data = w.ta_mean - w.nt_mean;
    waves.push_back(std::move(w));
  }
  return waves;
}

// per-subject difference waves for subjects recorded in both conditions
std::pair<std::vector<DifferenceWave>, std::vector<DifferenceWave>> paired_waves(
    const std::vector<SubjectWaves>& waves) {
  std::map<std::string, std::pair<const SubjectWaves*, const SubjectWaves*>> by_subject;
  for (const SubjectWaves& w : waves) {
    auto& slot = by_subject[w.subject];
    (w.condition == Condition::VR ? slot.first : slot.second) = &w;
  }
  std::vector<DifferenceWave> vr, pc;
  for (const auto& [subject, pair] : by_subject) {
    if (pair.first && pair.second) {
      vr.push_back(pair.first->diff);
      pc.push_back(pair.second->diff);
    }
  }
  return {std::move(vr), std::move(pc)};
}

std::optional<ClusterResult> run_cluster_test(const RunConfig& cfg,
                                              const std::vector<SubjectWaves>& waves,
                                              const ElectrodeLayout& layout) {
  auto [vr, pc] = paired_waves(waves);
  if (vr.size() < 2) return std::nullopt;
  PermutationConfig perm = cfg.perm;
  perm.seed = *cfg.seed;
  return permutation_test(vr, pc, layout, perm, cfg.workers);
}

std::string wave_csv(const std::vector<SubjectWaves>& waves, double fs,
                     const std::vector<std::string>& channels) {
  std::map<Condition, std::vector<const SubjectWaves*>> by_cond;
  for (const SubjectWaves& w : waves) by_cond[w.condition].push_back(&w);

  std::string csv = "condition,wave,channel,time_ms,mean,std_error\n";
  for (const auto& [cond, group] : by_cond) {
    auto emit = [&](const std::string& name, auto accessor) {
      std::vector<DifferenceWave> stack;
      for (const SubjectWaves* w : group) stack.push_back({accessor(*w)});
      const GrandAverage g = grand_average(stack);
      for (Eigen::Index c = 0; c < g.mean.rows(); ++c) {
        for (Eigen::Index s = 0; s < g.mean.cols(); ++s) {
          csv += std::string(to_string(cond)) + "," + name + "," +
                 channels[static_cast<std::size_t>(c)] + "," +
                 fmt(1000.0 * static_cast<double>(s) / fs) + "," + fmt(g.mean(c, s)) + "," +
                 fmt(g.std_error(c, s)) + "\n";
        }
      }
    };
    emit("target", [](const SubjectWaves& w) { return w.ta_mean; });
    emit("nontarget", [](const SubjectWaves& w) { return w.nt_mean; });
    emit("difference", [](const SubjectWaves& w) { return w.diff.data; });
  }
  return csv;
}

int cmd_erp(const RunConfig& cfg) {
  require_out(cfg);
  require_inputs_exist(cfg);
  const ElectrodeLayout layout = layout_of(cfg);
  const std::vector<SubjectWaves> waves = collect_waves(cfg);
  const double fs = 512.0 / cfg.preprocess.decimation;

  std::set<Condition> conditions;
  for (const SubjectWaves& w : waves) conditions.insert(w.condition);

  OutputTracker out(cfg.out_dir, config_echo(cfg, "erp"));
  out.write_text("erp_grand_average.csv", wave_csv(waves, fs, layout.labels));

  // comparison overlay needs both conditions and a seed for the permutations
  std::optional<ClusterResult> clusters;
  if (conditions.size() == 2 && cfg.seed) {
    clusters = run_cluster_test(cfg, waves, layout);
    if (clusters) {
      out.write_text("clusters.json", cluster_result_to_json(*clusters) + "\n");
      out.write_text("cluster_mask.csv", cluster_mask_csv(*clusters, layout));
    }
  }

  const std::vector<PeakWindow> peak_windows{{"N100", 60.0, 180.0, false},
                                             {"P200", 150.0, 320.0, true},
                                             {"P300", 300.0, 520.0, true},
                                             {"N700", 450.0, 800.0, false}};
  std::string peaks = "condition,component,channel,latency_ms,amplitude_uv\n";
  std::map<Condition, GrandAverage> grand_diff;
  for (Condition cond : conditions) {
    std::vector<DifferenceWave> stack;
    for (const SubjectWaves& w : waves) {
      if (w.condition == cond) stack.push_back(w.diff);
    }
    grand_diff[cond] = grand_average(stack);
    for (const PeakRow& row : peak_summary(grand_diff[cond].mean, fs, layout.labels, peak_windows)) {
      peaks += std::string(to_string(cond)) + "," + row.component + "," + row.channel + "," +
               fmt(row.latency_ms) + "," + fmt(row.amplitude_uv) + "\n";
    }
  }
  out.write_text("erp_peaks.csv", peaks);

  for (const std::string& channel : cfg.erp_channels) {
    const int ch = layout.index_of(channel);
    if (ch < 0) throw std::runtime_error("channel " + channel + " not in the montage");
    SvgPlot plot;
    plot.title = "target minus nontarget at " + channel;
    plot.x_label = "time (ms)";
    plot.y_label = "amplitude (uV)";
    const std::array<const char*, 2> palette{"#1f6fb2", "#c23b22"};
    std::size_t color = 0;
    for (const auto& [cond, grand] : grand_diff) {
      SvgSeries series;
      series.label = std::string(to_string(cond));
      series.color = palette[color++ % palette.size()];
      for (Eigen::Index s = 0; s < grand.mean.cols(); ++s) {
        series.x.push_back(1000.0 * static_cast<double>(s) / fs);
        series.y.push_back(grand.mean(ch, s));
        series.band.push_back(grand.std_error(ch, s));
      }
      plot.series.push_back(std::move(series));
    }
    if (clusters) {
      for (const Cluster& cl : clusters->clusters) {
        if (!cl.significant) continue;
        int lo = std::numeric_limits<int>::max(), hi = -1;
        for (const auto& [c, s] : cl.members) {
          lo = std::min(lo, s);
          hi = std::max(hi, s);
        }
        plot.spans.push_back(
            {1000.0 * lo / fs, 1000.0 * hi / fs, "#fde1a8", "p=" + fmt(cl.p_value)});
      }
    }
    out.write_text("erp_" + channel + ".svg", render_svg(plot));
  }
  out.finish();
  return kExitOk;
}

int cmd_stats(const RunConfig& cfg) {
  require_out(cfg);
  require_inputs_exist(cfg);
  require_seed(cfg);
  const ElectrodeLayout layout = layout_of(cfg);
  const std::vector<SubjectWaves> waves = collect_waves(cfg);
  const auto clusters = run_cluster_test(cfg, waves, layout);
  if (!clusters) {
    throw std::runtime_error("the cluster test needs at least 2 subjects with both conditions");
  }
  OutputTracker out(cfg.out_dir, config_echo(cfg, "stats"));
  out.write_text("clusters.json", cluster_result_to_json(*clusters) + "\n");
  out.write_text("cluster_mask.csv", cluster_mask_csv(*clusters, layout));
  out.finish();
  std::cout << clusters->n_significant() << " significant cluster(s) of "
            << clusters->clusters.size() << " at alpha " << fmt(clusters->alpha) << "\n";
  return kExitOk;
}

// ---- train / eval -----------------------------------------------------------

SessionEpochs load_session(const RunConfig& cfg, const std::string& input) {
  const Recording rec = load_recording(input, format_of(input));
  return make_session_epochs(rec, cfg.eval_window_seconds, cfg.latency);
}

int cmd_train(const RunConfig& cfg, const std::string& blocks_arg, double train_fraction) {
  require_out(cfg);
  require_inputs_exist(cfg);
  if (cfg.inputs.size() != 1) throw UsageError("train expects exactly one recording");

  const SessionEpochs session = load_session(cfg, cfg.inputs[0]);
  std::vector<int> train_blocks;
  if (!blocks_arg.empty()) {
    std::istringstream tokens(blocks_arg);
    std::string token;
    while (std::getline(tokens, token, ',')) {
      train_blocks.push_back(std::stoi(token));
    }
  } else {
    require_seed(cfg);
    std::mt19937_64 rng = make_rng(*cfg.seed);
    train_blocks = split_blocks(session.block_ids(), train_fraction, rng).first;
  }

  const TrainedModel trained =
      train_model(session, train_blocks, cfg.cv.n_components, cfg.cv.feature_mode);
  OutputTracker out(cfg.out_dir, config_echo(cfg, "train"));
  json model = json::parse(mdm_model_to_json(trained.model));
  model["train_blocks"] = trained.train_blocks;
  model["subject"] = session.subject;
  model["condition"] = std::string(to_string(session.condition));
  out.write_text("model.json", model.dump(2) + "\n");
  out.finish();
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  require_out(cfg);
  require_inputs_exist(cfg);
  require_seed(cfg);

  std::vector<MetricsReport> reports;
  for (const std::string& input : cfg.inputs) {
    const SessionEpochs session = load_session(cfg, input);
    CvConfig cv = cfg.cv;
    cv.seed = derive_seed(*cfg.seed, std::hash<std::string>{}(
                                         session.subject + std::string(to_string(session.condition))));
    reports.push_back(training_curve(session, cv, cfg.workers));
  }

  OutputTracker out(cfg.out_dir, config_echo(cfg, "eval"));

  std::string csv =
      "subject,condition,fraction,repetitions,hr_mean,hr_se,ba_mean,ba_se,auc_mean,auc_se,itr_bits_per_minute\n";
  for (const MetricsReport& r : reports) {
    for (std::size_t fi = 0; fi < r.fractions.size(); ++fi) {
      for (std::size_t ri = 0; ri < r.repetitions.size(); ++ri) {
        const MetricCell& c = r.cells[fi][ri];
        csv += r.subject + "," + std::string(to_string(r.condition)) + "," + fmt(r.fractions[fi]) +
               "," + std::to_string(r.repetitions[ri]) + "," + fmt(c.hr_mean) + "," +
               fmt(c.hr_se) + "," + fmt(c.ba_mean) + "," + fmt(c.ba_se) + "," + fmt(c.auc_mean) +
               "," + fmt(c.auc_se) + "," + fmt(c.itr_bits_per_minute) + "\n";
      }
    }
  }
  out.write_text("metrics_long.csv", csv);

  std::string curve_csv = "subject,condition,axis,at,hr,ba,auc\n";
  for (const MetricsReport& r : reports) {
    for (std::size_t fi = 0; fi < r.fractions.size(); ++fi) {
      const CurveAuc& a = r.repetition_curve_auc[fi];
      curve_csv += r.subject + "," + std::string(to_string(r.condition)) + ",repetition," +
                   fmt(r.fractions[fi]) + "," + fmt(a.hr) + "," + fmt(a.ba) + "," + fmt(a.auc) +
                   "\n";
    }
    for (std::size_t ri = 0; ri < r.repetitions.size(); ++ri) {
      const CurveAuc& a = r.fraction_curve_auc[ri];
      curve_csv += r.subject + "," + std::string(to_string(r.condition)) + ",fraction," +
                   std::to_string(r.repetitions[ri]) + "," + fmt(a.hr) + "," + fmt(a.ba) + "," +
                   fmt(a.auc) + "\n";
    }
  }
  out.write_text("curve_auc.csv", curve_csv);

  json summary = json::array();
  for (const MetricsReport& r : reports) summary.push_back(json::parse(metrics_report_to_json(r)));
  out.write_text("metrics_summary.json", summary.dump(2) + "\n");

  std::map<Condition, std::vector<const MetricsReport*>> by_cond;
  for (const MetricsReport& r : reports) by_cond[r.condition].push_back(&r);
  for (const auto& [cond, group] : by_cond) {
    const MetricsReport& first = *group.front();
    // metric vs repetitions at the fraction closest to 60% training, the
    // usual reporting point
    std::size_t fi_60 = 0;
    for (std::size_t fi = 0; fi < first.fractions.size(); ++fi) {
      if (std::abs(first.fractions[fi] - 0.6) < std::abs(first.fractions[fi_60] - 0.6)) fi_60 = fi;
    }
    SvgPlot vs_r;
    vs_r.title = std::string(to_string(cond)) + ": metrics vs repetitions (training fraction " +
                 fmt(first.fractions[fi_60]) + ")";
    vs_r.x_label = "repetitions";
    vs_r.y_label = "metric";
    const std::array<std::pair<const char*, const char*>, 3> metric_colors{
        {{"HR", "#1f6fb2"}, {"BA", "#c23b22"}, {"ROC-AUC", "#2a7e3f"}}};
    for (const auto& [metric, color] : metric_colors) {
      SvgSeries series;
      series.label = metric;
      series.color = color;
      series.error_bars = true;
      for (std::size_t ri = 0; ri < first.repetitions.size(); ++ri) {
        double mean = 0.0, se = 0.0;
        for (const MetricsReport* r : group) {
          const MetricCell& c = r->cells[fi_60][ri];
          if (std::string_view(metric) == "HR") {
            mean += c.hr_mean;
            se += c.hr_se;
          } else if (std::string_view(metric) == "BA") {
            mean += c.ba_mean;
            se += c.ba_se;
          } else {
            mean += c.auc_mean;
            se += c.auc_se;
          }
        }
        series.x.push_back(first.repetitions[ri]);
        series.y.push_back(mean / static_cast<double>(group.size()));
        series.band.push_back(se / static_cast<double>(group.size()));
      }
      vs_r.series.push_back(std::move(series));
    }
    out.write_text("metrics_vs_r_" + std::string(to_string(cond)) + ".svg", render_svg(vs_r));

    SvgPlot vs_train;
    vs_train.title = std::string(to_string(cond)) + ": BA curve AUC vs training size";
    vs_train.x_label = "target training epochs";
    vs_train.y_label = "BA AUC over repetitions";
    SvgSeries series;
    series.label = "BA AUC";
    series.color = "#c23b22";
    for (std::size_t fi = 0; fi < first.fractions.size(); ++fi) {
      double mean = 0.0;
      for (const MetricsReport* r : group) mean += r->repetition_curve_auc[fi].ba;
      const int train_blocks =
          std::clamp(static_cast<int>(std::floor(first.fractions[fi] * 12 + 0.5)), 1, 11);
      series.x.push_back(10.0 * train_blocks);  // 10 target epochs per block
      series.y.push_back(mean / static_cast<double>(group.size()));
    }
    vs_train.series.push_back(std::move(series));
    out.write_text("metrics_vs_training_" + std::string(to_string(cond)) + ".svg",
                   render_svg(vs_train));
  }
  out.finish();
  return kExitOk;
}

// ---- report -----------------------------------------------------------------

int cmd_report(const RunConfig& cfg, const std::string& run_dir) {
  require_out(cfg);
  if (!fs::exists(run_dir)) throw UsageError("no such run directory: " + run_dir);

  json report;
  std::string md = "# run report\n\n";

  const fs::path manifest_path = fs::path(run_dir) / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    const json manifest = json::parse(in);
    report["manifest"] = manifest;
    md += "command: " + manifest.at("config").value("command", std::string("?")) + "\n\n";
    md += "## outputs\n\n";
    for (const auto& f : manifest.at("outputs")) md += "- " + f.get<std::string>() + "\n";
    md += "\n";
  }

  const fs::path metrics_path = fs::path(run_dir) / "metrics_summary.json";
  if (fs::exists(metrics_path)) {
    std::ifstream in(metrics_path);
    const json metrics = json::parse(in);
    report["n_sessions"] = metrics.size();
    md += "## classification\n\n";
    md += "| subject | condition | fraction | r | HR | BA | ROC-AUC | ITR (bit/min) |\n";
    md += "|---|---|---|---|---|---|---|---|\n";
    for (const auto& session : metrics) {
      for (const auto& cell : session.at("cells")) {
        md += "| " + session.at("subject").get<std::string>() + " | " +
              session.at("condition").get<std::string>() + " | " +
              fmt(cell.at("fraction").get<double>()) + " | " +
              std::to_string(cell.at("repetitions").get<int>()) + " | " +
              fmt(cell.at("hr_mean").get<double>()) + " | " +
              fmt(cell.at("ba_mean").get<double>()) + " | " +
              fmt(cell.at("auc_mean").get<double>()) + " | " +
              fmt(cell.at("itr_bits_per_minute").get<double>()) + " |\n";
      }
    }
    md += "\n";
  }

  const fs::path clusters_path = fs::path(run_dir) / "clusters.json";
  if (fs::exists(clusters_path)) {
    std::ifstream in(clusters_path);
    const json clusters = json::parse(in);
    report["n_significant_clusters"] = clusters.at("n_significant");
    md += "## cluster test\n\n";
    md += "- clusters: " + std::to_string(clusters.at("clusters").size()) + "\n";
    md += "- significant: " + clusters.at("n_significant").dump() + "\n";
    md += "- permutations: " + clusters.at("n_permutations").dump() + "\n\n";
  }

  OutputTracker out(cfg.out_dir, config_echo(cfg, "report"));
  out.write_text("report.md", md);
  out.write_text("report.json", report.dump(2) + "\n");
  out.finish();
  return kExitOk;
}

std::string scan_config_flag(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return std::string(arg.substr(9));
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offline P300 oddball analysis pipeline"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  std::string blocks_arg;
  std::string run_dir;
  double train_fraction = 0.5;
  std::uint64_t seed_flag = 0;

  // the config file provides defaults; flags given on the command line win
  try {
    config_file = scan_config_flag(argc, argv);
    if (!config_file.empty()) apply_config_file(cfg, config_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  app.add_option("--config", config_file, "declarative JSON config; flags win over it");

  auto add_common = [&](CLI::App* cmd, bool needs_inputs) {
    if (needs_inputs) cmd->add_option("--in", cfg.inputs, "input recordings");
    cmd->add_option("--out", cfg.out_dir, "output directory (created)");
    cmd->add_option("--seed", seed_flag, "rng seed; mandatory for stochastic commands")
        ->each([&](const std::string& v) { cfg.seed = std::stoull(v); });
    cmd->add_option("--workers", cfg.workers, "parallel worker threads");
    cmd->add_option("--layout", cfg.layout_file, "electrode layout JSON (default: built-in 16)");
    cmd->add_option("--config", config_file, "declarative JSON config; flags win over it");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic session corpus");
  add_common(simulate, false);
  simulate->add_option("--subjects", cfg.sim_subjects, "number of subjects");
  simulate->add_option("--conditions", cfg.sim_conditions, "PC and/or VR");
  simulate->add_option("--snr", cfg.sim_snr, "template-to-noise amplitude ratios");
  simulate->add_option("--noise-uv", cfg.sim_noise_uv, "background noise RMS in microvolts");
  simulate->add_option("--soa-ms", cfg.sim_timing.soa_ms, "flash onset asynchrony");
  simulate->add_option("--pause-ms", cfg.sim_timing.pause_ms, "feedback pause per block");

  CLI::App* preprocess_cmd = app.add_subcommand("preprocess", "bandpass, notch, decimate");
  add_common(preprocess_cmd, true);
  preprocess_cmd->add_option("--band-low", cfg.preprocess.band_low_hz, "bandpass low edge (Hz)");
  preprocess_cmd->add_option("--band-high", cfg.preprocess.band_high_hz, "bandpass high edge (Hz)");
  preprocess_cmd->add_option("--band-order", cfg.preprocess.band_order, "butterworth design order");
  preprocess_cmd->add_option("--notch", cfg.preprocess.notch_hz, "notch frequency (Hz)");
  preprocess_cmd->add_option("--notch-q", cfg.preprocess.notch_q, "notch quality factor");
  preprocess_cmd->add_option("--decimation", cfg.preprocess.decimation, "decimation factor");

  CLI::App* epoch_cmd = app.add_subcommand("epoch", "cut latency-corrected epochs");
  add_common(epoch_cmd, true);
  epoch_cmd->add_option("--window-seconds", cfg.erp_window_seconds, "epoch length");
  epoch_cmd->add_option("--latency-pc", cfg.latency.pc_mean_ms, "PC tag latency (ms)");
  epoch_cmd->add_option("--latency-vr", cfg.latency.vr_mean_ms, "VR tag latency (ms)");

  CLI::App* erp = app.add_subcommand("erp", "grand averages, peaks, plots, significance overlay");
  add_common(erp, true);
  erp->add_option("--channels", cfg.erp_channels, "channels to plot");
  erp->add_option("--window-seconds", cfg.erp_window_seconds, "epoch length");
  erp->add_option("--permutations", cfg.perm.n_permutations, "cluster-test permutations");

  CLI::App* stats = app.add_subcommand("stats", "paired cluster-based permutation test");
  add_common(stats, true);
  stats->add_option("--permutations", cfg.perm.n_permutations, "number of permutations");
  stats->add_option("--cluster-alpha", cfg.perm.cluster_alpha, "cluster-forming tail quantile");
  stats->add_option("--alpha", cfg.perm.alpha, "family-wise significance level");
  stats->add_option("--window-seconds", cfg.erp_window_seconds, "epoch length");

  CLI::App* train = app.add_subcommand("train", "fit spatial filter + MDM on training blocks");
  add_common(train, true);
  train->add_option("--train-blocks", blocks_arg, "comma-separated block ids (default: random)");
  train->add_option("--train-fraction", train_fraction, "training fraction for the random split");
  train->add_option("--window-seconds", cfg.eval_window_seconds, "epoch length");
  train->add_option("--components", cfg.cv.n_components, "spatial filter components");

  CLI::App* eval_cmd = app.add_subcommand("eval", "cross-validated metrics and curves");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--fractions", cfg.cv.fractions, "training fractions");
  eval_cmd->add_option("--sets", cfg.cv.n_random_sets, "random splits per fraction");
  eval_cmd->add_option("--repetitions", cfg.cv.repetitions, "repetition counts");
  eval_cmd->add_option("--components", cfg.cv.n_components, "spatial filter components");
  eval_cmd->add_option("--window-seconds", cfg.eval_window_seconds, "epoch length");

  CLI::App* report = app.add_subcommand("report", "summarize a run directory");
  add_common(report, false);
  report->add_option("--run", run_dir, "run directory to summarize")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (preprocess_cmd->parsed()) return cmd_preprocess(cfg);
    if (epoch_cmd->parsed()) return cmd_epoch(cfg);
    if (erp->parsed()) return cmd_erp(cfg);
    if (stats->parsed()) return cmd_stats(cfg);
    if (train->parsed()) return cmd_train(cfg, blocks_arg, train_fraction);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (report->parsed()) return cmd_report(cfg, run_dir);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitComputation;
  }
}
