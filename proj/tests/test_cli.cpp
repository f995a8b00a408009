#include "p300/layout.hpp"
#include "p300/riemann.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(P300_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

// one simulated + preprocessed corpus shared by the test cases
const fs::path& corpus() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "p300_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    REQUIRE(run("simulate --out " + (d / "sim").string() +
                " --seed 42 --subjects 2 --snr 1.5") == 0);
    std::string inputs;
    for (const char* name : {"sub01_PC", "sub01_VR", "sub02_PC", "sub02_VR"}) {
      inputs += " " + (d / "sim" / (std::string(name) + ".rec")).string();
    }
    REQUIRE(run("preprocess --in" + inputs + " --out " + (d / "pre").string()) == 0);
    return d;
  }();
  return dir;
}

std::string preproc(const std::string& name) {
  return (corpus() / "pre" / (name + "_preproc.rec")).string();
}

}  // namespace

TEST_CASE("simulate is byte-identical under the same seed") {
  const fs::path d = corpus() / "det";
  REQUIRE(run("simulate --out " + (d / "a").string() + " --seed 7 --subjects 1 --conditions PC") ==
          0);
  REQUIRE(run("simulate --out " + (d / "b").string() + " --seed 7 --subjects 1 --conditions PC") ==
          0);
  for (const char* f :
       {"sub01_PC.rec", "sub01_PC.rec.f32", "sub01_PC.rec.events.csv", "manifest.json"}) {
    CHECK(same_bytes(d / "a" / f, d / "b" / f));
  }
  REQUIRE(run("simulate --out " + (d / "c").string() + " --seed 8 --subjects 1 --conditions PC") ==
          0);
  CHECK_FALSE(same_bytes(d / "a" / "sub01_PC.rec.f32", d / "c" / "sub01_PC.rec.f32"));
}

TEST_CASE("stochastic commands demand a seed") {
  CHECK(run("simulate --out " + (corpus() / "noseed").string() + " --subjects 1") == 2);
  CHECK(run("eval --in " + preproc("sub01_PC") + " --out " + (corpus() / "noseed2").string()) == 2);
  CHECK_FALSE(fs::exists(corpus() / "noseed"));
}

TEST_CASE("simulate rejects a negative snr") {
  CHECK(run("simulate --out " + (corpus() / "negsnr").string() + " --seed 1 --snr -1") == 2);
  CHECK_FALSE(fs::exists(corpus() / "negsnr" / "sub01_PC.rec"));
}

TEST_CASE("default eval grid is 9 fractions by 5 repetition counts") {
  const fs::path out = corpus() / "grid";
  REQUIRE(run("eval --in " + preproc("sub01_PC") + " --out " + out.string() +
              " --seed 11 --sets 1") == 0);
  std::istringstream csv(slurp(out / "metrics_long.csv"));
  std::string row;
  std::getline(csv, row);  // header
  int rows = 0;
  while (std::getline(csv, row)) ++rows;
  CHECK(rows == 45);
}

TEST_CASE("missing inputs exit 2 without partial outputs") {
  const fs::path out = corpus() / "missing_out";
  CHECK(run("preprocess --in does_not_exist.rec --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
  // one good and one bad input must not produce the good output either
  CHECK(run("preprocess --in " + (corpus() / "sim" / "sub01_PC.rec").string() +
            " does_not_exist.rec --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out / "sub01_PC_preproc.rec"));
}

TEST_CASE("usage errors exit 2") {
  CHECK(run("bogus") == 2);
  CHECK(run("preprocess --in x.rec") == 2);  // no --out
  CHECK(run("--help") == 0);
}

TEST_CASE("epoch reports the session accounting") {
  const fs::path out = corpus() / "ep";
  REQUIRE(run("epoch --in " + preproc("sub01_PC") + " --out " + out.string()) == 0);
  const std::string counts = slurp(out / "epoch_counts.csv");
  CHECK(counts.find("sub01,PC,1,120,600,0") != std::string::npos);
  CHECK(fs::exists(out / "sub01_PC_preproc.epochs"));
  CHECK(fs::exists(out / "sub01_PC_preproc.epochs.f32"));
}

TEST_CASE("erp emits per-channel SVGs, CSVs and the significance overlay inputs") {
  const fs::path out = corpus() / "erp";
  std::string inputs;
  for (const char* n : {"sub01_PC", "sub01_VR", "sub02_PC", "sub02_VR"}) {
    inputs += " " + preproc(n);
  }
  REQUIRE(run("erp --in" + inputs + " --out " + out.string() + " --seed 3 --permutations 200") ==
          0);
  for (const char* f : {"erp_CZ.svg", "erp_PZ.svg", "erp_OZ.svg", "erp_grand_average.csv",
                        "erp_peaks.csv", "clusters.json", "cluster_mask.csv", "manifest.json"}) {
    CHECK(fs::exists(out / f));
  }
  const std::string csv = slurp(out / "erp_grand_average.csv");
  CHECK(csv.rfind("condition,wave,channel,time_ms,mean,std_error\n", 0) == 0);
  CHECK(csv.find("VR,difference,CZ,") != std::string::npos);
  CHECK(slurp(out / "erp_CZ.svg").rfind("<svg", 0) == 0);

  SUBCASE("single condition degrades to plots without the overlay") {
    const fs::path solo = corpus() / "erp_solo";
    REQUIRE(run("erp --in " + preproc("sub01_PC") + " " + preproc("sub02_PC") + " --out " +
                solo.string()) == 0);
    CHECK(fs::exists(solo / "erp_CZ.svg"));
    CHECK_FALSE(fs::exists(solo / "clusters.json"));
  }
}

TEST_CASE("train writes a loadable model") {
  const fs::path out = corpus() / "train";
  REQUIRE(run("train --in " + preproc("sub01_PC") + " --out " + out.string() +
              " --train-blocks 0,1,2,3,4,5") == 0);
  const p300::MdmModel model = p300::mdm_model_from_json(slurp(out / "model.json"));
  CHECK(model.filter.n_components == 4);
  CHECK(model.filter.w.rows() == 4);
  CHECK(model.filter.w.cols() == 16);
  CHECK(model.mean_ta.dim() == 8);  // augmented features double the dimension
  CHECK(model.mode == p300::FeatureMode::augmented);
}

TEST_CASE("eval outputs are byte-identical across reruns and worker counts") {
  const std::string common = "eval --in " + preproc("sub01_PC") +
                             " --seed 11 --fractions 0.5 --sets 2 --repetitions 1 5";
  const fs::path a = corpus() / "ev_a";
  const fs::path b = corpus() / "ev_b";
  const fs::path c = corpus() / "ev_c";
  REQUIRE(run(common + " --out " + a.string() + " --workers 1") == 0);
  REQUIRE(run(common + " --out " + b.string() + " --workers 1") == 0);
  REQUIRE(run(common + " --out " + c.string() + " --workers 4") == 0);
  for (const char* f : {"metrics_long.csv", "curve_auc.csv", "metrics_summary.json"}) {
    CHECK(same_bytes(a / f, b / f));
    CHECK(same_bytes(a / f, c / f));
  }
  const std::string csv = slurp(a / "metrics_long.csv");
  CHECK(csv.rfind("subject,condition,fraction,repetitions,", 0) == 0);
  CHECK(fs::exists(a / "metrics_vs_r_PC.svg"));
  CHECK(fs::exists(a / "metrics_vs_training_PC.svg"));
}

TEST_CASE("report summarizes an eval run") {
  const fs::path out = corpus() / "rep";
  REQUIRE(run("report --run " + (corpus() / "ev_a").string() + " --out " + out.string()) == 0);
  const std::string md = slurp(out / "report.md");
  CHECK(md.find("## classification") != std::string::npos);
  CHECK(md.find("sub01") != std::string::npos);
  CHECK(fs::exists(out / "report.json"));
}

TEST_CASE("preprocess is byte-identical across worker counts") {
  const fs::path out1 = corpus() / "pre_w1";
  const fs::path out2 = corpus() / "pre_w2";
  const std::string input = (corpus() / "sim" / "sub01_PC.rec").string();
  REQUIRE(run("preprocess --in " + input + " --out " + out1.string() + " --workers 1") == 0);
  REQUIRE(run("preprocess --in " + input + " --out " + out2.string() + " --workers 4") == 0);
  for (const char* f : {"sub01_PC_preproc.rec.f32", "sub01_PC_preproc.rec.events.csv",
                        "manifest.json"}) {
    CHECK(same_bytes(out1 / f, out2 / f));
  }
}

TEST_CASE("injected condition effect shows up in the erp overlay end to end") {
  // a two-condition cohort at strong SNR; the simulator's VR templates carry
  // a wider and larger P200, so VR-vs-PC differs around 120-350 ms. A
  // sign-flip null needs 2^n patterns, so use 8 subjects, not fewer.
  const fs::path d = corpus() / "effect";
  REQUIRE(run("simulate --out " + (d / "sim").string() + " --seed 99 --subjects 8 --snr 5") == 0);
  std::string inputs;
  for (int s = 1; s <= 8; ++s) {
    for (const char* cond : {"PC", "VR"}) {
      inputs += " " + (d / "sim" / ("sub0" + std::to_string(s) + "_" + cond + ".rec")).string();
    }
  }
  REQUIRE(run("preprocess --in" + inputs + " --out " + (d / "pre").string() + " --workers 2") == 0);
  std::string pre;
  for (int s = 1; s <= 8; ++s) {
    for (const char* cond : {"PC", "VR"}) {
      pre += " " + (d / "pre" / ("sub0" + std::to_string(s) + "_" + cond + "_preproc.rec")).string();
    }
  }
  REQUIRE(run("erp --in" + pre + " --out " + (d / "erp").string() +
              " --seed 13 --permutations 400") == 0);

  // a significant cluster must exist and the plotted overlay must mark it
  const std::string clusters = slurp(d / "erp" / "clusters.json");
  CHECK(clusters.find("\"significant\": true") != std::string::npos);
  const std::string svg = slurp(d / "erp" / "erp_CZ.svg");
  CHECK(svg.find("fill-opacity=\"0.6\"") != std::string::npos);  // the span rectangle

  // the significant window overlaps the injected P200 difference range
  std::size_t pos = clusters.find("\"n_significant\": ");
  REQUIRE(pos != std::string::npos);
  CHECK(clusters[pos + 17] != '0');
  {
    std::istringstream mask(slurp(d / "erp" / "cluster_mask.csv"));
    std::string row;
    std::getline(mask, row);  // header
    int lo = 1 << 30, hi = -1;
    while (std::getline(mask, row)) {
      if (row.back() != '1') continue;  // significant cells only
      const std::size_t a = row.find(',', row.find(',') + 1);
      const int sample = std::stoi(row.substr(a + 1));
      lo = std::min(lo, sample);
      hi = std::max(hi, sample);
    }
    REQUIRE(hi >= 0);
    const double lo_ms = 1000.0 * lo / 128.0;
    const double hi_ms = 1000.0 * hi / 128.0;
    CHECK(lo_ms < 350.0);  // the window intersects the P200 difference range
    CHECK(hi_ms > 120.0);
  }

  // P200 peaks: VR larger than PC at CZ in the peak table
  const std::string peaks = slurp(d / "erp" / "erp_peaks.csv");
  double pc_p200 = 0.0, vr_p200 = 0.0;
  std::istringstream rows(peaks);
  std::string row;
  while (std::getline(rows, row)) {
    if (row.find(",P200,CZ,") == std::string::npos) continue;
    const double amp = std::stod(row.substr(row.rfind(',') + 1));
    if (row.rfind("PC,", 0) == 0) pc_p200 = amp;
    if (row.rfind("VR,", 0) == 0) vr_p200 = amp;
  }
  CHECK(vr_p200 > pc_p200);
  CHECK(pc_p200 > 0.0);
}

TEST_CASE("config file supplies defaults and flags win") {
  const fs::path cfg_path = corpus() / "run.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"seed": 77, "eval": {"fractions": [0.5], "n_random_sets": 2, "repetitions": [1]}})";
  }
  const fs::path out = corpus() / "cfg_eval";
  REQUIRE(run("eval --config " + cfg_path.string() + " --in " + preproc("sub01_PC") + " --out " +
              out.string() + " --sets 3") == 0);
  const std::string manifest = slurp(out / "manifest.json");
  CHECK(manifest.find("\"seed\": 77") != std::string::npos);          // from the file
  CHECK(manifest.find("\"n_random_sets\": 3") != std::string::npos);  // flag overrode it
  const std::string csv = slurp(out / "metrics_long.csv");
  CHECK(csv.find(",0.5,1,") != std::string::npos);
}

TEST_CASE("the shipped example config parses") {
  const fs::path out = corpus() / "example_cfg";
  REQUIRE(run("report --config " + (fs::path(P300_CONFIG_DIR) / "example_run.json").string() +
              " --run " + (corpus() / "ev_a").string() + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "report.md"));
}

TEST_CASE("the shipped layout config matches the built-in montage") {
  const p300::ElectrodeLayout file = p300::load_layout(fs::path(P300_CONFIG_DIR) / "layout16.json");
  const p300::ElectrodeLayout builtin = p300::default_layout();
  REQUIRE(file.labels == builtin.labels);
  CHECK(file.neighbors == builtin.neighbors);
  for (std::size_t i = 0; i < file.size(); ++i) {
    CHECK((file.positions[i] - builtin.positions[i]).norm() < 1e-12);
    CHECK(file.neighbors[i].size() >= 2);
    CHECK(file.neighbors[i].size() <= 5);
  }
}
