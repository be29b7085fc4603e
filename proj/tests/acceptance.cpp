// Acceptance run: one PASS/FAIL/SKIP line per criterion. Tolerances and time
// budgets are fixed below.

#include "oracles.hpp"
#include "smsat/cli.hpp"
#include "smsat/config.hpp"
#include "smsat/dsp.hpp"
#include "smsat/stats.hpp"
#include "smsat/text.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace smsat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kEncoderStep = 1e-6;
constexpr double kFftTol = 1e-9;
constexpr double kDctTol = 1e-10;
constexpr double kToneEnvTol = 1e-3;
constexpr double kAmEnvRelRms = 0.01;
constexpr double kMelTol = 0.05;
constexpr double kHandTol = 1e-3;
constexpr double kCdfTol = 1e-8;
constexpr double kTypeOneMax = 0.15;
constexpr double kCamAccMin = 0.95;
constexpr double kCosMin = 0.95;
constexpr double kRmseMax = 0.02;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Pass;
  std::string detail;
};

struct Check {
  std::ostringstream why;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      why << what << "; ";
    }
  }
  Outcome done(const std::string& summary) const {
    return {ok ? Status::Pass : Status::Fail, ok ? summary : why.str() + summary};
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) { return text::fmt_fixed(v, digits); }

// ----- 1 -----
Outcome parameter_count() {
  const auto m = encoder::build_encoder({}, 0);
  const auto p = encoder::count_parameters(m);
  Check c;
  c.expect(p == 11235904, "expected 11235904 parameters, got " + std::to_string(p));
  return c.done("P_total = " + std::to_string(p) + ", FLOPs = " + std::to_string(encoder::count_flops({})));
}

// ----- 2 -----
Outcome table_oracle() {
  Check c;
  std::vector<ClassLabel> calmest;
  int agree = 0;
  for (const auto& row : oracle::table_iii()) {
    const auto k = stats::calmest_per_feature({row.sm, row.m, row.ns});
    calmest.push_back(k.label);
    if (label_code(k.label) == row.calmest && !k.tie) ++agree;
    else c.expect(false, row.feature + " gave " + std::string(label_code(k.label)));
  }
  const auto v = stats::majority_vote(calmest);
  const int ns = v.tally[label_index(ClassLabel::NormalSilence)];
  const int sm = v.tally[label_index(ClassLabel::SpiritualMeditation)];
  const int mu = v.tally[label_index(ClassLabel::Music)];
  c.expect(ns == 11 && sm == 10 && mu == 4, "tally mismatch");
  return c.done(std::to_string(agree) + "/25 rows; tally NS " + std::to_string(ns) + ", SM " + std::to_string(sm) + ", M " +
                std::to_string(mu));
}

// ----- 3 -----
Outcome gradient_suite() {
  using namespace nn;
  Check c;
  CounterRng r(31);
  auto u = [&](Shape s, double b = 1.0) { return uniform_init(std::move(s), b, r); };
  std::vector<std::pair<std::string, double>> errs;
  auto record = [&](const std::string& name, double e) {
    errs.emplace_back(name, e);
    c.expect(e < kGradTol, name + " error " + text::fmt(e));
  };

  {
    auto x = u({2, 3, 6, 5}), w = u({4, 3, 3, 3}), b = u({4});
    record("conv2d", grad_check([&] { return conv2d(x, w, {2, 1}, b); }, {{"x", x}, {"w", w}, {"b", b}}).max_rel_error);
  }
  {
    auto a = u({3, 5}), b = u({5, 4});
    record("matmul", grad_check([&] { return matmul(a, b); }, {{"a", a}, {"b", b}}).max_rel_error);
  }
  {
    LstmWeights lw{u({16, 3}, 0.5), u({16, 4}, 0.5), u({16}, 0.5)};
    auto h = u({2, 4}), cc = u({2, 4}), x = u({2, 3});
    record("lstm_cell", grad_check(
                            [&] {
                              LstmState s{h, cc};
                              for (int t = 0; t < 3; ++t) s = lstm_cell(x, s, lw);
                              return concat_cols(s.h, s.c);
                            },
                            {{"w_ih", lw.w_ih}, {"w_hh", lw.w_hh}, {"bias", lw.bias}, {"h", h}, {"c", cc}, {"x", x}})
                            .max_rel_error);
  }
  {
    auto x = u({3, 2, 4, 4}), g = u({2}), b = u({2});
    BatchNormState st;
    record("batchnorm", grad_check([&] { return batchnorm2d(x, g, b, st, true); }, {{"x", x}, {"g", g}, {"b", b}}).max_rel_error);
  }
  {
    auto x = u({2, 3, 4, 5});
    record("gap", grad_check([&] { return global_avg_pool(x); }, {{"x", x}}).max_rel_error);
  }
  {
    auto l = u({5, 3}, 2.0);
    record("softmax_ce", grad_check([&] { return softmax_cross_entropy(l, {0, 2, 1, 1, 0}); }, {{"l", l}}).max_rel_error);
  }
  {
    auto p = u({4, 6}), q = u({4, 6});
    record("contrastive", grad_check([&] { return encoder::contrastive_loss(p, q); }, {{"p", p}, {"q", q}}).max_rel_error);
  }
  {
    encoder::EncoderConfig ec;
    ec.width_scale = 0.125;
    ec.n_mels = 16;
    ec.frames = 16;
    auto m = encoder::build_encoder(ec, 2);
    auto a = u({8, 1, 16, 16}), b = u({8, 1, 16, 16});
    auto inputs = m.parameters();
    inputs.push_back({"x", a});
    const auto res =
        grad_check([&] { return encoder::contrastive_loss(m.forward(a, true), m.forward(b, true)); }, inputs, kEncoderStep, 4);
    record("encoder_w1/8", res.max_rel_error);
  }
  {
    cam::CamConfig cc;
    cc.hidden = 4;
    cc.fc = 5;
    cc.input_dim = 6;
    auto m = cam::build_cam(cc, 3);
    auto x = u({4, 6});
    auto inputs = m.parameters();
    inputs.push_back({"x", x});
    record("cam_tiny", grad_check(
                           [&] {
                             CounterRng drop(5);
                             return softmax_cross_entropy(m.forward(x, true, &drop), {0, 1, 2, 1});
                           },
                           inputs)
                           .max_rel_error);
  }
  {
    Matrix x(9, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal() + (i % 9 < 3 ? 4.0 : 0.0);
    const Matrix p = embed::tsne_affinities(x, 3.0);
    Matrix y(9, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = r.normal();
    const Matrix g = embed::tsne_gradient(p, y);
    double worst = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      Matrix a = y, b = y;
      a.data()[i] += 1e-5;
      b.data()[i] -= 1e-5;
      const double fd = (embed::tsne_kl(p, a) - embed::tsne_kl(p, b)) / 2e-5;
      worst = std::max(worst, std::abs(fd - g.data()[i]) / std::max({1.0, std::abs(fd), std::abs(g.data()[i])}));
    }
    record("tsne_kl", worst);
  }
  double worst = 0;
  for (const auto& [n, e] : errs) worst = std::max(worst, e);
  return c.done(std::to_string(errs.size()) + " checks, worst relative error " + text::fmt(worst));
}

// ----- 4 -----
Outcome dsp_oracles() {
  Check c;
  CounterRng r(41);
  double fft_err = 0;
  for (Eigen::Index n = 1; n <= 128; ++n) {
    Vector x(n);
    for (auto& v : x) v = r.normal();
    const auto s = dsp::fft(x);
    const auto ref = oracle::direct_dft(std::vector<double>(x.data(), x.data() + n), static_cast<std::size_t>(s.n_fft));
    for (Eigen::Index k = 0; k < s.n_fft; ++k)
      fft_err = std::max(fft_err, std::abs(std::complex<double>(s.re(k), s.im(k)) - ref[static_cast<std::size_t>(k)]));
  }
  c.expect(fft_err < kFftTol, "fft error " + text::fmt(fft_err));

  double dct_err = 0;
  for (Eigen::Index n = 1; n <= 64; ++n) {
    Vector x(n);
    for (auto& v : x) v = r.normal();
    const Vector got = dsp::dct2(x);
    const auto ref = oracle::dct2_loop(std::vector<double>(x.data(), x.data() + n));
    for (Eigen::Index k = 0; k < n; ++k) dct_err = std::max(dct_err, std::abs(got(k) - ref[static_cast<std::size_t>(k)]));
  }
  c.expect(dct_err < kDctTol, "dct error " + text::fmt(dct_err));

  const int rate = 16000, n = 16000, lo = n / 10, hi = n - n / 10;
  Vector tone(n), am(n), truth(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    tone(i) = std::cos(2 * oracle::kPi * 25.0 * t);
    truth(i) = 0.4 * (1.0 + 0.5 * std::sin(2 * oracle::kPi * 1.5 * t));
    am(i) = truth(i) * std::cos(2 * oracle::kPi * 30.0 * t);
  }
  const Vector te = dsp::analytic_envelope(tone), ae = dsp::analytic_envelope(am);
  const double tone_err = (te.segment(lo, hi - lo).array() - 1.0).abs().maxCoeff();
  const double am_rel = (ae - truth).segment(lo, hi - lo).norm() / truth.segment(lo, hi - lo).norm();
  c.expect(tone_err < kToneEnvTol, "tone envelope error " + text::fmt(tone_err));
  c.expect(am_rel < kAmEnvRelRms, "AM envelope relative RMS " + text::fmt(am_rel));
  const double mel = dsp::mel_scale(1000.0);
  c.expect(std::abs(mel - 1000.0) < kMelTol, "mel(1000) = " + text::fmt(mel));
  return c.done("fft " + text::fmt(fft_err) + ", dct " + text::fmt(dct_err) + ", tone env " + text::fmt(tone_err) +
                ", AM env rel RMS " + text::fmt(am_rel) + ", mel(1000) " + num(mel, 3));
}

// ----- 5 -----
Outcome stats_oracles(const RunConfig& base) {
  Check c;
  const auto a = stats::anova_oneway({{1, 2, 3, 4}, {2, 3, 4, 5}, {3, 4, 5, 6}});
  c.expect(std::abs(a.f - 2.4) < kHandTol && std::abs(a.p - 0.146) < kHandTol, "ANOVA F=" + text::fmt(a.f) + " p=" + text::fmt(a.p));
  const auto w = stats::welch_t({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
  c.expect(std::abs(w.t + 1.0) < kHandTol && std::abs(w.df - 8.0) < kHandTol && std::abs(w.p - 0.3466) < kHandTol,
           "Welch t=" + text::fmt(w.t) + " df=" + text::fmt(w.df) + " p=" + text::fmt(w.p));

  double cdf_err = 0;
  for (double v : {1.0, 3.0, 9.5, 40.0})
    for (double x : {-3.0, -0.5, 0.0, 1.2, 4.0}) cdf_err = std::max(cdf_err, std::abs(stats::t_cdf(x, v) - oracle::t_cdf_quad(x, v)));
  for (double d1 : {2.0, 4.0})
    for (double d2 : {5.0, 30.0})
      for (double x : {0.2, 1.0, 3.5}) cdf_err = std::max(cdf_err, std::abs(stats::f_cdf(x, d1, d2) - oracle::f_cdf_quad(x, d1, d2)));
  c.expect(cdf_err < kCdfTol, "CDF error " + text::fmt(cdf_err));

  // Null corpora: every class shares one tone, level and noise model.
  io::SynthConfig sc = base.synth;
  sc.tone_hz.fill(25.0);
  sc.level.fill(0.35);
  sc.snr_db = 20.0;
  sc.noise_sigma = 0.0;
  sc.duration_s = 1.0;
  int flagged = 0, total = 0, worst_rep = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    std::vector<features::FeatureRow> rows;
    for (const auto& s : io::synth_clips(sc, 1000 + rep))
      rows.push_back({s.clip.id, s.clip.label, features::extract_features(s.clip, base.features)});
    const auto report = stats::calmness_report(rows);
    int here = 0;
    for (const auto& row : report.rows) here += row.anova.p < stats::kAlpha;
    flagged += here;
    total += static_cast<int>(report.rows.size());
    worst_rep = std::max(worst_rep, here);
  }
  const double rate = static_cast<double>(flagged) / total;
  c.expect(rate <= kTypeOneMax, "type-I rate " + num(rate));
  return c.done("F " + num(a.f) + " p " + num(a.p) + "; t " + num(w.t) + " df " + num(w.df) + " p " + num(w.p) +
                "; CDF error " + text::fmt(cdf_err) + "; type-I " + std::to_string(flagged) + "/" + std::to_string(total) +
                " (" + num(rate, 3) + ", worst replicate " + std::to_string(worst_rep) + "/25)");
}

// ----- 6 and 8 -----
struct Cli {
  std::string config;
  fs::path out;
  std::ostringstream log;

  bool operator()(std::vector<std::string> args) {
    std::vector<std::string> full = {"smsat", "--config", config, "--seed", "7", "--jobs", "1", "--out", out.string()};
    full.insert(full.end(), args.begin(), args.end());
    std::ostringstream o;
    const int code = cli::run(full, o, log);
    if (code != 0) log << "command failed (" << code << "): " << args.front() << "\n";
    return code == 0;
  }
};

bool desk_pipeline(const std::string& config, const fs::path& out, std::string* log) {
  fs::remove_all(out);
  Cli run{config, out, {}};
  const std::string o = out.string();
  const bool ok = run({"synth"}) && run({"validate", o + "/synth/manifest.json"}) &&
                  run({"augment", o + "/synth/manifest.json"}) && run({"features", o + "/augment/manifest.json"}) &&
                  run({"train-cam", o + "/features/features.csv"}) && run({"evaluate", o + "/features/features.csv"}) &&
                  run({"calmness", o + "/features/features.csv"}) && run({"train-encoder", o + "/synth/manifest.json"}) &&
                  run({"embed", o + "/synth/manifest.json"}) && run({"eval-embeddings", o + "/embed/embeddings.csv"}) &&
                  run({"report"});
  *log = run.log.str();
  return ok;
}

Outcome end_to_end(const std::string& config, const fs::path& out, double* seconds) {
  Check c;
  const auto t0 = Clock::now();
  std::string log;
  const bool ok = desk_pipeline(config, out, &log);
  *seconds = since(t0);
  if (!ok) return {Status::Fail, "pipeline failed: " + log};
  const auto synth = io::load_manifest(out / "synth/manifest.json");
  const auto aug = io::load_manifest(out / "augment/manifest.json");
  c.expect(synth.entries.size() == 24, "synth produced " + std::to_string(synth.entries.size()) + " clips");
  c.expect(aug.entries.size() == 24 * 6, "augment corpus has " + std::to_string(aug.entries.size()) + " clips");
  const json cam = text::read_json(out / "train-cam/report.json");
  const double acc = cam.at("test").at("accuracy").get<double>();
  const json enc = text::read_json(out / "train-encoder/summary.json");
  const double cos = enc.at("final").at("val_cossim").get<double>();
  const std::size_t cam_epochs = text::read_csv(out / "train-cam/history.csv").rows.size();
  const std::size_t enc_epochs = text::read_csv(out / "train-encoder/history.csv").rows.size();
  c.expect(cam_epochs == 50, "train-cam ran " + std::to_string(cam_epochs) + " epochs");
  c.expect(enc_epochs == 30, "train-encoder ran " + std::to_string(enc_epochs) + " epochs");
  c.expect(acc >= kCamAccMin, "CAM held-out accuracy " + num(acc));
  c.expect(cos >= kCosMin, "encoder held-out cosine " + num(cos));
  c.expect(*seconds < 600.0, "runtime over 10 min");
  return c.done("CAM held-out accuracy " + num(acc) + " (" + std::to_string(cam.at("test_ids").size()) +
                " examples), encoder held-out cosine " + num(cos) + ", " + num(*seconds, 1) + " s");
}

// Every artifact of both runs, the wall-clock column of the classifier
// history excepted.
std::string comparable(const fs::path& file) {
  const std::string s = text::read_text(file);
  if (file.filename() != "history.csv" || file.parent_path().filename() != "train-cam") return s;
  const auto t = text::read_csv(file);
  const int drop = t.column("seconds");
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (static_cast<int>(i) != drop) out += cells[i] + ",";
    out += "\n";
  };
  emit(t.header);
  for (const auto& row : t.rows) emit(row);
  return out;
}

Outcome determinism(const std::string& config, const fs::path& first, const fs::path& second, double budget) {
  if (!fs::exists(first / "report/artifacts.json")) return {Status::Fail, "reference run from criterion 6 is missing"};
  Check c;
  const auto t0 = Clock::now();
  std::string log;
  if (!desk_pipeline(config, second, &log)) return {Status::Fail, "pipeline failed: " + log};
  const double secs = since(t0);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(first)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".json" || ext == ".svg")) files.push_back(fs::relative(e.path(), first));
  }
  std::size_t differing = 0;
  for (const auto& rel : files) {
    if (!fs::exists(second / rel) || comparable(first / rel) != comparable(second / rel)) {
      if (differing < 5) c.expect(false, "differs: " + rel.generic_string());
      ++differing;
    }
  }
  std::size_t second_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(second)) {
    const auto ext = e.path().extension();
    second_count += e.is_regular_file() && (ext == ".csv" || ext == ".json" || ext == ".svg");
  }
  c.expect(second_count == files.size(), "artifact sets differ in size");
  c.expect(secs < budget, "second run took " + num(secs, 1) + " s, budget " + num(budget, 1) + " s");
  return c.done(std::to_string(files.size() - differing) + "/" + std::to_string(files.size()) +
                " CSV/JSON/SVG artifacts identical, " + num(secs, 1) + " s");
}

// ----- 7 -----
Outcome validation_ordering(const RunConfig& base) {
  Check c;
  std::array<std::vector<double>, kNumClasses> by_class;
  for (double sigma : {0.0, 0.05, 0.1}) {
    io::SynthConfig sc = base.synth;
    sc.snr_db = std::numeric_limits<double>::infinity();
    sc.noise_sigma = sigma;
    std::vector<io::AudioClip> clips;
    for (auto& s : io::synth_clips(sc, 7)) clips.push_back(std::move(s.clip));
    const auto rep = validation::validate_clips(clips, base.validation);
    for (auto l : kAllLabels) by_class[label_index(l)].push_back(rep.per_class[label_index(l)]->rmse_mean);
  }
  std::string detail;
  for (auto l : kAllLabels) {
    const auto& v = by_class[label_index(l)];
    c.expect(v[0] < kRmseMax, std::string(label_code(l)) + " clean RMSE " + num(v[0], 5));
    c.expect(v[0] < v[1] && v[1] < v[2], std::string(label_code(l)) + " RMSE not increasing with noise");
    detail += std::string(label_code(l)) + " " + num(v[0], 5) + " < " + num(v[1], 5) + " < " + num(v[2], 5) + "; ";
  }
  return c.done(detail);
}

// ----- 9 -----
Outcome recorded_corpus(const std::string& config, const fs::path& work) {
  const char* env = std::getenv("SMSAT_DATASET_DIR");
  if (!env || !*env || !fs::is_directory(env)) return {Status::Skip, "SMSAT_DATASET_DIR not set or not a directory"};
  Check c;
  Cli run{config, work / "recorded", {}};
  const std::string o = run.out.string();
  if (!(run({"validate", env}) && run({"features", env}) && run({"calmness", o + "/features/features.csv"})))
    return {Status::Fail, run.log.str()};
  const json v = text::read_json(run.out / "validate/validation.json").at("per_class");
  const double sm = v.at("SpiritualMeditation").at("rmse_mean"), m = v.at("Music").at("rmse_mean"),
               ns = v.at("NormalSilence").at("rmse_mean");
  c.expect(ns < sm && sm < m, "RMSE ordering NS " + num(ns) + ", SM " + num(sm) + ", M " + num(m));
  const auto t = text::read_csv(run.out / "calmness/calmness.csv");
  const int feat = t.column("feature"), calm = t.column("calmest");
  for (const auto& row : t.rows) {
    if (row[feat] == "zcr") c.expect(row[calm].rfind("M", 0) == 0, "ZCR calmest is " + row[calm]);
    if (row[feat] == "rms") c.expect(row[calm].rfind("NS", 0) == 0, "RMS calmest is " + row[calm]);
  }
  return c.done("RMSE NS " + num(ns) + " < SM " + num(sm) + " < M " + num(m) + "; ZCR and RMS orderings checked");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config;
  std::string work = (fs::temp_directory_path() / "smsat_acceptance").string();
  std::vector<int> only;
  app.add_option("--config", config, "Desk config")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const RunConfig base = load_config(config);
  const fs::path dir = work;
  fs::create_directories(dir);
  double e2e_seconds = 0;
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  struct Item {
    int id;
    const char* name;
    double budget;
    std::function<Outcome()> run;
  };
  const std::vector<Item> items = {
      {1, "parameter count", 1.0, parameter_count},
      {2, "calmest-column oracle", 1.0, table_oracle},
      {3, "gradient suite", 120.0, gradient_suite},
      {4, "DSP oracles", 30.0, dsp_oracles},
      {5, "statistics oracles", 120.0, [&] { return stats_oracles(base); }},
      {6, "desk end-to-end", 600.0, [&] { return end_to_end(config, dir / "run1", &e2e_seconds); }},
      {7, "validation ordering", 60.0, [&] { return validation_ordering(base); }},
      {8, "determinism", 1e9,
       [&] { return determinism(config, dir / "run1", dir / "run2", e2e_seconds > 0 ? 2.0 * e2e_seconds : 1200.0); }},
      {9, "recorded corpus", 600.0, [&] { return recorded_corpus(config, dir); }},
  };

  int failures = 0;
  for (const auto& it : items) {
    if (!wanted(it.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = it.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = since(t0);
    if (o.status != Status::Skip && secs > it.budget) {
      o.status = Status::Fail;
      o.detail += " [over the " + num(it.budget, 0) + " s budget]";
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail;
    std::cout << "criterion " << it.id << " (" << it.name << "): " << tag << " - " << o.detail << " [" << num(secs, 2)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
