#include "smsat/cam.hpp"

#include "smsat/parallel.hpp"
#include "smsat/split.hpp"
#include "smsat/text.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace smsat::cam {

using nn::Index;
using nn::Tensor;

std::string_view seq_mode_name(SeqMode m) { return m == SeqMode::Sequence ? "sequence" : "single-step"; }

SeqMode parse_seq_mode(std::string_view s) {
  if (s == "sequence") return SeqMode::Sequence;
  if (s == "single-step" || s == "single_step") return SeqMode::SingleStep;
  throw Error("unknown cam mode '" + std::string(s) + "' (expected sequence or single-step)");
}

void CamConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || fc < 1 || classes < 2) throw Error("cam config: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("cam config: dropout must lie in [0, 1)");
  if (!(lr >= 0.0)) throw Error("cam config: lr must be >= 0");
  if (epochs < 0 || batch < 1) throw Error("cam config: epochs must be >= 0 and batch >= 1");
}

nlohmann::json config_to_json(const CamConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"fc", c.fc},
          {"dropout", c.dropout},     {"classes", c.classes}, {"lr", c.lr},
          {"epochs", c.epochs},       {"batch", c.batch},   {"test_frac", c.test_frac},
          {"mode", seq_mode_name(c.mode)}, {"seed", c.seed}};
}

CamConfig config_from_json(const nlohmann::json& j) {
  CamConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.fc = j.value("fc", c.fc);
  c.dropout = j.value("dropout", c.dropout);
  c.classes = j.value("classes", c.classes);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.test_frac = j.value("test_frac", c.test_frac);
  c.mode = parse_seq_mode(j.value("mode", std::string(seq_mode_name(c.mode))));
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::array<double, kNumClasses> class_weights(const std::array<int, kNumClasses>& counts) {
  const int total = std::accumulate(counts.begin(), counts.end(), 0);
  std::array<double, kNumClasses> w{};
  for (auto l : kAllLabels) {
    const int k = label_index(l);
    if (counts[k] < 1) throw Error("class_weights: class " + std::string(label_name(l)) + " is empty");
    w[k] = static_cast<double>(total) / static_cast<double>(counts[k]);
  }
  return w;
}

std::vector<std::size_t> weighted_sampler(const std::vector<ClassLabel>& labels,
                                          const std::array<double, kNumClasses>& weights, std::size_t n_draws,
                                          std::uint64_t seed) {
  if (labels.empty()) throw Error("weighted_sampler: no examples");
  std::vector<double> cdf(labels.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) cdf[i] = acc += weights[label_index(labels[i])];
  CounterRng rng(seed);
  std::vector<std::size_t> out(n_draws);
  for (auto& o : out) {
    const double u = rng.uniform() * acc;
    o = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (o >= labels.size()) o = labels.size() - 1;
  }
  return out;
}

namespace {

nn::LstmWeights make_lstm(Index in, Index hidden, const CounterRng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  CounterRng r = rng.derive(name);
  return {nn::uniform_init({4 * hidden, in}, bound, r), nn::uniform_init({4 * hidden, hidden}, bound, r),
          nn::uniform_init({4 * hidden}, bound, r)};
}

}  // namespace

Cam::Cam(const CamConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const CounterRng rng(seed);
  fwd_ = make_lstm(cfg_.step_input(), cfg_.hidden, rng, "lstm.fwd");
  bwd_ = make_lstm(cfg_.step_input(), cfg_.hidden, rng, "lstm.bwd");
  CounterRng r1 = rng.derive("fc1"), r2 = rng.derive("fc2");
  const double b1 = 1.0 / std::sqrt(static_cast<double>(2 * cfg_.hidden));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(cfg_.fc));
  fc1_w_ = nn::uniform_init({cfg_.fc, 2 * cfg_.hidden}, b1, r1);
  fc1_b_ = nn::uniform_init({cfg_.fc}, b1, r1);
  fc2_w_ = nn::uniform_init({cfg_.classes, cfg_.fc}, b2, r2);
  fc2_b_ = nn::uniform_init({cfg_.classes}, b2, r2);
  norm_mean_ = nn::Array::Zero(cfg_.input_dim);
  norm_std_ = nn::Array::Ones(cfg_.input_dim);
}

Tensor Cam::encode(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != cfg_.input_dim)
    throw ShapeError("cam: expected input [N, " + std::to_string(cfg_.input_dim) + "], got " + nn::shape_str(x.shape()));
  const Index n = x.dim(0), steps = cfg_.steps(), step_in = cfg_.step_input();
  auto run = [&](const nn::LstmWeights& w, bool reverse) {
    nn::LstmState s{Tensor::zeros({n, cfg_.hidden}), Tensor::zeros({n, cfg_.hidden})};
    for (Index t = 0; t < steps; ++t) {
      const Index pos = reverse ? steps - 1 - t : t;
      s = nn::lstm_cell(steps == 1 ? x : nn::slice_cols(x, pos * step_in, step_in), s, w);
    }
    return s.h;
  };
  return nn::concat_cols(run(fwd_, false), run(bwd_, true));
}

Tensor Cam::forward(const Tensor& x, bool train, CounterRng* rng) const {
  Tensor h = nn::relu(nn::linear(encode(x), fc1_w_, fc1_b_));
  if (train && cfg_.dropout > 0.0) {
    if (!rng) throw Error("cam: training forward needs a dropout generator");
    h = nn::dropout(h, cfg_.dropout, true, *rng);
  }
  return nn::linear(h, fc2_w_, fc2_b_);
}

void Cam::set_normalizer(const Vector& mean, const Vector& std) {
  if (mean.size() != cfg_.input_dim || std.size() != cfg_.input_dim)
    throw ShapeError("cam: normalizer size does not match input dim " + std::to_string(cfg_.input_dim));
  norm_mean_ = mean.array();
  norm_std_ = std.array();
}

Tensor Cam::normalize(const Matrix& raw) const {
  if (raw.cols() != cfg_.input_dim)
    throw ShapeError("cam: features have " + std::to_string(raw.cols()) + " columns, model expects " +
                     std::to_string(cfg_.input_dim));
  nn::Array v(raw.size());
  Eigen::Map<RowMatrix> m(v.data(), raw.rows(), raw.cols());
  m = raw;
  m.array().rowwise() -= norm_mean_.transpose();
  m.array().rowwise() /= norm_std_.transpose();
  return Tensor::from({raw.rows(), raw.cols()}, std::move(v));
}

Matrix Cam::predict_proba(const Matrix& x) const {
  const Tensor logits = forward(normalize(x), false);
  const nn::Array p = nn::softmax_rows(logits);
  return Eigen::Map<const RowMatrix>(p.data(), logits.dim(0), logits.dim(1));
}

std::vector<nn::ParamRef> Cam::parameters() const {
  return {{"lstm.fwd.w_ih", fwd_.w_ih}, {"lstm.fwd.w_hh", fwd_.w_hh}, {"lstm.fwd.bias", fwd_.bias},
          {"lstm.bwd.w_ih", bwd_.w_ih}, {"lstm.bwd.w_hh", bwd_.w_hh}, {"lstm.bwd.bias", bwd_.bias},
          {"fc1.w", fc1_w_},            {"fc1.b", fc1_b_},            {"fc2.w", fc2_w_},
          {"fc2.b", fc2_b_}};
}

std::vector<nn::BufferRef> Cam::buffers() { return {{"norm.mean", &norm_mean_}, {"norm.std", &norm_std_}}; }

Cam build_cam(const CamConfig& cfg, std::uint64_t seed) { return Cam(cfg, seed); }

EvalReport report_from_confusion(const Eigen::Matrix<long, kNumClasses, kNumClasses>& confusion) {
  EvalReport r;
  r.confusion = confusion;
  const long total = confusion.sum();
  for (int k = 0; k < kNumClasses; ++k) {
    const long tp = confusion(k, k);
    const long row = confusion.row(k).sum(), col = confusion.col(k).sum();
    r.support[k] = row;
    r.precision[k] = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    r.recall[k] = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double ps = r.precision[k] + r.recall[k];
    r.f1[k] = ps > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / ps : 0.0;
    const long tn = total - row - col + tp;
    r.class_accuracy[k] = total > 0 ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
    r.macro_f1 += r.f1[k] / kNumClasses;
  }
  r.accuracy = total > 0 ? static_cast<double>(confusion.trace()) / static_cast<double>(total) : 0.0;
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (auto l : kAllLabels) {
    const int k = label_index(l);
    classes.push_back({{"label", label_name(l)},
                       {"support", r.support[k]},
                       {"accuracy", r.class_accuracy[k]},
                       {"precision", r.precision[k]},
                       {"recall", r.recall[k]},
                       {"f1", r.f1[k]}});
  }
  nlohmann::json conf = nlohmann::json::array();
  for (int i = 0; i < kNumClasses; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < kNumClasses; ++j) row.push_back(r.confusion(i, j));
    conf.push_back(row);
  }
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"classes", classes}, {"confusion", conf}};
}

std::string confusion_to_csv(const EvalReport& r) {
  std::vector<std::string> header = {"true\\predicted"};
  for (auto l : kAllLabels) header.emplace_back(label_name(l));
  text::CsvWriter csv(header);
  for (auto l : kAllLabels) {
    std::vector<std::string> row = {std::string(label_name(l))};
    for (int j = 0; j < kNumClasses; ++j) row.push_back(std::to_string(r.confusion(label_index(l), j)));
    csv.row(row);
  }
  return csv.str();
}

namespace {

Matrix feature_matrix(const std::vector<features::FeatureRow>& rows, const std::vector<std::size_t>& idx) {
  Matrix x(static_cast<Index>(idx.size()), features::kFeatureDim);
  for (std::size_t i = 0; i < idx.size(); ++i) x.row(static_cast<Index>(i)) = rows[idx[i]].x.transpose();
  return x;
}

int argmax_row(const Matrix& p, Index r) {
  Index k = 0;
  p.row(r).maxCoeff(&k);
  return static_cast<int>(k);
}

}  // namespace

EvalReport evaluate(const Cam& m, const std::vector<features::FeatureRow>& rows, int jobs) {
  if (m.config().input_dim != features::kFeatureDim)
    throw ShapeError("evaluate: model expects " + std::to_string(m.config().input_dim) + " features, rows have " +
                     std::to_string(features::kFeatureDim));
  const auto pred = parallel_map<int>(rows.size(), jobs, [&](std::size_t i) {
    return argmax_row(m.predict_proba(rows[i].x.transpose()), 0);
  });
  Eigen::Matrix<long, kNumClasses, kNumClasses> conf = Eigen::Matrix<long, kNumClasses, kNumClasses>::Zero();
  for (std::size_t i = 0; i < rows.size(); ++i) ++conf(label_index(rows[i].label), pred[i]);
  return report_from_confusion(conf);
}

CamRun train_cam(const std::vector<features::FeatureRow>& rows, const CamConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.input_dim != features::kFeatureDim)
    throw ShapeError("train_cam: config input_dim " + std::to_string(cfg.input_dim) + " does not match " +
                     std::to_string(features::kFeatureDim) + " features");
  std::array<int, kNumClasses> all_counts{};
  std::vector<ClassLabel> labels;
  for (const auto& r : rows) {
    labels.push_back(r.label);
    ++all_counts[label_index(r.label)];
  }
  for (auto l : kAllLabels)
    if (all_counts[label_index(l)] < 2)
      throw Error("train_cam: class " + std::string(label_name(l)) + " has " + std::to_string(all_counts[label_index(l)]) +
                  " examples, need at least 2");

  const CounterRng root(cfg.seed);
  const Split split = stratified_split(labels, cfg.test_frac, root.derive("split").key());
  std::vector<ClassLabel> train_labels;
  std::array<int, kNumClasses> train_counts{};
  for (auto i : split.train) {
    train_labels.push_back(labels[i]);
    ++train_counts[label_index(labels[i])];
  }
  for (auto l : kAllLabels)
    if (train_counts[label_index(l)] == 0)
      throw Error("train_cam: class " + std::string(label_name(l)) + " is absent from the training split");

  CamRun run;
  run.model = build_cam(cfg, root.derive("init").key());
  const Matrix x_train = feature_matrix(rows, split.train);
  const Vector mean = x_train.colwise().mean().transpose();
  Vector sd = ((x_train.rowwise() - mean.transpose()).array().square().colwise().sum() /
               static_cast<double>(std::max<Index>(1, x_train.rows() - 1)))
                  .sqrt()
                  .transpose();
  for (Index k = 0; k < sd.size(); ++k)
    if (!(sd(k) > 1e-12)) sd(k) = 1.0;
  run.model.set_normalizer(mean, sd);
  const Tensor xt = run.model.normalize(x_train);

  std::vector<features::FeatureRow> test_rows, train_rows;
  for (auto i : split.held_out) {
    test_rows.push_back(rows[i]);
    run.test_ids.push_back(rows[i].id);
  }
  for (auto i : split.train) train_rows.push_back(rows[i]);

  const auto weights = class_weights(train_counts);
  nn::Adam adam(run.model.parameters(), {cfg.lr});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const CounterRng erng = root.derive({CounterRng::hash_string("epoch"), static_cast<std::uint64_t>(epoch)});
    const auto draws = weighted_sampler(train_labels, weights, split.train.size(), erng.derive("sample").key());
    CamEpoch rec;
    rec.epoch = epoch;
    long correct = 0;
    for (std::size_t start = 0, b = 0; start < draws.size(); start += static_cast<std::size_t>(cfg.batch), ++b) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), draws.size() - start);
      nn::Array v(static_cast<Index>(len) * cfg.input_dim);
      std::vector<int> targets(len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t j = draws[start + i];
        v.segment(static_cast<Index>(i) * cfg.input_dim, cfg.input_dim) =
            xt.value().segment(static_cast<Index>(j) * cfg.input_dim, cfg.input_dim);
        targets[i] = label_index(train_labels[j]);
      }
      const Tensor xb = Tensor::from({static_cast<Index>(len), cfg.input_dim}, std::move(v));
      CounterRng drop = erng.derive({CounterRng::hash_string("dropout"), b});
      const Tensor logits = run.model.forward(xb, true, &drop);
      Tensor loss = nn::softmax_cross_entropy(logits, targets);
      loss.backward();
      adam.step();
      rec.loss += loss.item() * static_cast<double>(len);
      const auto lm = logits.mat();
      for (std::size_t i = 0; i < len; ++i) {
        Index k = 0;
        lm.row(static_cast<Index>(i)).maxCoeff(&k);
        if (k == targets[i]) ++correct;
      }
    }
    rec.loss /= static_cast<double>(draws.size());
    rec.acc = static_cast<double>(correct) / static_cast<double>(draws.size());
    rec.test_acc = test_rows.empty() ? 0.0 : evaluate(run.model, test_rows, jobs).accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.history.push_back(rec);
  }
  run.train_report = evaluate(run.model, train_rows, jobs);
  if (!test_rows.empty()) run.test_report = evaluate(run.model, test_rows, jobs);
  return run;
}

std::string history_to_csv(const std::vector<CamEpoch>& h) {
  text::CsvWriter csv({"epoch", "loss", "acc", "test_acc", "seconds"});
  for (const auto& e : h)
    csv.row({std::to_string(e.epoch), text::fmt(e.loss), text::fmt(e.acc), text::fmt(e.test_acc), text::fmt_fixed(e.seconds, 3)});
  return csv.str();
}

void save_cam(const std::filesystem::path& file, Cam& m) {
  nn::save_checkpoint(file, nn::snapshot(m, {{"kind", "smsat-cam"}, {"config", config_to_json(m.config())}}));
}

Cam load_cam(const std::filesystem::path& file) {
  const nn::Checkpoint ck = nn::load_checkpoint(file);
  if (ck.header.value("kind", "") != "smsat-cam") throw Error(file.string() + ": not a cam checkpoint");
  Cam m(config_from_json(ck.header.at("config")), 0);
  nn::restore(m, ck);
  return m;
}

}  // namespace smsat::cam
