#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "infomath.hpp"
#include "noisegen.hpp"
#include "rng.hpp"

namespace nrib::harness {

// ---------------------------------------------------------------------------
// Generators

Dataset generate_blobs(int num_classes, int dim, int n, double separation, uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("generate_blobs: need at least 2 classes");
  if (!(separation > 0)) {
    throw std::invalid_argument(
        "generate_blobs: separation must be > 0 (classes are indistinguishable by construction)");
  }
  if (n < num_classes) throw std::invalid_argument("generate_blobs: n must be >= num_classes");
  if (dim < num_classes) {
    throw std::invalid_argument("generate_blobs: dim must be >= num_classes for the simplex layout");
  }

  // Regular simplex: centered unit vectors scaled so pairwise distance is
  // `separation` exactly.
  Mat means = Mat::Zero(num_classes, dim);
  const double scale = separation / std::sqrt(2.0);
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < num_classes; ++j) {
      means(c, j) = ((j == c ? 1.0 : 0.0) - 1.0 / num_classes) * scale;
    }
  }

  Dataset ds;
  ds.mode = Mode::kVector;
  ds.num_classes = num_classes;
  ds.features = Mat::Zero(n, dim);
  ds.hidden_true_labels.resize(static_cast<size_t>(n));
  ds.hidden_noise_mask.assign(static_cast<size_t>(n), 0);
  ds.train_mask.assign(static_cast<size_t>(n), 0);
  ds.val_mask.assign(static_cast<size_t>(n), 0);
  ds.test_mask.assign(static_cast<size_t>(n), 0);

  RandomStream rng = RandomStream::fork(seed, {0xb10b5});
  std::vector<int> counts(static_cast<size_t>(num_classes), n / num_classes);
  for (int c = 0; c < n % num_classes; ++c) counts[static_cast<size_t>(c)] += 1;

  long row = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<int> class_rows;
    for (int i = 0; i < counts[static_cast<size_t>(c)]; ++i, ++row) {
      for (int j = 0; j < dim; ++j) ds.features(row, j) = means(c, j) + rng.normal();
      ds.hidden_true_labels[static_cast<size_t>(row)] = c;
      class_rows.push_back(static_cast<int>(row));
    }
    // Stratified 60/20/20 split.
    rng.shuffle(class_rows);
    const size_t m = class_rows.size();
    const size_t n_tr = (6 * m) / 10, n_val = (2 * m) / 10;
    for (size_t i = 0; i < m; ++i) {
      if (i < n_tr) {
        ds.train_mask[static_cast<size_t>(class_rows[i])] = 1;
      } else if (i < n_tr + n_val) {
        ds.val_mask[static_cast<size_t>(class_rows[i])] = 1;
      } else {
        ds.test_mask[static_cast<size_t>(class_rows[i])] = 1;
      }
    }
  }
  ds.labels = one_hot_rows(ds.hidden_true_labels, num_classes);
  ds.box_min = ds.features.colwise().minCoeff().transpose();
  ds.box_max = ds.features.colwise().maxCoeff().transpose();
  ds.validate();
  return ds;
}

Dataset generate_sbm_graph(int num_communities, int nodes_per_community, double p_in,
                           double p_out, int feature_dim, uint64_t seed) {
  if (num_communities < 2) throw std::invalid_argument("generate_sbm_graph: need >= 2 communities");
  if (nodes_per_community < 25) {
    throw std::invalid_argument(
        "generate_sbm_graph: need >= 25 nodes per community for the 20-per-class train split");
  }
  if (!(p_in > 0 && p_in < 1) || !(p_out > 0 && p_out < 1)) {
    throw std::invalid_argument("generate_sbm_graph: probabilities must lie in (0,1)");
  }
  if (!(p_in > p_out)) {
    throw std::invalid_argument("generate_sbm_graph: p_in must exceed p_out (no community signal)");
  }

  const int n = num_communities * nodes_per_community;
  Dataset ds;
  ds.mode = Mode::kGraph;
  ds.num_classes = num_communities;
  ds.features = Mat::Zero(n, feature_dim);
  ds.hidden_true_labels.resize(static_cast<size_t>(n));
  ds.hidden_noise_mask.assign(static_cast<size_t>(n), 0);
  ds.train_mask.assign(static_cast<size_t>(n), 0);
  ds.val_mask.assign(static_cast<size_t>(n), 0);
  ds.test_mask.assign(static_cast<size_t>(n), 0);

  RandomStream rng = RandomStream::fork(seed, {0x5b3});
  const double mean_scale = 0.5;
  Mat comm_means(num_communities, feature_dim);
  for (long i = 0; i < comm_means.size(); ++i) comm_means.data()[i] = mean_scale * rng.normal();

  for (int v = 0; v < n; ++v) {
    int c = v / nodes_per_community;
    ds.hidden_true_labels[static_cast<size_t>(v)] = c;
    for (int j = 0; j < feature_dim; ++j) ds.features(v, j) = comm_means(c, j) + rng.normal();
  }
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      double p = (u / nodes_per_community == v / nodes_per_community) ? p_in : p_out;
      if (rng.uniform01() < p) ds.edges.push_back({u, v});
    }
  }

  // 20 train nodes per class; validation capped at 500 (never more than half
  // the remainder at desk scale, so the test split stays non-empty).
  std::vector<int> rest;
  for (int c = 0; c < num_communities; ++c) {
    std::vector<int> members;
    for (int v = c * nodes_per_community; v < (c + 1) * nodes_per_community; ++v) {
      members.push_back(v);
    }
    rng.shuffle(members);
    for (size_t i = 0; i < members.size(); ++i) {
      if (i < 20) {
        ds.train_mask[static_cast<size_t>(members[i])] = 1;
      } else {
        rest.push_back(members[i]);
      }
    }
  }
  rng.shuffle(rest);
  const size_t n_val = std::min<size_t>(500, rest.size() / 2);
  for (size_t i = 0; i < rest.size(); ++i) {
    if (i < n_val) {
      ds.val_mask[static_cast<size_t>(rest[i])] = 1;
    } else {
      ds.test_mask[static_cast<size_t>(rest[i])] = 1;
    }
  }

  ds.labels = one_hot_rows(ds.hidden_true_labels, num_communities);
  ds.box_min = ds.features.colwise().minCoeff().transpose();
  ds.box_max = ds.features.colwise().maxCoeff().transpose();
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

Mat gather_mat(const Mat& m, const std::vector<int>& rows) {
  Mat out(static_cast<long>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = m.row(rows[i]);
  return out;
}

double accuracy_against(const Mat& probs, const Mat& label_rows) {
  if (probs.rows() == 0) return 0.0;
  long hits = 0;
  for (long i = 0; i < probs.rows(); ++i) {
    if (argmax_row(probs.row(i)) == argmax_row(label_rows.row(i))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

double mean_ce(const Mat& probs, const Mat& label_rows) {
  if (probs.rows() == 0) return 0.0;
  double acc = 0.0;
  for (long i = 0; i < probs.rows(); ++i) {
    for (long c = 0; c < probs.cols(); ++c) {
      if (label_rows(i, c) > 0) acc -= label_rows(i, c) * std::log(std::max(probs(i, c), 1e-12));
    }
  }
  return acc / static_cast<double>(probs.rows());
}

}  // namespace

EvalResult evaluate(model::TrainState& state, const Dataset& ds, const std::string& split) {
  const std::vector<int> rows = ds.split_indices(split);
  if (rows.empty()) throw std::runtime_error("evaluate: split '" + split + "' is empty");
  model::BranchProbs p = model::predict(state, ds, rows);
  const Mat labels = gather_mat(ds.labels, rows);

  EvalResult out;
  out.acc_s = accuracy_against(p.probs_s, labels);
  out.acc_t = accuracy_against(p.probs_t, labels);

  const std::vector<int> val_rows = ds.val_indices();
  if (!val_rows.empty()) {
    model::BranchProbs vp = model::predict(state, ds, val_rows);
    const Mat vl = gather_mat(ds.labels, val_rows);
    double ls = mean_ce(vp.probs_s, vl), lt = mean_ce(vp.probs_t, vl);
    out.report_branch = (lt < ls) ? "t" : "s";
  } else {
    out.report_branch = "s";
  }
  out.acc_report = out.report_branch == "s" ? out.acc_s : out.acc_t;
  return out;
}

SelectorQuality selector_quality(const selector::SelectionMasks& masks, const Dataset& ds) {
  long clean_sel = 0, clean_hit = 0, noise_sel = 0, noise_hit = 0;
  long total_clean = 0, total_noisy = 0;
  for (long i = 0; i < ds.num_examples(); ++i) {
    const size_t si = static_cast<size_t>(i);
    if (!ds.train_mask[si]) continue;
    const bool noisy = ds.hidden_noise_mask[si] != 0;
    if (noisy) {
      ++total_noisy;
    } else {
      ++total_clean;
    }
    if (masks.clean[si]) {
      ++clean_sel;
      if (!noisy) ++clean_hit;
    }
    if (masks.noise[si]) {
      ++noise_sel;
      if (noisy) ++noise_hit;
    }
  }
  SelectorQuality q;
  if (clean_sel > 0) q.clean_precision = static_cast<double>(clean_hit) / clean_sel;
  if (total_clean > 0) q.clean_recall = static_cast<double>(clean_hit) / total_clean;
  if (noise_sel > 0) q.noise_precision = static_cast<double>(noise_hit) / noise_sel;
  if (total_noisy > 0) q.noise_recall = static_cast<double>(noise_hit) / total_noisy;
  return q;
}

NoiseStats dataset_noise_stats(const Dataset& ds) {
  NoiseStats st;
  for (long i = 0; i < ds.num_examples(); ++i) {
    const size_t si = static_cast<size_t>(i);
    if (!ds.train_mask[si]) continue;
    st.train_examples += 1;
    if (ds.hidden_noise_mask[si]) st.noisy_train_examples += 1;
  }
  st.noise_rate = st.train_examples > 0
                      ? static_cast<double>(st.noisy_train_examples) / st.train_examples
                      : 0.0;
  return st;
}

void enrich_history(std::vector<trainer::EpochRecord>& history, const Dataset& ds) {
  for (auto& rec : history) {
    if (!rec.has_selection) continue;
    SelectorQuality q = selector_quality(rec.masks, ds);
    rec.clean_precision = q.clean_precision;
    rec.clean_recall = q.clean_recall;
    rec.noise_precision = q.noise_precision;
    rec.noise_recall = q.noise_recall;

    double js_clean = 0, js_noisy = 0;
    long n_clean = 0, n_noisy = 0;
    for (size_t i = 0; i < rec.scores.rows.size(); ++i) {
      const size_t row = static_cast<size_t>(rec.scores.rows[i]);
      if (ds.hidden_noise_mask[row]) {
        js_noisy += rec.scores.js[i];
        ++n_noisy;
      } else {
        js_clean += rec.scores.js[i];
        ++n_clean;
      }
    }
    if (n_clean > 0) rec.js_mean_clean = js_clean / static_cast<double>(n_clean);
    if (n_noisy > 0) rec.js_mean_noisy = js_noisy / static_cast<double>(n_noisy);
  }
}

// ---------------------------------------------------------------------------
// Records

namespace {
std::vector<int> mask_to_indices(const std::vector<uint8_t>& mask) {
  std::vector<int> idx;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

std::vector<uint8_t> indices_to_mask(const std::vector<int>& idx, size_t n) {
  std::vector<uint8_t> mask(n, 0);
  for (int i : idx) mask[static_cast<size_t>(i)] = 1;
  return mask;
}

trainer::Phase phase_from_name(const std::string& s) {
  if (s == "warmup") return trainer::Phase::kWarmup;
  if (s == "injection") return trainer::Phase::kInjection;
  if (s == "robust") return trainer::Phase::kRobust;
  throw std::runtime_error("unknown phase '" + s + "'");
}
}  // namespace

nlohmann::json record_to_json(const trainer::EpochRecord& rec) {
  nlohmann::json j;
  j["epoch"] = rec.epoch;
  j["phase"] = trainer::phase_name(rec.phase);
  j["train_acc_s"] = rec.train_acc_s;
  j["train_acc_t"] = rec.train_acc_t;
  j["test_acc_s"] = rec.test_acc_s;
  j["test_acc_t"] = rec.test_acc_t;
  j["val_loss_s"] = rec.val_loss_s;
  j["val_loss_t"] = rec.val_loss_t;
  j["js_mean"] = rec.js_mean;
  j["loss_components"] = rec.loss_components;
  if (rec.has_selection) {
    j["selection"] = {{"n", rec.masks.clean.size()},
                      {"clean", mask_to_indices(rec.masks.clean)},
                      {"noise", mask_to_indices(rec.masks.noise)},
                      {"uncertain", mask_to_indices(rec.masks.uncertain)}};
    j["scores"] = {{"rows", rec.scores.rows},
                   {"loss", rec.scores.loss},
                   {"js", rec.scores.js},
                   {"confidence", rec.scores.confidence},
                   {"observed_class", rec.scores.observed_class}};
  }
  auto put_opt = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value()) j[key] = *v;
  };
  put_opt("clean_precision", rec.clean_precision);
  put_opt("clean_recall", rec.clean_recall);
  put_opt("noise_precision", rec.noise_precision);
  put_opt("noise_recall", rec.noise_recall);
  put_opt("js_mean_clean", rec.js_mean_clean);
  put_opt("js_mean_noisy", rec.js_mean_noisy);
  return j;
}

trainer::EpochRecord record_from_json(const nlohmann::json& j) {
  trainer::EpochRecord rec;
  rec.epoch = j.at("epoch").get<int>();
  rec.phase = phase_from_name(j.at("phase").get<std::string>());
  rec.train_acc_s = j.at("train_acc_s").get<double>();
  rec.train_acc_t = j.at("train_acc_t").get<double>();
  rec.test_acc_s = j.at("test_acc_s").get<double>();
  rec.test_acc_t = j.at("test_acc_t").get<double>();
  rec.val_loss_s = j.at("val_loss_s").get<double>();
  rec.val_loss_t = j.at("val_loss_t").get<double>();
  rec.js_mean = j.at("js_mean").get<double>();
  rec.loss_components = j.at("loss_components").get<std::map<std::string, double>>();
  if (j.contains("selection")) {
    rec.has_selection = true;
    const auto& sel = j.at("selection");
    size_t n = sel.at("n").get<size_t>();
    rec.masks.clean = indices_to_mask(sel.at("clean").get<std::vector<int>>(), n);
    rec.masks.noise = indices_to_mask(sel.at("noise").get<std::vector<int>>(), n);
    rec.masks.uncertain = indices_to_mask(sel.at("uncertain").get<std::vector<int>>(), n);
    const auto& sc = j.at("scores");
    rec.scores.rows = sc.at("rows").get<std::vector<int>>();
    rec.scores.loss = sc.at("loss").get<std::vector<double>>();
    rec.scores.js = sc.at("js").get<std::vector<double>>();
    rec.scores.confidence = sc.at("confidence").get<std::vector<double>>();
    rec.scores.observed_class = sc.at("observed_class").get<std::vector<int>>();
  }
  auto get_opt = [&](const char* key) -> std::optional<double> {
    if (j.contains(key)) return j.at(key).get<double>();
    return std::nullopt;
  };
  rec.clean_precision = get_opt("clean_precision");
  rec.clean_recall = get_opt("clean_recall");
  rec.noise_precision = get_opt("noise_precision");
  rec.noise_recall = get_opt("noise_recall");
  rec.js_mean_clean = get_opt("js_mean_clean");
  rec.js_mean_noisy = get_opt("js_mean_noisy");
  return rec;
}

void write_history(const std::vector<trainer::EpochRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write history to '" + path + "'");
  for (const auto& rec : history) out << record_to_json(rec).dump() << "\n";
}

std::vector<trainer::EpochRecord> read_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read history from '" + path + "'");
  std::vector<trainer::EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_selection_dump(const std::vector<trainer::EpochRecord>& history,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write selection dump to '" + path + "'");
  for (const auto& rec : history) {
    if (!rec.has_selection) continue;
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["clean"] = mask_to_indices(rec.masks.clean);
    j["noise"] = mask_to_indices(rec.masks.noise);
    j["uncertain"] = mask_to_indices(rec.masks.uncertain);
    j["rows"] = rec.scores.rows;
    j["loss"] = rec.scores.loss;
    j["js"] = rec.scores.js;
    j["confidence"] = rec.scores.confidence;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Attack evaluation

std::vector<AttackPoint> attack_eval(model::TrainState& state, const Dataset& ds,
                                     const std::vector<double>& epsilons) {
  const std::vector<int> rows = ds.test_indices();
  if (rows.empty()) throw std::runtime_error("attack_eval: empty test split");
  std::vector<AttackPoint> out;
  for (double eps : epsilons) {
    Mat adv = noisegen::fgsm_perturb(state, ds, rows, eps);
    Dataset scratch = ds;
    for (size_t i = 0; i < rows.size(); ++i) {
      scratch.features.row(rows[i]) = adv.row(static_cast<long>(i));
    }
    model::BranchProbs p = model::predict(state, scratch, rows);
    out.push_back({eps, accuracy_against(p.probs_s, gather_mat(ds.labels, rows))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment runner

namespace {
struct Stats {
  double mean = 0, stddev = 0;
};
Stats mean_std(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}
}  // namespace

nlohmann::json run_experiment(const Config& config, const ExperimentSpec& spec) {
  if (spec.seeds < 1) throw std::invalid_argument("run_experiment: seeds must be >= 1");
  std::vector<trainer::Variant> variants = {trainer::Variant::kFull, trainer::Variant::kBaseline};
  if (spec.ablations) {
    variants.push_back(trainer::Variant::kNoKI);
    variants.push_back(trainer::Variant::kNoRT);
  }

  std::map<std::string, std::vector<double>> acc;
  std::map<std::string, std::map<double, std::vector<double>>> fgsm;
  std::vector<double> final_clean_precision;

  for (int s = 0; s < spec.seeds; ++s) {
    const uint64_t seed = config.meta.seed + static_cast<uint64_t>(s);
    Dataset ds = spec.data_kind == "blobs"
                     ? generate_blobs(spec.num_classes, spec.dim, spec.n, spec.separation, seed)
                     : generate_sbm_graph(spec.communities, spec.nodes_per_community, spec.p_in,
                                          spec.p_out, spec.dim, seed);
    if (spec.noise_rate > 0) {
      auto tm = noisegen::build_transition_matrix(spec.noise_kind, spec.noise_rate,
                                                  ds.num_classes);
      noisegen::inject_noise(ds, tm, RandomStream::fork(seed, {0x613}).next_u64());
    }
    Config run_cfg = config;
    run_cfg.meta.seed = seed;
    run_cfg.meta.mode = ds.mode;

    for (auto variant : variants) {
      trainer::TrainResult res = trainer::train(ds, run_cfg, variant);
      EvalResult ev = evaluate(res.state, ds, "test");
      const std::string name = trainer::variant_name(variant);
      acc[name].push_back(ev.acc_s);

      if (variant == trainer::Variant::kFull) {
        enrich_history(res.history, ds);
        for (auto it = res.history.rbegin(); it != res.history.rend(); ++it) {
          if (it->has_selection && it->clean_precision.has_value()) {
            final_clean_precision.push_back(*it->clean_precision);
            break;
          }
        }
      }
      if (!spec.fgsm_epsilons.empty() &&
          (variant == trainer::Variant::kFull || variant == trainer::Variant::kBaseline)) {
        for (const AttackPoint& pt : attack_eval(res.state, ds, spec.fgsm_epsilons)) {
          fgsm[name][pt.epsilon].push_back(pt.accuracy);
        }
      }
    }
  }

  nlohmann::json report;
  report["n_seeds"] = spec.seeds;
  report["data_kind"] = spec.data_kind;
  report["noise_kind"] = spec.noise_kind;
  report["noise_rate"] = spec.noise_rate;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [name, vals] : acc) {
    Stats st = mean_std(vals);
    rows.push_back({{"name", name},
                    {"mean", st.mean},
                    {"std", st.stddev},
                    {"n_seeds", vals.size()},
                    {"per_seed", vals}});
  }
  report["rows"] = std::move(rows);
  if (!final_clean_precision.empty()) {
    Stats st = mean_std(final_clean_precision);
    report["selector"] = {{"final_clean_precision_mean", st.mean},
                          {"final_clean_precision_std", st.stddev}};
  }
  if (!fgsm.empty()) {
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& [name, by_eps] : fgsm) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& [eps, vals] : by_eps) {
        Stats st = mean_std(vals);
        pts.push_back({{"epsilon", eps}, {"mean", st.mean}, {"std", st.stddev}});
      }
      sweep.push_back({{"name", name}, {"points", pts}});
    }
    report["fgsm"] = std::move(sweep);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Plots

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

// Minimal deterministic SVG line chart.
class LineChart {
 public:
  LineChart(std::string title, double xmax, double ymin, double ymax)
      : title_(std::move(title)), xmax_(std::max(1.0, xmax)), ymin_(ymin), ymax_(ymax) {
    if (ymax_ <= ymin_) ymax_ = ymin_ + 1.0;
  }

  void add_series(const std::string& name, const std::vector<double>& xs,
                  const std::vector<double>& ys) {
    series_.push_back({name, xs, ys});
  }
  void add_vline(double x) { vlines_.push_back(x); }

  std::string render() const {
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\">\n";
    svg << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
        << title_ << "</text>\n";
    svg << "<line x1=\"" << kMl << "\" y1=\"" << kH - kMb << "\" x2=\"" << kW - kMr << "\" y2=\""
        << kH - kMb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMl << "\" y1=\"" << kMt << "\" x2=\"" << kMl << "\" y2=\""
        << kH - kMb << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      double fy = ymin_ + (ymax_ - ymin_) * i / 4.0;
      double py = ty(fy);
      svg << "<text x=\"" << kMl - 6 << "\" y=\"" << fmt(py + 4)
          << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(fy) << "</text>\n";
      double fx = xmax_ * i / 4.0;
      svg << "<text x=\"" << fmt(tx(fx)) << "\" y=\"" << kH - kMb + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(fx) << "</text>\n";
    }
    for (double x : vlines_) {
      svg << "<line x1=\"" << fmt(tx(x)) << "\" y1=\"" << kMt << "\" x2=\"" << fmt(tx(x))
          << "\" y2=\"" << kH - kMb << "\" stroke=\"#999999\" stroke-dasharray=\"4,3\"/>\n";
    }
    for (size_t s = 0; s < series_.size(); ++s) {
      const auto& ser = series_[s];
      const char* color = kPalette[s % 6];
      if (ser.xs.size() == 1) {
        svg << "<circle cx=\"" << fmt(tx(ser.xs[0])) << "\" cy=\"" << fmt(ty(ser.ys[0]))
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      } else if (!ser.xs.empty()) {
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (size_t i = 0; i < ser.xs.size(); ++i) {
          svg << fmt(tx(ser.xs[i])) << "," << fmt(ty(ser.ys[i])) << " ";
        }
        svg << "\"/>\n";
      }
      svg << "<text x=\"" << kW - kMr + 4 << "\" y=\"" << kMt + 14 * (static_cast<int>(s) + 1)
          << "\" font-size=\"10\" fill=\"" << color << "\">" << ser.name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
  }

 private:
  static constexpr int kW = 720, kH = 420, kMl = 52, kMr = 110, kMt = 30, kMb = 36;
  double tx(double x) const {
    return kMl + (kW - kMl - kMr) * (x / xmax_);
  }
  double ty(double y) const {
    return (kH - kMb) - (kH - kMt - kMb) * ((y - ymin_) / (ymax_ - ymin_));
  }

  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_;
  double xmax_, ymin_, ymax_;
  std::vector<Series> series_;
  std::vector<double> vlines_;
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

}  // namespace

void emit_plots(const std::vector<trainer::EpochRecord>& history, const PhaseSchedule& schedule,
                const std::string& out_dir) {
  if (history.empty()) throw std::invalid_argument("emit_plots: empty metric history");
  std::filesystem::create_directories(out_dir);
  const double xmax = static_cast<double>(history.back().epoch);

  std::vector<double> epochs;
  for (const auto& r : history) epochs.push_back(static_cast<double>(r.epoch));

  {
    LineChart chart("accuracy vs epoch", xmax, 0.0, 1.0);
    auto collect = [&](auto getter) {
      std::vector<double> ys;
      for (const auto& r : history) ys.push_back(getter(r));
      return ys;
    };
    chart.add_series("test_acc_s", epochs,
                     collect([](const trainer::EpochRecord& r) { return r.test_acc_s; }));
    chart.add_series("test_acc_t", epochs,
                     collect([](const trainer::EpochRecord& r) { return r.test_acc_t; }));
    chart.add_series("train_acc_s", epochs,
                     collect([](const trainer::EpochRecord& r) { return r.train_acc_s; }));
    chart.add_series("train_acc_t", epochs,
                     collect([](const trainer::EpochRecord& r) { return r.train_acc_t; }));
    chart.add_vline(static_cast<double>(schedule.epochs_warmup));
    chart.add_vline(static_cast<double>(schedule.epochs_warmup + schedule.epochs_injection));
    write_file(out_dir + "/accuracy.svg", chart.render());
  }

  {
    std::set<std::string> keys;
    for (const auto& r : history) {
      for (const auto& [k, v] : r.loss_components) keys.insert(k);
    }
    double ymin = 0, ymax = 1e-9;
    for (const auto& r : history) {
      for (const auto& [k, v] : r.loss_components) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
    LineChart chart("loss components vs epoch", xmax, ymin, ymax);
    for (const auto& key : keys) {
      std::vector<double> xs, ys;
      for (const auto& r : history) {
        auto it = r.loss_components.find(key);
        if (it != r.loss_components.end()) {
          xs.push_back(static_cast<double>(r.epoch));
          ys.push_back(it->second);
        }
      }
      chart.add_series(key, xs, ys);
    }
    chart.add_vline(static_cast<double>(schedule.epochs_warmup));
    chart.add_vline(static_cast<double>(schedule.epochs_warmup + schedule.epochs_injection));
    write_file(out_dir + "/losses.svg", chart.render());
  }

  {
    LineChart chart("selector precision/recall vs epoch", xmax, 0.0, 1.0);
    auto collect_opt = [&](auto getter, const std::string& name) {
      std::vector<double> xs, ys;
      for (const auto& r : history) {
        auto v = getter(r);
        if (v.has_value()) {
          xs.push_back(static_cast<double>(r.epoch));
          ys.push_back(*v);
        }
      }
      chart.add_series(name, xs, ys);
    };
    collect_opt([](const trainer::EpochRecord& r) { return r.clean_precision; },
                "clean_precision");
    collect_opt([](const trainer::EpochRecord& r) { return r.clean_recall; }, "clean_recall");
    collect_opt([](const trainer::EpochRecord& r) { return r.noise_precision; },
                "noise_precision");
    collect_opt([](const trainer::EpochRecord& r) { return r.noise_recall; }, "noise_recall");
    write_file(out_dir + "/selector.svg", chart.render());
  }
}

// ---------------------------------------------------------------------------
// Bound verification

std::vector<BoundCheck> verify_bounds(int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_bounds: trials must be >= 1");
  using infomath::DiscreteJoint;
  std::vector<BoundCheck> out;

  auto run_check = [&](const std::string& name, auto slack_fn) {
    BoundCheck chk;
    chk.name = name;
    chk.trials = trials;
    chk.min_slack = 1e300;
    for (int t = 0; t < trials; ++t) {
      chk.min_slack = std::min(chk.min_slack, slack_fn(t));
    }
    chk.pass = chk.min_slack >= -1e-10;
    out.push_back(chk);
  };

  // (a) I(Y;S,T) >= max(I(Y;S), I(Y;T)) on arbitrary random joints.
  run_check("joint_dominates_marginals", [&](int t) {
    RandomStream rng = RandomStream::fork(seed, {0xa0, static_cast<uint64_t>(t)});
    DiscreteJoint j = DiscreteJoint::random({"Y", "S", "T"}, {3, 3, 3}, rng);
    double lhs = j.mi({"Y"}, {"S", "T"});
    return lhs - std::max(j.mi({"Y"}, {"S"}), j.mi({"Y"}, {"T"}));
  });

  // (b) I(D;S,T) <= I(D;S) + I(D;T) under the markov chain S <-> D <-> T.
  run_check("markov_subadditivity", [&](int t) {
    RandomStream rng = RandomStream::fork(seed, {0xb0, static_cast<uint64_t>(t)});
    const int nd = 3, ns = 3, nt = 3;
    std::vector<double> pd(nd);
    double sum = 0;
    for (auto& p : pd) {
      p = -std::log(1.0 - rng.uniform01());
      sum += p;
    }
    for (auto& p : pd) p /= sum;
    auto random_rows = [&](int r, int c) {
      Mat m(r, c);
      for (int i = 0; i < r; ++i) {
        double rs = 0;
        for (int k = 0; k < c; ++k) {
          m(i, k) = -std::log(1.0 - rng.uniform01());
          rs += m(i, k);
        }
        m.row(i) /= rs;
      }
      return m;
    };
    Mat ps = random_rows(nd, ns), pt = random_rows(nd, nt);
    std::vector<double> table(static_cast<size_t>(nd * ns * nt));
    double total = 0;
    for (int d = 0; d < nd; ++d) {
      for (int s = 0; s < ns; ++s) {
        for (int u = 0; u < nt; ++u) {
          double v = pd[static_cast<size_t>(d)] * ps(d, s) * pt(d, u);
          table[static_cast<size_t>((d * ns + s) * nt + u)] = v;
          total += v;
        }
      }
    }
    for (auto& v : table) v /= total;
    DiscreteJoint j({"D", "S", "T"}, {nd, ns, nt}, table);
    return j.mi({"D"}, {"S"}) + j.mi({"D"}, {"T"}) - j.mi({"D"}, {"S", "T"});
  });

  // (c) I(S;T|Y) = I(S,Y;T,Y) - H(Y); an identity, slack is -|error|.
  run_check("conditional_mi_identity", [&](int t) {
    RandomStream rng = RandomStream::fork(seed, {0xc0, static_cast<uint64_t>(t)});
    DiscreteJoint j = DiscreteJoint::random({"S", "T", "Y"}, {2, 2, 3}, rng);
    double lhs = j.conditional_mi({"S"}, {"T"}, {"Y"});
    double rhs = j.mi_overlap({"S", "Y"}, {"T", "Y"}) - j.entropy({"Y"});
    return -std::abs(lhs - rhs);
  });

  // (d) Nuisance invariance on the chain (Y,Dn) -> D -> (S,T), Dn independent
  // of Y: I(Dn;S,T) <= -I(Y;S,T) + I(D;S,T).
  run_check("nuisance_invariance", [&](int t) {
    RandomStream rng = RandomStream::fork(seed, {0xd0, static_cast<uint64_t>(t)});
    const int ny = 3, nn = 2, nd = 4, ns = 2, nt = 2;
    auto simplex = [&](int k) {
      std::vector<double> p(static_cast<size_t>(k));
      double s = 0;
      for (auto& v : p) {
        v = -std::log(1.0 - rng.uniform01());
        s += v;
      }
      for (auto& v : p) v /= s;
      return p;
    };
    std::vector<double> py = simplex(ny), pn = simplex(nn);
    std::vector<std::vector<double>> pd(static_cast<size_t>(ny * nn));
    for (auto& row : pd) row = simplex(nd);
    std::vector<std::vector<double>> pst(static_cast<size_t>(nd));
    for (auto& row : pst) row = simplex(ns * nt);

    std::vector<double> table(static_cast<size_t>(ny * nn * nd * ns * nt));
    double total = 0;
    for (int y = 0; y < ny; ++y) {
      for (int n = 0; n < nn; ++n) {
        for (int d = 0; d < nd; ++d) {
          for (int s = 0; s < ns; ++s) {
            for (int u = 0; u < nt; ++u) {
              double v = py[static_cast<size_t>(y)] * pn[static_cast<size_t>(n)] *
                         pd[static_cast<size_t>(y * nn + n)][static_cast<size_t>(d)] *
                         pst[static_cast<size_t>(d)][static_cast<size_t>(s * nt + u)];
              table[static_cast<size_t>((((y * nn + n) * nd + d) * ns + s) * nt + u)] = v;
              total += v;
            }
          }
        }
      }
    }
    for (auto& v : table) v /= total;
    DiscreteJoint j({"Y", "Dn", "D", "S", "T"}, {ny, nn, nd, ns, nt}, table);
    double lhs = j.mi({"Dn"}, {"S", "T"});
    double rhs = -j.mi({"Y"}, {"S", "T"}) + j.mi({"D"}, {"S", "T"});
    return rhs - lhs;
  });

  // (e) Feature convergence, with Y = (Yc,Yn) as a product variable;
  // rejection sampling enforces the lemma's precondition together with its
  // assumption that Y carries the information of Yc and Yn without synergy
  // (subadditivity of I(Yc,Yn;.) — the step the proof relies on, without
  // which random joints falsify the printed inequality).
  run_check("feature_convergence", [&](int t) {
    const double eps = 0.1;
    for (uint64_t attempt = 0;; ++attempt) {
      RandomStream rng = RandomStream::fork(seed, {0xe0, static_cast<uint64_t>(t), attempt});
      DiscreteJoint j = DiscreteJoint::random({"Yc", "Yn", "S", "T"}, {2, 2, 3, 3}, rng);
      double pre = std::max(j.mi({"Yn"}, {"S"}), j.mi({"Yc"}, {"T"}));
      double k = std::max(j.mi({"S"}, {"T"}), eps) / 2.0;
      if (pre > k) continue;
      if (j.mi({"Yc", "Yn"}, {"S"}) > j.mi({"Yc"}, {"S"}) + j.mi({"Yn"}, {"S"})) continue;
      if (j.mi({"Yc", "Yn"}, {"T"}) > j.mi({"Yc"}, {"T"}) + j.mi({"Yn"}, {"T"})) continue;
      double lhs = -j.mi({"Yc"}, {"S"}) - j.mi({"Yn"}, {"T"}) - eps;
      double rhs = -j.mi({"Yc", "Yn"}, {"S", "T"}) + j.conditional_mi({"S"}, {"T"}, {"Yc", "Yn"});
      return rhs - lhs;
    }
  });

  return out;
}

}  // namespace nrib::harness
