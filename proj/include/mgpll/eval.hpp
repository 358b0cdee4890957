#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mgpll/dataset.hpp"
#include "mgpll/detail/sha1.hpp"
#include "mgpll/detail/text.hpp"
#include "mgpll/plknn.hpp"
#include "mgpll/train.hpp"

namespace mgpll {

enum class MetricKind { Accuracy, MaeWithin };

struct Metric {
  MetricKind kind = MetricKind::Accuracy;
  int years = 0;  // MaeWithin threshold

  static Metric accuracy() { return {MetricKind::Accuracy, 0}; }
  static Metric mae_within(int years) { return {MetricKind::MaeWithin, years}; }
  std::string name() const {
    return kind == MetricKind::Accuracy ? "accuracy" : "mae" + std::to_string(years);
  }
};

inline double accuracy(std::span<const int> preds, std::span<const int> truths) {
  if (preds.size() != truths.size() || preds.empty()) throw InvalidArgument("accuracy: length mismatch or empty");
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i];
  return static_cast<double>(hits) / preds.size();
}

// Class names must parse as integer ages; anything else is a loud error, not
// a silent fallback to plain accuracy.
inline std::vector<int> parse_class_ages(std::span<const std::string> class_names) {
  std::vector<int> ages(class_names.size());
  for (std::size_t j = 0; j < class_names.size(); ++j) {
    long v = 0;
    if (!detail::parse_long(detail::trim(class_names[j]), v)) {
      throw FormatError("class name '" + class_names[j] + "' is not an integer age; MAE metrics unavailable");
    }
    ages[j] = static_cast<int>(v);
  }
  return ages;
}

// Fraction of predictions whose age differs from the truth by strictly less
// than `years`.
inline double mae_within(std::span<const int> preds, std::span<const int> truths, std::span<const int> class_ages,
                         int years) {
  if (preds.size() != truths.size() || preds.empty()) throw InvalidArgument("mae_within: length mismatch or empty");
  if (years < 1) throw InvalidArgument("mae_within: years must be positive");
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], t = truths[i];
    if (p < 0 || p >= static_cast<int>(class_ages.size()) || t < 0 || t >= static_cast<int>(class_ages.size())) {
      throw InvalidArgument("mae_within: label index out of range");
    }
    hits += std::abs(class_ages[p] - class_ages[t]) < years;
  }
  return static_cast<double>(hits) / preds.size();
}

inline double apply_metric(const Metric& metric, std::span<const int> preds, std::span<const int> truths,
                           std::span<const std::string> class_names) {
  if (metric.kind == MetricKind::Accuracy) return accuracy(preds, truths);
  const auto ages = parse_class_ages(class_names);
  return mae_within(preds, truths, ages, metric.years);
}

// ---------------------------------------------------------------------------
// Paired t-test at the 0.05 two-tailed level. Critical values are embedded
// for df 1..100 (df above 100 reads the df=100 entry, slightly conservative)
// rather than implementing an incomplete-beta CDF; only df = 9 is exercised
// by the ten-fold protocol.
// ---------------------------------------------------------------------------

inline double t_critical_two_tailed_05(int df) {
  static constexpr double table[100] = {
      12.706205, 4.302653, 3.182446, 2.776445, 2.570582,
      2.446912,  2.364624, 2.306004, 2.262157, 2.228139,
      2.200985,  2.178813, 2.160369, 2.144787, 2.131450,
      2.119905,  2.109816, 2.100922, 2.093024, 2.085963,
      2.079614,  2.073873, 2.068658, 2.063899, 2.059539,
      2.055529,  2.051831, 2.048407, 2.045230, 2.042272,
      2.039513,  2.036933, 2.034515, 2.032245, 2.030108,
      2.028094,  2.026192, 2.024394, 2.022691, 2.021075,
      2.019541,  2.018082, 2.016692, 2.015368, 2.014103,
      2.012896,  2.011741, 2.010635, 2.009575, 2.008559,
      2.007584,  2.006647, 2.005746, 2.004879, 2.004045,
      2.003241,  2.002465, 2.001717, 2.000995, 2.000298,
      1.999624,  1.998972, 1.998341, 1.997730, 1.997138,
      1.996564,  1.996008, 1.995469, 1.994945, 1.994437,
      1.993943,  1.993464, 1.992997, 1.992543, 1.992102,
      1.991673,  1.991254, 1.990847, 1.990450, 1.990063,
      1.989686,  1.989319, 1.988960, 1.988610, 1.988268,
      1.987934,  1.987608, 1.987290, 1.986979, 1.986675,
      1.986377,  1.986086, 1.985802, 1.985523, 1.985251,
      1.984984,  1.984723, 1.984467, 1.984217, 1.983972};
  if (df < 1) throw InvalidArgument("t_critical_two_tailed_05: df must be at least 1");
  return table[std::min(df, 100) - 1];
}

enum class TtestVerdict { Win, Tie, Loss };

struct TtestResult {
  TtestVerdict verdict = TtestVerdict::Tie;
  double t = 0.0;
};

inline const char* verdict_name(TtestVerdict v) {
  switch (v) {
    case TtestVerdict::Win: return "win";
    case TtestVerdict::Tie: return "tie";
    case TtestVerdict::Loss: return "loss";
  }
  return "?";
}

// Two-tailed paired t-test on the fold-wise differences a - b. Win means a is
// significantly higher. Zero-variance differences give a tie when the means
// agree and an infinite-t win/loss otherwise.
inline TtestResult paired_t_test(std::span<const double> a, std::span<const double> b, double level = 0.05) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: length mismatch");
  if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least 2 paired scores");
  if (level != 0.05) throw InvalidArgument("paired_t_test: only the 0.05 level is tabulated");

  const int n = static_cast<int>(a.size());
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));

  TtestResult r;
  if (sd == 0.0) {
    if (mean == 0.0) return {TtestVerdict::Tie, 0.0};
    r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.verdict = mean > 0.0 ? TtestVerdict::Win : TtestVerdict::Loss;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double crit = t_critical_two_tailed_05(n - 1);
  if (r.t > crit) {
    r.verdict = TtestVerdict::Win;
  } else if (r.t < -crit) {
    r.verdict = TtestVerdict::Loss;
  } else {
    r.verdict = TtestVerdict::Tie;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

// A method is a named factory: given a (normalized) training fold and a fold
// seed it returns a batch predictor.
struct CvMethod {
  std::string name;
  std::function<std::function<std::vector<int>(const Matrix&)>(const PlDataset& train, std::uint64_t fold_seed)> fit;
};

inline std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return splitmix64(seed * 1000003ULL + static_cast<std::uint64_t>(fold));
}

// For each fold: fit the normalization on the training split, apply it to the
// held-out split, fit the method, and score the held-out predictions against
// the ground truth.
inline std::vector<double> cross_validate(const PlDataset& ds, const CvMethod& method, int k, std::uint64_t seed,
                                          const Metric& metric = Metric::accuracy()) {
  validate_dataset(ds, "cross_validate");
  if (!ds.true_labels) throw InvalidArgument("cross_validate: dataset must carry ground-truth labels");
  const FoldPlan plan = kfold_split(ds, k, seed);

  std::vector<double> scores;
  scores.reserve(k);
  for (int fold = 0; fold < k; ++fold) {
    const auto train_idx = plan.complement_indices(fold);
    const auto test_idx = plan.fold_indices(fold);
    const PlDataset train_raw = subset(ds, train_idx);
    const PlDataset test_raw = subset(ds, test_idx);

    const NormalizedDataset norm = normalize_features(train_raw);
    const Matrix test_features = norm.scaler.apply(test_raw.features);

    auto predictor = method.fit(norm.dataset, fold_seed(seed, fold));
    const std::vector<int> preds = predictor(test_features);
    scores.push_back(apply_metric(metric, preds, *test_raw.true_labels, ds.class_names));
  }
  return scores;
}

inline CvMethod make_mgpll_method(AblationVariant variant, TrainConfig tcfg, MgpllConfig mcfg) {
  CvMethod m;
  m.name = std::string("mgpll-") + variant_name(variant);
  m.fit = [variant, tcfg, mcfg](const PlDataset& train_ds, std::uint64_t fold_seed) {
    TrainConfig cfg = tcfg;
    cfg.seed = fold_seed;
    auto result = train(train_ds, variant, cfg, mcfg);
    auto model = std::make_shared<MgpllModel>(std::move(result.model));
    return [model](const Matrix& x) { return predict_labels(*model, x); };
  };
  return m;
}

inline CvMethod make_plknn_method(int k, KnnWeighting weighting = KnnWeighting::InverseDistance) {
  CvMethod m;
  m.name = "plknn";
  m.fit = [k, weighting](const PlDataset& train_ds, std::uint64_t) {
    auto model = std::make_shared<KnnModel>(plknn_fit(train_ds, k, weighting));
    return [model](const Matrix& x) { return plknn_predict(*model, x); };
  };
  return m;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MethodScores {
  std::string method;
  std::vector<double> fold_scores;
};

// One (dataset x metric) group; methods[0] is the reference every other
// method is t-tested against.
struct ReportBlock {
  std::string dataset;
  std::string metric = "accuracy";
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // set for sweep blocks
  std::vector<MethodScores> methods;
};

struct WinTieLoss {
  int win = 0, tie = 0, loss = 0;
};

struct ExperimentReport {
  std::vector<ReportBlock> blocks;
  std::uint64_t seed = 0;
  int folds = 0;
  std::string input_hash;      // git-style blob hash of the dataset file
  std::string config_summary;  // resolved configuration, key=value pairs

  // Reference-vs-method tallies across all blocks (reference wins count as
  // 'win').
  WinTieLoss tally() const {
    WinTieLoss wtl;
    for (const auto& block : blocks) {
      for (std::size_t i = 1; i < block.methods.size(); ++i) {
        const auto r = paired_t_test(block.methods[0].fold_scores, block.methods[i].fold_scores);
        if (r.verdict == TtestVerdict::Win) ++wtl.win;
        else if (r.verdict == TtestVerdict::Loss) ++wtl.loss;
        else ++wtl.tie;
      }
    }
    return wtl;
  }
};

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

// Sample standard deviation (n-1 denominator).
inline double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1));
}

enum class ReportFormat { Text, Csv };

// Table 3-style constants for the comparison methods that are not
// implemented here; they appear in text reports purely as quoted context.
struct FixtureRow {
  const char* dataset;
  const char* metric;
  const char* method;
  double mean;
  double stddev;
};

inline std::span<const FixtureRow> comparison_fixtures() {
  static constexpr FixtureRow rows[] = {
      {"fgnet", "accuracy", "SURE", 0.068, 0.032},  {"fgnet", "accuracy", "PALOC", 0.064, 0.019},
      {"fgnet", "accuracy", "CLPL", 0.063, 0.027},  {"fgnet", "accuracy", "PL-SVM", 0.063, 0.029},
      {"fgnet", "mae3", "SURE", 0.458, 0.024},      {"fgnet", "mae3", "PALOC", 0.435, 0.018},
      {"fgnet", "mae3", "CLPL", 0.458, 0.022},      {"fgnet", "mae3", "PL-SVM", 0.356, 0.022},
      {"fgnet", "mae5", "SURE", 0.615, 0.019},      {"fgnet", "mae5", "PALOC", 0.609, 0.043},
      {"fgnet", "mae5", "CLPL", 0.596, 0.017},      {"fgnet", "mae5", "PL-SVM", 0.479, 0.016},
      {"lost", "accuracy", "SURE", 0.780, 0.036},   {"lost", "accuracy", "PALOC", 0.629, 0.056},
      {"lost", "accuracy", "CLPL", 0.742, 0.038},   {"lost", "accuracy", "PL-SVM", 0.729, 0.042},
      {"msrcv2", "accuracy", "SURE", 0.481, 0.036}, {"msrcv2", "accuracy", "PALOC", 0.479, 0.042},
      {"msrcv2", "accuracy", "CLPL", 0.413, 0.041}, {"msrcv2", "accuracy", "PL-SVM", 0.461, 0.046},
      {"birdsong", "accuracy", "SURE", 0.728, 0.024},   {"birdsong", "accuracy", "PALOC", 0.711, 0.016},
      {"birdsong", "accuracy", "CLPL", 0.632, 0.019},   {"birdsong", "accuracy", "PL-SVM", 0.660, 0.037},
      {"yahoonews", "accuracy", "SURE", 0.644, 0.015},  {"yahoonews", "accuracy", "PALOC", 0.625, 0.005},
      {"yahoonews", "accuracy", "CLPL", 0.462, 0.009},  {"yahoonews", "accuracy", "PL-SVM", 0.629, 0.010},
  };
  return rows;
}

// Lowercase alphanumeric squeeze, for fixture lookup by dataset name.
inline std::string normalized_dataset_key(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c >= 'A' && c <= 'Z') key += static_cast<char>(c - 'A' + 'a');
    else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) key += c;
  }
  return key;
}

inline std::string report_to_text(const ExperimentReport& report, bool include_fixtures = false) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "# experiment report\n";
  os << "# seed: " << report.seed << "  folds: " << report.folds;
  if (!report.input_hash.empty()) os << "  input: " << report.input_hash;
  os << "\n";
  if (!report.config_summary.empty()) os << "# config: " << report.config_summary << "\n";

  for (const auto& block : report.blocks) {
    os << "\n" << block.dataset;
    if (!std::isnan(block.epsilon)) os << "  epsilon=" << block.epsilon;
    os << "  [" << block.metric << "]\n";
    std::size_t width = 12;
    for (const auto& m : block.methods) width = std::max(width, m.method.size() + 2);
    for (std::size_t i = 0; i < block.methods.size(); ++i) {
      const auto& m = block.methods[i];
      os << "  " << std::left << std::setw(static_cast<int>(width)) << m.method;
      os << std::fixed << std::setprecision(4) << mean_of(m.fold_scores) << " +- " << stddev_of(m.fold_scores);
      os.unsetf(std::ios::fixed);
      if (i == 0) {
        os << "  (reference)";
      } else {
        const auto r = paired_t_test(block.methods[0].fold_scores, m.fold_scores);
        // marker appears exactly when the verdict is not a tie
        if (r.verdict != TtestVerdict::Tie) os << "  *";
        os << "  t=" << std::setprecision(4) << r.t << " " << verdict_name(r.verdict);
      }
      os << "\n";
    }
    if (include_fixtures) {
      const std::string key = normalized_dataset_key(block.dataset);
      for (const auto& f : comparison_fixtures()) {
        if (key.find(f.dataset) != std::string::npos && block.metric == f.metric) {
          os << "  " << std::left << std::setw(static_cast<int>(width)) << (std::string(f.method) + "'")
             << std::fixed << std::setprecision(4) << f.mean << " +- " << f.stddev << "  (quoted)\n";
          os.unsetf(std::ios::fixed);
        }
      }
    }
  }
  const auto wtl = report.tally();
  os << "\nwin/tie/loss vs reference: " << wtl.win << "/" << wtl.tie << "/" << wtl.loss << "\n";
  return os.str();
}

// One row per (dataset, metric, method, fold); scores carry full round-trip
// precision. Schema v1, documented in docs/FORMATS.md.
inline std::string report_to_csv(const ExperimentReport& report) {
  std::string out = "dataset,metric,method,fold,score\n";
  for (const auto& block : report.blocks) {
    for (const auto& m : block.methods) {
      for (std::size_t fold = 0; fold < m.fold_scores.size(); ++fold) {
        out += block.dataset;
        out += ',';
        out += block.metric;
        out += ',';
        out += m.method;
        out += ',';
        out += std::to_string(fold);
        out += ',';
        out += detail::format_double(m.fold_scores[fold]);
        out += '\n';
      }
    }
  }
  return out;
}

// Sweep file for accuracy-vs-epsilon curves: only blocks that carry an
// epsilon appear. Schema v1.
inline std::string sweep_to_csv(const ExperimentReport& report) {
  std::string out = "dataset,epsilon,method,fold,score\n";
  for (const auto& block : report.blocks) {
    if (std::isnan(block.epsilon)) continue;
    for (const auto& m : block.methods) {
      for (std::size_t fold = 0; fold < m.fold_scores.size(); ++fold) {
        out += block.dataset;
        out += ',';
        out += detail::format_double(block.epsilon);
        out += ',';
        out += m.method;
        out += ',';
        out += std::to_string(fold);
        out += ',';
        out += detail::format_double(m.fold_scores[fold]);
        out += '\n';
      }
    }
  }
  return out;
}

struct CsvRecord {
  std::string dataset, metric, method;
  int fold = 0;
  double score = 0.0;
};

inline std::vector<CsvRecord> parse_report_csv(const std::string& csv) {
  std::vector<CsvRecord> records;
  long line_no = 0;
  for (auto line : detail::split(csv, '\n')) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line_no == 1) continue;  // header
    auto f = detail::split(line, ',');
    if (f.size() != 5) throw FormatError("report csv", line_no, "expected 5 fields");
    CsvRecord r;
    r.dataset = std::string(f[0]);
    r.metric = std::string(f[1]);
    r.method = std::string(f[2]);
    long fold = 0;
    if (!detail::parse_long(f[3], fold)) throw FormatError("report csv", line_no, "bad fold");
    r.fold = static_cast<int>(fold);
    if (!detail::parse_double(f[4], r.score)) throw FormatError("report csv", line_no, "bad score");
    records.push_back(std::move(r));
  }
  return records;
}

// Writes <base>.txt or <base>.csv (+ <base>_sweep.csv when any block carries
// an epsilon). Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, ReportFormat format,
                                                      const std::filesystem::path& base,
                                                      bool include_fixtures = false) {
  std::vector<std::filesystem::path> written;
  auto write_file = [&](const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("emit_report: cannot open " + p.string());
    out << content;
    if (!out) throw IoError("emit_report: write failed for " + p.string());
    written.push_back(p);
  };
  if (format == ReportFormat::Text) {
    write_file(base.string() + ".txt", report_to_text(report, include_fixtures));
  } else {
    write_file(base.string() + ".csv", report_to_csv(report));
    bool any_eps = false;
    for (const auto& b : report.blocks) any_eps = any_eps || !std::isnan(b.epsilon);
    if (any_eps) write_file(base.string() + "_sweep.csv", sweep_to_csv(report));
  }
  return written;
}

}  // namespace mgpll
