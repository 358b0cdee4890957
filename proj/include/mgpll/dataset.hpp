#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <locale>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mgpll/detail/text.hpp"
#include "mgpll/matrix.hpp"
#include "mgpll/rng.hpp"

namespace mgpll {

// A partial-label dataset: n instances with d features, a candidate label set
// over L classes per instance, and (when ground truth is known) the hidden
// true label. Immutable after construction; freely shareable across threads.
struct PlDataset {
  Matrix features;                        // n x d
  Matrix candidates;                      // n x L, binary, every row has >= 1 set bit
  std::optional<std::vector<int>> true_labels;  // length n; always a candidate
  std::vector<std::string> class_names;   // length L
  std::string name;

  int size() const { return features.rows(); }
  int feature_dim() const { return features.cols(); }
  int label_count() const { return candidates.cols(); }
};

enum class PlFormat { PlCsv, PlSparse };

enum class SynthMode { Random, Coupled };

// Controls for the synthetic corruption protocol: p = proportion of instances
// that receive noise labels, r = false positives per corrupted instance,
// epsilon = probability that the designated coupled label co-occurs with the
// true label (Coupled mode, which fixes p = 1, r = 1).
struct SynthConfig {
  double p = 1.0;
  int r = 1;
  double epsilon = 0.0;
  SynthMode mode = SynthMode::Random;
  std::uint64_t seed = 0;
  bool coupled_derangement = false;  // seeded random derangement instead of (j+1) mod L
};

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // fold index per instance
  std::uint64_t seed = 0;

  std::vector<int> fold_indices(int fold) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i) {
      if (assignments[i] == fold) idx.push_back(i);
    }
    return idx;
  }
  std::vector<int> complement_indices(int fold) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i) {
      if (assignments[i] != fold) idx.push_back(i);
    }
    return idx;
  }
};

inline void validate_dataset(const PlDataset& ds, const char* context) {
  const int n = ds.features.rows();
  const int label_dim = ds.candidates.cols();
  if (ds.candidates.rows() != n) throw InvalidArgument(std::string(context) + ": feature/candidate row mismatch");
  if (static_cast<int>(ds.class_names.size()) != label_dim) {
    throw InvalidArgument(std::string(context) + ": class name count != L");
  }
  ensure_finite(ds.features, context);
  for (int i = 0; i < n; ++i) {
    int bits = 0;
    for (int j = 0; j < label_dim; ++j) {
      const double v = ds.candidates(i, j);
      if (v != 0.0 && v != 1.0) throw InvalidArgument(std::string(context) + ": candidate matrix not binary");
      bits += v == 1.0;
    }
    if (bits == 0) {
      throw InvalidArgument(std::string(context) + ": empty candidate set at row " + std::to_string(i));
    }
  }
  if (ds.true_labels) {
    if (static_cast<int>(ds.true_labels->size()) != n) {
      throw InvalidArgument(std::string(context) + ": true label count mismatch");
    }
    for (int i = 0; i < n; ++i) {
      const int t = (*ds.true_labels)[i];
      if (t < 0 || t >= label_dim || ds.candidates(i, t) != 1.0) {
        throw InvalidArgument(std::string(context) + ": true label not among candidates at row " + std::to_string(i));
      }
    }
  }
}

inline double mean_candidate_count(const PlDataset& ds) {
  double total = 0.0;
  for (double v : ds.candidates.data()) total += v;
  return total / ds.size();
}

namespace detail {

inline std::vector<std::string> default_class_names(int label_dim) {
  std::vector<std::string> names(label_dim);
  for (int j = 0; j < label_dim; ++j) names[j] = std::to_string(j);
  return names;
}

inline void parse_feature_section(std::string_view section, PlFormat format, int d,
                                  const std::string& file, long line_no, std::span<double> out) {
  if (format == PlFormat::PlCsv) {
    auto parts = split(trim(section), ',');
    if (static_cast<int>(parts.size()) != d) {
      throw FormatError(file, line_no, "expected " + std::to_string(d) + " features, got " + std::to_string(parts.size()));
    }
    for (int j = 0; j < d; ++j) {
      if (!parse_double(trim(parts[j]), out[j])) {
        throw FormatError(file, line_no, "malformed feature value '" + std::string(trim(parts[j])) + "'");
      }
    }
  } else {
    for (auto& v : out) v = 0.0;
    auto body = trim(section);
    if (body.empty()) return;
    for (auto pair : split(body, ',')) {
      pair = trim(pair);
      const std::size_t colon = pair.find(':');
      if (colon == std::string_view::npos) {
        throw FormatError(file, line_no, "sparse feature entry missing ':'");
      }
      long idx = 0;
      double val = 0.0;
      if (!parse_long(trim(pair.substr(0, colon)), idx) || idx < 0 || idx >= d) {
        throw FormatError(file, line_no, "sparse feature index out of range");
      }
      if (!parse_double(trim(pair.substr(colon + 1)), val)) {
        throw FormatError(file, line_no, "malformed sparse feature value");
      }
      out[idx] = val;
    }
  }
}

}  // namespace detail

// File layout (both formats): optional '# name:' / '# classes:' comment
// directives, a 'n d L' header line, then one instance per line:
//   features | candidate class indices | optional true label
// PlCsv writes all d feature values comma-separated; PlSparse writes
// 'idx:val' pairs for the nonzero ones. See docs/FORMATS.md.
inline PlDataset load_dataset(const std::filesystem::path& path, PlFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset: cannot open " + path.string());
  const std::string file = path.filename().string();

  PlDataset ds;
  std::string line;
  long line_no = 0;
  long n = 0, d = 0, label_dim = 0;
  bool header_seen = false;
  std::string pending_name;
  std::vector<std::string> pending_classes;

  long row = 0;
  std::vector<int> trues;
  bool any_true = false, any_missing_true = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      std::string_view body = detail::trim(sv.substr(1));
      if (body.rfind("name:", 0) == 0) {
        pending_name = std::string(detail::trim(body.substr(5)));
      } else if (body.rfind("classes:", 0) == 0) {
        pending_classes.clear();
        for (auto part : detail::split(detail::trim(body.substr(8)), ',')) {
          pending_classes.emplace_back(detail::trim(part));
        }
      }
      continue;
    }
    if (!header_seen) {
      std::vector<std::string_view> parts;
      for (auto p : detail::split(sv, ' ')) {
        if (!detail::trim(p).empty()) parts.push_back(detail::trim(p));
      }
      if (parts.size() != 3 || !detail::parse_long(parts[0], n) || !detail::parse_long(parts[1], d) ||
          !detail::parse_long(parts[2], label_dim) || n < 1 || d < 1 || label_dim < 2) {
        throw FormatError(file, line_no, "malformed header, expected 'n d L'");
      }
      header_seen = true;
      ds.features = Matrix(static_cast<int>(n), static_cast<int>(d));
      ds.candidates = Matrix(static_cast<int>(n), static_cast<int>(label_dim));
      trues.assign(n, -1);
      continue;
    }
    if (row >= n) throw FormatError(file, line_no, "more instance lines than the header's n");

    auto sections = detail::split(sv, '|');
    if (sections.size() != 2 && sections.size() != 3) {
      throw FormatError(file, line_no, "expected 'features | candidates [| true]'");
    }
    detail::parse_feature_section(sections[0], format, static_cast<int>(d), file, line_no,
                                  ds.features.row(static_cast<int>(row)));

    auto cand_body = detail::trim(sections[1]);
    if (cand_body.empty()) throw FormatError(file, line_no, "empty candidate set at instance " + std::to_string(row));
    for (auto part : detail::split(cand_body, ',')) {
      long c = 0;
      if (!detail::parse_long(detail::trim(part), c) || c < 0 || c >= label_dim) {
        throw FormatError(file, line_no, "candidate index out of range");
      }
      if (ds.candidates(static_cast<int>(row), static_cast<int>(c)) == 1.0) {
        throw FormatError(file, line_no, "duplicate candidate index " + std::to_string(c));
      }
      ds.candidates(static_cast<int>(row), static_cast<int>(c)) = 1.0;
    }

    if (sections.size() == 3 && !detail::trim(sections[2]).empty()) {
      long t = 0;
      if (!detail::parse_long(detail::trim(sections[2]), t) || t < 0 || t >= label_dim) {
        throw FormatError(file, line_no, "true label out of range");
      }
      if (ds.candidates(static_cast<int>(row), static_cast<int>(t)) != 1.0) {
        throw FormatError(file, line_no, "true label " + std::to_string(t) + " is not a candidate");
      }
      trues[row] = static_cast<int>(t);
      any_true = true;
    } else {
      any_missing_true = true;
    }
    ++row;
  }
  if (!header_seen) throw FormatError(file, line_no, "missing header");
  if (row != n) {
    throw FormatError(file, line_no, "expected " + std::to_string(n) + " instances, got " + std::to_string(row));
  }
  if (any_true && any_missing_true) {
    throw FormatError(file, line_no, "true labels must be present on every instance or on none");
  }
  if (any_true) ds.true_labels = std::move(trues);

  ds.class_names = pending_classes.empty() ? detail::default_class_names(static_cast<int>(label_dim))
                                           : std::move(pending_classes);
  ds.name = pending_name.empty() ? path.stem().string() : pending_name;
  validate_dataset(ds, "load_dataset");
  return ds;
}

inline void write_dataset(const PlDataset& ds, const std::filesystem::path& path, PlFormat format) {
  validate_dataset(ds, "write_dataset");
  std::ofstream out(path, std::ios::binary);  // '\n' endings everywhere
  if (!out) throw IoError("write_dataset: cannot open " + path.string() + " for writing");
  out << "# name: " << ds.name << "\n";
  out << "# classes: ";
  for (std::size_t j = 0; j < ds.class_names.size(); ++j) {
    if (j) out << ',';
    out << ds.class_names[j];
  }
  out << "\n";
  out << ds.size() << ' ' << ds.feature_dim() << ' ' << ds.label_count() << "\n";
  for (int i = 0; i < ds.size(); ++i) {
    if (format == PlFormat::PlCsv) {
      for (int j = 0; j < ds.feature_dim(); ++j) {
        if (j) out << ',';
        out << detail::format_double(ds.features(i, j));
      }
    } else {
      bool first = true;
      for (int j = 0; j < ds.feature_dim(); ++j) {
        if (ds.features(i, j) == 0.0) continue;
        if (!first) out << ',';
        out << j << ':' << detail::format_double(ds.features(i, j));
        first = false;
      }
    }
    out << " | ";
    bool first = true;
    for (int j = 0; j < ds.label_count(); ++j) {
      if (ds.candidates(i, j) == 1.0) {
        if (!first) out << ',';
        out << j;
        first = false;
      }
    }
    if (ds.true_labels) out << " | " << (*ds.true_labels)[i];
    out << "\n";
  }
  if (!out) throw IoError("write_dataset: write failed for " + path.string());
}

// Per-column min-max transform onto [-1, 1], fit on one dataset and reusable
// on another (test folds reuse the train fold's statistics). Application
// clamps so transformed features always satisfy the dataset range invariant.
struct FeatureScaler {
  std::vector<double> col_min, col_max;

  Matrix apply(const Matrix& m) const {
    if (m.cols() != static_cast<int>(col_min.size())) throw InvalidArgument("FeatureScaler::apply: column mismatch");
    Matrix out(m.rows(), m.cols());
    for (int j = 0; j < m.cols(); ++j) {
      const double lo = col_min[j], hi = col_max[j];
      for (int i = 0; i < m.rows(); ++i) {
        double v;
        if (hi == lo) {
          v = 0.0;  // constant column
        } else {
          v = -1.0 + 2.0 * (m(i, j) - lo) / (hi - lo);
          v = std::clamp(v, -1.0, 1.0);
        }
        out(i, j) = v;
      }
    }
    return out;
  }

  PlDataset apply(const PlDataset& ds) const {
    PlDataset out = ds;
    out.features = apply(ds.features);
    return out;
  }
};

struct NormalizedDataset {
  PlDataset dataset;
  FeatureScaler scaler;
};

inline NormalizedDataset normalize_features(const PlDataset& ds) {
  FeatureScaler scaler;
  scaler.col_min.resize(ds.feature_dim());
  scaler.col_max.resize(ds.feature_dim());
  for (int j = 0; j < ds.feature_dim(); ++j) {
    double lo = ds.features(0, j), hi = ds.features(0, j);
    for (int i = 1; i < ds.size(); ++i) {
      lo = std::min(lo, ds.features(i, j));
      hi = std::max(hi, ds.features(i, j));
    }
    scaler.col_min[j] = lo;
    scaler.col_max[j] = hi;
  }
  return {scaler.apply(ds), std::move(scaler)};
}

inline bool features_normalized(const PlDataset& ds) {
  for (double v : ds.features.data()) {
    if (v < -1.0 - 1e-12 || v > 1.0 + 1e-12) return false;
  }
  return true;
}

// The coupled-label designation: a fixed function of class index and seed.
// Default couples class j to (j+1) mod L; the derangement option draws a
// seeded random fixed-point-free permutation instead.
inline std::vector<int> coupled_label_map(int label_dim, const SynthConfig& cfg) {
  std::vector<int> map(label_dim);
  if (!cfg.coupled_derangement) {
    for (int j = 0; j < label_dim; ++j) map[j] = (j + 1) % label_dim;
    return map;
  }
  Rng rng(splitmix64(cfg.seed ^ 0x636f75706c6564ULL));  // independent of instance draws
  for (;;) {
    std::iota(map.begin(), map.end(), 0);
    rng.shuffle(map);
    bool fixed_point = false;
    for (int j = 0; j < label_dim; ++j) {
      if (map[j] == j) {
        fixed_point = true;
        break;
      }
    }
    if (!fixed_point) return map;
  }
}

// Synthetic corruption of a clean (singleton-candidate) dataset.
//
// Random mode: exactly round-half-even(p*n) instances, chosen as the prefix
// of a seeded shuffle, each receive exactly r distinct false positives drawn
// uniformly from the L-1 non-true labels.
//
// Coupled mode (p = 1, r = 1): every instance receives one false positive,
// the true class's coupled label with probability epsilon, otherwise a
// uniform draw over the remaining L-2 labels.
//
// Draw order per seed: (1) derangement map when configured, (2) Random-mode
// corruption-set shuffle, (3) per-instance noise draws in ascending instance
// order. The true label is never removed.
inline PlDataset synthesize(const PlDataset& clean, const SynthConfig& cfg) {
  validate_dataset(clean, "synthesize");
  if (!clean.true_labels) throw InvalidArgument("synthesize: clean dataset must carry true labels");
  const int n = clean.size();
  const int label_dim = clean.label_count();
  for (int i = 0; i < n; ++i) {
    double bits = 0.0;
    for (int j = 0; j < label_dim; ++j) bits += clean.candidates(i, j);
    if (bits != 1.0) throw InvalidArgument("synthesize: clean dataset must have singleton candidate rows");
  }
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0)) throw InvalidArgument("synthesize: p must be in [0,1]");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw InvalidArgument("synthesize: epsilon must be in [0,1]");
  if (cfg.r < 1 || cfg.r > label_dim - 1) throw InvalidArgument("synthesize: r must be in [1, L-1]");
  if (cfg.mode == SynthMode::Coupled) {
    if (cfg.p != 1.0 || cfg.r != 1) throw InvalidArgument("synthesize: Coupled mode requires p = 1 and r = 1");
    if (label_dim < 3) throw InvalidArgument("synthesize: Coupled mode requires at least 3 classes");
  }

  PlDataset out = clean;
  const auto& trues = *clean.true_labels;
  Rng rng(cfg.seed);

  std::ostringstream suffix;
  suffix.imbue(std::locale::classic());

  if (cfg.mode == SynthMode::Random) {
    const long corrupt_count = std::lround(std::nearbyint(cfg.p * n));  // round half to even
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<int> chosen(order.begin(), order.begin() + corrupt_count);
    std::sort(chosen.begin(), chosen.end());

    std::vector<int> pool;
    pool.reserve(label_dim - 1);
    for (int i : chosen) {
      pool.clear();
      for (int j = 0; j < label_dim; ++j) {
        if (j != trues[i]) pool.push_back(j);
      }
      // partial Fisher-Yates: the first r entries are a uniform r-subset
      for (int t = 0; t < cfg.r; ++t) {
        const int j = t + static_cast<int>(rng.below(pool.size() - t));
        std::swap(pool[t], pool[j]);
        out.candidates(i, pool[t]) = 1.0;
      }
    }
    suffix << "-p" << cfg.p << "-r" << cfg.r;
  } else {
    const auto coupled = coupled_label_map(label_dim, cfg);
    for (int i = 0; i < n; ++i) {
      const int t = trues[i];
      int noise;
      if (rng.uniform() < cfg.epsilon) {
        noise = coupled[t];
      } else {
        // uniform over the L-2 labels that are neither the true nor the coupled one
        int pick = static_cast<int>(rng.below(label_dim - 2));
        noise = 0;
        for (int j = 0; j < label_dim; ++j) {
          if (j == t || j == coupled[t]) continue;
          if (pick == 0) {
            noise = j;
            break;
          }
          --pick;
        }
      }
      out.candidates(i, noise) = 1.0;
    }
    suffix << "-coupled-eps" << cfg.epsilon;
  }
  out.name = clean.name + suffix.str();
  validate_dataset(out, "synthesize");
  return out;
}

inline FoldPlan kfold_split(const PlDataset& ds, int k, std::uint64_t seed) {
  const int n = ds.size();
  if (k < 2) throw InvalidArgument("kfold_split: k must be at least 2");
  if (n < k) throw InvalidArgument("kfold_split: fewer instances than folds");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  for (int i = 0; i < n; ++i) plan.assignments[order[i]] = i % k;
  return plan;
}

inline PlDataset subset(const PlDataset& ds, std::span<const int> idx) {
  PlDataset out;
  out.features = take_rows(ds.features, idx);
  out.candidates = take_rows(ds.candidates, idx);
  if (ds.true_labels) {
    std::vector<int> t(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) t[i] = (*ds.true_labels)[idx[i]];
    out.true_labels = std::move(t);
  }
  out.class_names = ds.class_names;
  out.name = ds.name;
  return out;
}

}  // namespace mgpll
