#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mgpll/detail/text.hpp"
#include "mgpll/model.hpp"

namespace mgpll {

// Versioned textual checkpoint of the full model bundle: every network's
// specs, parameters, batch-norm statistics and RMSProp accumulators, the
// config, and the training RNG states. Doubles are written with shortest
// round-trip precision, so load(save(m)) reproduces m exactly.

struct Checkpoint {
  MgpllModel model;
  std::string sampler_rng_state;
  std::string shuffle_rng_state;
};

namespace detail {

inline void write_values(std::ostream& os, const char* tag, std::span<const double> v) {
  os << tag << ' ' << v.size();
  for (double x : v) os << ' ' << format_double(x);
  os << '\n';
}

inline void write_mlp(std::ostream& os, const char* name, const MlpState& net) {
  os << "net " << name << ' ' << net.specs.size() << '\n';
  for (std::size_t k = 0; k < net.specs.size(); ++k) {
    const auto& s = net.specs[k];
    os << "layer " << s.in_dim << ' ' << s.out_dim << ' ' << static_cast<int>(s.activation) << ' '
       << format_double(s.leaky_slope) << ' ' << int(s.batch_norm) << '\n';
    const auto& l = net.layers[k];
    const auto& a = net.rms_accum.layers[k];
    write_values(os, "weight", l.weight.data());
    write_values(os, "bias", l.bias);
    write_values(os, "accum_weight", a.weight.data());
    write_values(os, "accum_bias", a.bias);
    if (s.batch_norm) {
      write_values(os, "bn_scale", l.bn_scale);
      write_values(os, "bn_shift", l.bn_shift);
      write_values(os, "bn_run_mean", l.bn_run_mean);
      write_values(os, "bn_run_var", l.bn_run_var);
      write_values(os, "accum_bn_scale", a.bn_scale);
      write_values(os, "accum_bn_shift", a.bn_shift);
    }
  }
}

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path_);
    std::string line;
    while (std::getline(in, line)) {
      auto t = trim(line);
      if (!t.empty()) lines_.emplace_back(t);
    }
  }

  std::string next_line() {
    if (cursor_ >= lines_.size()) throw FormatError(path_ + ": unexpected end of checkpoint");
    return lines_[cursor_++];
  }
  bool done() const { return cursor_ >= lines_.size(); }

  std::vector<std::string> next_tokens(const std::string& expected_head) {
    std::istringstream is(next_line());
    std::vector<std::string> tok;
    std::string t;
    while (is >> t) tok.push_back(t);
    if (tok.empty() || tok[0] != expected_head) {
      throw FormatError(path_ + ": expected '" + expected_head + "' record");
    }
    return tok;
  }

  std::vector<double> next_values(const std::string& tag, std::size_t expected) {
    auto tok = next_tokens(tag);
    std::size_t count = 0;
    if (tok.size() < 2 || !parse_u64_tok(tok[1], count) || count != expected || tok.size() != 2 + count) {
      throw FormatError(path_ + ": malformed '" + tag + "' record");
    }
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!parse_double(tok[2 + i], v[i])) throw FormatError(path_ + ": bad value in '" + tag + "'");
    }
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  static bool parse_u64_tok(const std::string& s, std::size_t& out) {
    std::uint64_t v = 0;
    if (!parse_u64(s, v)) return false;
    out = static_cast<std::size_t>(v);
    return true;
  }

  std::string path_;
  std::vector<std::string> lines_;
  std::size_t cursor_ = 0;
};

inline MlpState read_mlp(CheckpointReader& r, const std::string& expected_name) {
  auto head = r.next_tokens("net");
  long layer_count = 0;
  if (head.size() != 3 || head[1] != expected_name || !parse_long(head[2], layer_count) || layer_count < 1) {
    throw FormatError(r.path() + ": malformed net header (expected " + expected_name + ")");
  }
  MlpState net;
  for (long k = 0; k < layer_count; ++k) {
    auto lt = r.next_tokens("layer");
    long in = 0, out = 0, act = 0, bn = 0;
    double slope = 0.0;
    if (lt.size() != 6 || !parse_long(lt[1], in) || !parse_long(lt[2], out) || !parse_long(lt[3], act) ||
        !parse_double(lt[4], slope) || !parse_long(lt[5], bn) || act < 0 || act > 4 || (bn != 0 && bn != 1)) {
      throw FormatError(r.path() + ": malformed layer record");
    }
    LayerSpec spec{static_cast<int>(in), static_cast<int>(out), static_cast<Activation>(act), slope, bn == 1};
    LayerState layer;
    LayerTensors accum;
    const std::size_t wsize = static_cast<std::size_t>(in) * out;
    layer.weight = Matrix(static_cast<int>(in), static_cast<int>(out), r.next_values("weight", wsize));
    layer.bias = r.next_values("bias", out);
    accum.weight = Matrix(static_cast<int>(in), static_cast<int>(out), r.next_values("accum_weight", wsize));
    accum.bias = r.next_values("accum_bias", out);
    if (spec.batch_norm) {
      layer.bn_scale = r.next_values("bn_scale", out);
      layer.bn_shift = r.next_values("bn_shift", out);
      layer.bn_run_mean = r.next_values("bn_run_mean", out);
      layer.bn_run_var = r.next_values("bn_run_var", out);
      accum.bn_scale = r.next_values("accum_bn_scale", out);
      accum.bn_shift = r.next_values("accum_bn_shift", out);
    }
    net.specs.push_back(spec);
    net.layers.push_back(std::move(layer));
    net.rms_accum.layers.push_back(std::move(accum));
  }
  net.param_version = 1;
  return net;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const MgpllModel& model,
                            const std::string& sampler_rng_state = "", const std::string& shuffle_rng_state = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string() + " for writing");
  const auto& c = model.config;
  out << "mgpll-checkpoint v1\n";
  out << "dims " << model.feature_dim << ' ' << model.label_dim << '\n';
  out << "config " << detail::format_double(c.alpha) << ' ' << detail::format_double(c.beta) << ' '
      << detail::format_double(c.gamma) << ' ' << detail::format_double(c.clip_c) << ' ' << c.noise_dim << ' '
      << int(c.label_conditioned_noise) << ' ' << c.gen_hidden << ' ' << c.pred_hidden << ' ' << c.disc_hidden << ' '
      << detail::format_double(c.rms_decay) << ' ' << detail::format_double(c.rms_eps) << ' '
      << detail::format_double(c.leaky_slope) << '\n';
  detail::write_mlp(out, "noise_gen", model.noise_gen);
  detail::write_mlp(out, "feat_gen", model.feat_gen);
  detail::write_mlp(out, "predictor", model.predictor);
  detail::write_mlp(out, "label_critic", model.label_critic);
  detail::write_mlp(out, "feat_critic", model.feat_critic);
  if (!sampler_rng_state.empty()) out << "rng sampler " << sampler_rng_state << '\n';
  if (!shuffle_rng_state.empty()) out << "rng shuffle " << shuffle_rng_state << '\n';
  out << "end\n";
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  detail::CheckpointReader r(path);
  if (r.next_line() != "mgpll-checkpoint v1") {
    throw FormatError(r.path() + ": not a v1 checkpoint");
  }
  Checkpoint ck;
  {
    auto t = r.next_tokens("dims");
    long d = 0, l = 0;
    if (t.size() != 3 || !detail::parse_long(t[1], d) || !detail::parse_long(t[2], l)) {
      throw FormatError(r.path() + ": malformed dims record");
    }
    ck.model.feature_dim = static_cast<int>(d);
    ck.model.label_dim = static_cast<int>(l);
  }
  {
    auto t = r.next_tokens("config");
    if (t.size() != 13) throw FormatError(r.path() + ": malformed config record");
    auto& c = ck.model.config;
    long noise_dim = 0, cond = 0, gh = 0, ph = 0, dh = 0;
    if (!detail::parse_double(t[1], c.alpha) || !detail::parse_double(t[2], c.beta) ||
        !detail::parse_double(t[3], c.gamma) || !detail::parse_double(t[4], c.clip_c) ||
        !detail::parse_long(t[5], noise_dim) || !detail::parse_long(t[6], cond) || !detail::parse_long(t[7], gh) ||
        !detail::parse_long(t[8], ph) || !detail::parse_long(t[9], dh) || !detail::parse_double(t[10], c.rms_decay) ||
        !detail::parse_double(t[11], c.rms_eps) || !detail::parse_double(t[12], c.leaky_slope)) {
      throw FormatError(r.path() + ": malformed config record");
    }
    c.noise_dim = static_cast<int>(noise_dim);
    c.label_conditioned_noise = cond == 1;
    c.gen_hidden = static_cast<int>(gh);
    c.pred_hidden = static_cast<int>(ph);
    c.disc_hidden = static_cast<int>(dh);
  }
  ck.model.noise_gen = detail::read_mlp(r, "noise_gen");
  ck.model.feat_gen = detail::read_mlp(r, "feat_gen");
  ck.model.predictor = detail::read_mlp(r, "predictor");
  ck.model.label_critic = detail::read_mlp(r, "label_critic");
  ck.model.feat_critic = detail::read_mlp(r, "feat_critic");
  while (!r.done()) {
    const std::string line = r.next_line();
    if (line == "end") return ck;
    if (line.rfind("rng sampler ", 0) == 0) {
      ck.sampler_rng_state = line.substr(12);
    } else if (line.rfind("rng shuffle ", 0) == 0) {
      ck.shuffle_rng_state = line.substr(12);
    } else {
      throw FormatError(r.path() + ": unexpected record '" + line.substr(0, 20) + "'");
    }
  }
  throw FormatError(r.path() + ": missing end marker");
}

}  // namespace mgpll
