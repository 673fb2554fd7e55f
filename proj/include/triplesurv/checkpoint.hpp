#pragma once

// Plain-text checkpoint format, version 1:
//
//   triplesurv-checkpoint 1
//   input_dim <int>
//   hidden_dim <int>
//   n_blocks <int>
//   dropout_rate <real>
//   head cat|mtlr
//   k_bins <int>
//   update_count <int>
//   tensor <name> <rows> <cols>
//   <rows lines of <cols> space-separated values, row-major>
//   ... (one tensor block per trainable tensor, then the BatchNorm running
//        statistics as <stage>.bn_running_mean / <stage>.bn_running_var)
//   end
//
// Reals are written with 17 significant digits so a save/load round trip is
// bit-exact.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "triplesurv/error.hpp"
#include "triplesurv/model.hpp"

namespace triplesurv {

inline constexpr const char* kCheckpointMagic = "triplesurv-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

template <class P, class F>
void visit_running_stats(P& p, F&& f) {
  f(std::string("stem.bn_running_mean"), p.stem.norm.running_mean);
  f(std::string("stem.bn_running_var"), p.stem.norm.running_var);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string name = "block" + std::to_string(i);
    f(name + ".bn_running_mean", p.blocks[i].norm.running_mean);
    f(name + ".bn_running_var", p.blocks[i].norm.running_var);
  }
}

template <class T>
void write_tensor(std::ostream& out, const std::string& name, const T& t) {
  const Eigen::Index rows = T::RowsAtCompileTime == 1 ? 1 : t.rows();
  const Eigen::Index cols = T::RowsAtCompileTime == 1 ? t.size() : t.cols();
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out << (c ? " " : "") << format_real(t.data()[r * cols + c]);
    out << '\n';
  }
}

template <class T>
void read_tensor(std::istream& in, const std::string& name, T& t) {
  std::string tag, got;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> got >> rows >> cols) || tag != "tensor") throw ParseError("checkpoint: expected tensor '" + name + "'");
  if (got != name) throw ParseError("checkpoint: expected tensor '" + name + "', found '" + got + "'");
  const Eigen::Index want_rows = T::RowsAtCompileTime == 1 ? 1 : t.rows();
  const Eigen::Index want_cols = T::RowsAtCompileTime == 1 ? t.size() : t.cols();
  if (rows != want_rows || cols != want_cols) throw ParseError("checkpoint: tensor '" + name + "' has the wrong shape");
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    std::string cell;
    if (!(in >> cell)) throw ParseError("checkpoint: truncated tensor '" + name + "'");
    char* end = nullptr;
    t.data()[i] = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') throw ParseError("checkpoint: bad number '" + cell + "' in '" + name + "'");
  }
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ModelParams& params) {
  const auto& c = params.config;
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "input_dim " << c.input_dim << '\n'
      << "hidden_dim " << c.hidden_dim << '\n'
      << "n_blocks " << c.n_blocks << '\n'
      << "dropout_rate " << format_real(c.dropout_rate) << '\n'
      << "head " << to_string(c.head) << '\n'
      << "k_bins " << c.k_bins << '\n'
      << "update_count " << params.update_count << '\n';
  visit_trainable(params, params, [&](const std::string& name, const auto& t, const auto&) {
    detail::write_tensor(out, name, t);
  });
  detail::visit_running_stats(params, [&](const std::string& name, const RowVector& t) {
    detail::write_tensor(out, name, t);
  });
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, params);
}

inline ModelParams load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw ParseError("not a triplesurv checkpoint");
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  auto field = [&](const char* key) {
    std::string k, v;
    if (!(in >> k >> v) || k != key) throw ParseError(std::string("checkpoint: expected field '") + key + "'");
    return v;
  };
  ModelConfig c;
  c.input_dim = std::stoi(field("input_dim"));
  c.hidden_dim = std::stoi(field("hidden_dim"));
  c.n_blocks = std::stoi(field("n_blocks"));
  c.dropout_rate = std::stod(field("dropout_rate"));
  c.head = parse_head(field("head"));
  c.k_bins = std::stoi(field("k_bins"));
  const auto updates = std::stoull(field("update_count"));
  ModelParams p = init_params(c, 0);
  p.update_count = updates;
  visit_trainable(p, p, [&](const std::string& name, auto& t, auto&) { detail::read_tensor(in, name, t); });
  detail::visit_running_stats(p, [&](const std::string& name, RowVector& t) { detail::read_tensor(in, name, t); });
  std::string end;
  if (!(in >> end) || end != "end") throw ParseError("checkpoint: missing end marker");
  return p;
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace triplesurv
