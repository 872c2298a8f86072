#pragma once

// Training configuration and its `key = value` text form.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "imn/error.hpp"
#include "imn/losses.hpp"

namespace imn {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 16;
  std::size_t iterations = 1000;
  std::size_t lr_decay_interval = 1000;  // learning rate halves every this many steps
  LossWeights weights{1.0, 3.0, 1.0};
  std::size_t image_size = 128;
  std::uint64_t seed = 0;
  std::filesystem::path dataset_dir;
  std::size_t checkpoint_interval = 1000;
  Distance loss = Distance::SquaredError;
  double grad_clip = 0.0;  // global gradient-norm limit, 0 = off

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError(0, "learning_rate must be positive");
    if (batch_size == 0) throw ConfigError(0, "batch_size must be positive");
    if (iterations == 0) throw ConfigError(0, "iterations must be positive");
    if (lr_decay_interval == 0) throw ConfigError(0, "lr_decay_interval must be positive");
    if (image_size == 0 || image_size % 2 != 0) throw ConfigError(0, "image_size must be positive and even");
    if (checkpoint_interval == 0) throw ConfigError(0, "checkpoint_interval must be positive");
    if (!(grad_clip >= 0.0)) throw ConfigError(0, "grad_clip must be non-negative");
    try {
      weights.validate();
    } catch (const Error& e) {
      throw ConfigError(0, e.what());
    }
  }
};

/// Learning rate in effect for 0-based step `step`: base * 0.5^(step / interval).
inline double learning_rate_at(const TrainConfig& c, std::size_t step) {
  return std::ldexp(c.learning_rate, -static_cast<int>(step / c.lr_decay_interval));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_unsigned(std::string_view v, std::size_t line, std::string_view key) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(line, "invalid integer '" + std::string(v) + "' for " + std::string(key));
  return out;
}

inline double parse_real(std::string_view v, std::size_t line, std::string_view key) {
  // from_chars for double is unavailable on some toolchains; strtod on a copy
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out))
    throw ConfigError(line, "invalid number '" + s + "' for " + std::string(key));
  return out;
}

}  // namespace detail

/// Parses "a:b:c" (e.g. "1:3:1").
inline LossWeights parse_ratio(std::string_view text, std::size_t line = 0) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(detail::parse_real(detail::trim(text.substr(start, colon - start)), line, "weights"));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 3) throw ConfigError(line, "weights must look like l1:l2:l3, got '" + std::string(text) + "'");
  LossWeights w{parts[0], parts[1], parts[2]};
  try {
    w.validate();
  } catch (const Error& e) {
    throw ConfigError(line, e.what());
  }
  return w;
}

/// Comma separated list of ratios: "1:1:1,1:3:1".
inline std::vector<LossWeights> parse_ratio_list(std::string_view text) {
  std::vector<LossWeights> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    out.push_back(parse_ratio(detail::trim(text.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored. Unknown or repeated keys are errors. Unlisted keys keep defaults.
inline TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "missing key");
    if (value.empty()) throw ConfigError(line_no, "missing value for " + std::string(key));
    if (!seen.insert(std::string(key)).second) throw ConfigError(line_no, "duplicate key " + std::string(key));

    if (key == "learning_rate") {
      c.learning_rate = detail::parse_real(value, line_no, key);
    } else if (key == "batch_size") {
      c.batch_size = detail::parse_unsigned<std::size_t>(value, line_no, key);
    } else if (key == "iterations") {
      c.iterations = detail::parse_unsigned<std::size_t>(value, line_no, key);
    } else if (key == "lr_decay_interval") {
      c.lr_decay_interval = detail::parse_unsigned<std::size_t>(value, line_no, key);
    } else if (key == "weights") {
      c.weights = parse_ratio(value, line_no);
    } else if (key == "image_size") {
      c.image_size = detail::parse_unsigned<std::size_t>(value, line_no, key);
    } else if (key == "seed") {
      c.seed = detail::parse_unsigned<std::uint64_t>(value, line_no, key);
    } else if (key == "dataset_dir") {
      c.dataset_dir = std::string(value);
    } else if (key == "checkpoint_interval") {
      c.checkpoint_interval = detail::parse_unsigned<std::size_t>(value, line_no, key);
    } else if (key == "grad_clip") {
      c.grad_clip = detail::parse_real(value, line_no, key);
    } else if (key == "loss") {
      if (value == "mse")
        c.loss = Distance::SquaredError;
      else if (value == "l1")
        c.loss = Distance::AbsoluteError;
      else
        throw ConfigError(line_no, "loss must be 'mse' or 'l1', got '" + std::string(value) + "'");
    } else {
      throw ConfigError(line_no, "unknown key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

inline std::string to_config_text(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "learning_rate = " << c.learning_rate << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "iterations = " << c.iterations << "\n"
      << "lr_decay_interval = " << c.lr_decay_interval << "\n"
      << "weights = " << c.weights.str() << "\n"
      << "image_size = " << c.image_size << "\n"
      << "seed = " << c.seed << "\n";
  if (!c.dataset_dir.empty()) out << "dataset_dir = " << c.dataset_dir.string() << "\n";
  out << "checkpoint_interval = " << c.checkpoint_interval << "\n"
      << "loss = " << (c.loss == Distance::SquaredError ? "mse" : "l1") << "\n";
  if (c.grad_clip > 0.0) out << "grad_clip = " << c.grad_clip << "\n";
  return out.str();
}

}  // namespace imn
