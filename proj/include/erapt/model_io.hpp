#pragma once

// Text model format, one `key = value-list` per line ('#' starts a comment):
//
//   format = erapt-model/1
//   backbone_kind = linear | one-hidden-tanh
//   dims = <input_dim> <prompt_dim> <feature_dim> <num_classes>
//   tau_logit = <real>
//   w_in = <feature_dim * input_dim reals, row-major>
//   w_prompt = <feature_dim * prompt_dim reals, row-major>
//   w_hidden = <feature_dim * feature_dim reals>     (one-hidden-tanh only)
//   prototypes = <num_classes * feature_dim reals, row-major>
//   prompt = <prompt_dim reals>
//
// Reals carry 17 significant digits, so save/load is bit-exact.

#include <map>
#include <set>
#include <tuple>

#include "erapt/dataio.hpp"
#include "erapt/model.hpp"

namespace erapt {

inline constexpr std::string_view kModelFormatTag = "erapt-model/1";

inline std::string to_text(const PromptedClassifier& m) {
  auto reals = [](std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_real(v[i]);
    return s;
  };
  std::string s;
  s += "format = " + std::string(kModelFormatTag) + "\n";
  s += "backbone_kind = " + std::string(to_string(m.backbone_kind)) + "\n";
  s += "dims = " + std::to_string(m.input_dim()) + " " + std::to_string(m.prompt_dim()) + " " +
       std::to_string(m.feature_dim()) + " " + std::to_string(m.num_classes()) + "\n";
  s += "tau_logit = " + format_real(m.tau_logit) + "\n";
  s += "w_in = " + reals(m.w_in.data()) + "\n";
  s += "w_prompt = " + reals(m.w_prompt.data()) + "\n";
  if (m.w_hidden) s += "w_hidden = " + reals(m.w_hidden->data()) + "\n";
  s += "prototypes = " + reals(m.prototypes.data()) + "\n";
  s += "prompt = " + reals(m.prompt) + "\n";
  return s;
}

namespace detail {

/// Parses `key = value` lines; duplicate keys are an error.
inline std::map<std::string, std::string> parse_key_values(const std::string& text, const char* what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

inline RealVector parse_real_list(const std::string& key, const std::string& value, std::size_t expected) {
  std::istringstream in(value);
  std::string tok;
  RealVector out;
  while (in >> tok) {
    double v = 0.0;
    if (!parse_real(tok, v)) throw FormatError("model file: '" + key + "' has a non-numeric entry '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != expected)
    throw FormatError("model file: '" + key + "' has " + std::to_string(out.size()) + " values, expected " +
                      std::to_string(expected));
  return out;
}

}  // namespace detail

inline PromptedClassifier model_from_text(const std::string& text) {
  auto kv = detail::parse_key_values(text, "model file");
  static const std::set<std::string> known = {"format", "backbone_kind", "dims",       "tau_logit", "w_in",
                                              "w_prompt", "w_hidden",    "prototypes", "prompt"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) throw FormatError("model file: unknown key '" + k + "'");
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model file: missing key '") + key + "'");
    return it->second;
  };
  if (need("format") != kModelFormatTag) throw FormatError("model file: unsupported format '" + kv["format"] + "'");

  PromptedClassifier m;
  try {
    m.backbone_kind = parse_backbone_kind(need("backbone_kind"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  std::istringstream dims(need("dims"));
  std::string tok;
  std::vector<std::size_t> d;
  while (dims >> tok) {
    std::size_t v = 0;
    if (!detail::parse_index(tok, v) || v == 0) throw FormatError("model file: 'dims' must be positive integers");
    d.push_back(v);
  }
  if (d.size() != 4) throw FormatError("model file: 'dims' needs 4 integers");
  const auto [in, pd, fd, nc] = std::tuple{d[0], d[1], d[2], d[3]};

  m.tau_logit = detail::parse_real_list("tau_logit", need("tau_logit"), 1)[0];
  m.w_in = RealMatrix(fd, in, detail::parse_real_list("w_in", need("w_in"), fd * in));
  m.w_prompt = RealMatrix(fd, pd, detail::parse_real_list("w_prompt", need("w_prompt"), fd * pd));
  if (m.backbone_kind == BackboneKind::one_hidden_tanh)
    m.w_hidden = RealMatrix(fd, fd, detail::parse_real_list("w_hidden", need("w_hidden"), fd * fd));
  else if (kv.count("w_hidden"))
    throw FormatError("model file: 'w_hidden' given for a linear backbone");
  m.prototypes = RealMatrix(nc, fd, detail::parse_real_list("prototypes", need("prototypes"), nc * fd));
  m.prompt = detail::parse_real_list("prompt", need("prompt"), pd);
  try {
    validate(m);
  } catch (const Error& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  return m;
}

inline void save_model(const PromptedClassifier& m, const std::string& path) { write_text_file(path, to_text(m)); }

inline PromptedClassifier load_model(const std::string& path) { return model_from_text(read_text_file(path)); }

}  // namespace erapt
