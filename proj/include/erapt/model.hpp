#pragma once

// Prompted classifier: a frozen backbone maps (input, prompt) to a feature
// vector, and logits are temperature-scaled cosine similarities against frozen
// class prototypes. Only `prompt` is learnable.

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "erapt/numcore.hpp"

namespace erapt {

enum class BackboneKind { linear, one_hidden_tanh };

inline std::string_view to_string(BackboneKind k) {
  return k == BackboneKind::linear ? "linear" : "one-hidden-tanh";
}

inline BackboneKind parse_backbone_kind(std::string_view s) {
  if (s == "linear") return BackboneKind::linear;
  if (s == "one-hidden-tanh" || s == "tanh") return BackboneKind::one_hidden_tanh;
  throw ConfigError("unknown backbone kind '" + std::string(s) + "'");
}

/// Argument order of the robustness KL term.
enum class KlOrder {
  clean_adv,  // KL(f(x) || f(x + delta))
  adv_clean,  // KL(f(x + delta) || f(x))
};

inline constexpr double kMinPrototypeNorm = 1e-9;

struct PromptedClassifier {
  BackboneKind backbone_kind = BackboneKind::linear;
  RealMatrix w_in;                     // feature_dim x input_dim
  RealMatrix w_prompt;                 // feature_dim x prompt_dim
  std::optional<RealMatrix> w_hidden;  // feature_dim x feature_dim, tanh backbone only
  RealMatrix prototypes;               // num_classes x feature_dim
  RealVector prompt;                   // prompt_dim
  double tau_logit = 0.07;

  std::size_t input_dim() const { return w_in.cols(); }
  std::size_t prompt_dim() const { return w_prompt.cols(); }
  std::size_t feature_dim() const { return w_in.rows(); }
  std::size_t num_classes() const { return prototypes.rows(); }

  bool operator==(const PromptedClassifier&) const = default;
};

struct ModelInitSpec {
  std::size_t input_dim = 2;
  std::size_t prompt_dim = 4;
  std::size_t feature_dim = 8;
  std::size_t num_classes = 2;
  BackboneKind backbone_kind = BackboneKind::linear;
  std::uint64_t init_seed = 0;
  double init_scale = 1.0;
  double tau_logit = 0.07;
};

inline void validate(const PromptedClassifier& m) {
  const std::size_t f = m.feature_dim();
  if (f == 0 || m.input_dim() == 0 || m.prompt_dim() == 0 || m.num_classes() == 0)
    throw ConfigError("model: all dimensions must be >= 1");
  if (m.w_prompt.rows() != f) throw DimensionError("model: w_prompt rows != feature_dim");
  if (m.prototypes.cols() != f) throw DimensionError("model: prototypes cols != feature_dim");
  if (m.prompt.size() != m.prompt_dim()) throw DimensionError("model: prompt length != prompt_dim");
  if (m.backbone_kind == BackboneKind::one_hidden_tanh) {
    if (!m.w_hidden || m.w_hidden->rows() != f || m.w_hidden->cols() != f)
      throw DimensionError("model: tanh backbone needs a feature_dim x feature_dim w_hidden");
  } else if (m.w_hidden) {
    throw ConfigError("model: linear backbone must not carry w_hidden");
  }
  if (!(m.tau_logit > 0.0) || !std::isfinite(m.tau_logit)) throw ConfigError("model: tau_logit must be > 0");
  for (std::size_t j = 0; j < m.num_classes(); ++j)
    if (!(norm2(m.prototypes.row(j)) > kMinPrototypeNorm))
      throw NumericalError("model: prototype row " + std::to_string(j) + " has (near) zero norm");
  require_finite(m.w_in.data(), "model.w_in");
  require_finite(m.w_prompt.data(), "model.w_prompt");
  if (m.w_hidden) require_finite(m.w_hidden->data(), "model.w_hidden");
  require_finite(m.prototypes.data(), "model.prototypes");
  require_finite(m.prompt, "model.prompt");
}

inline PromptedClassifier init_model(const ModelInitSpec& spec) {
  if (spec.input_dim < 1 || spec.prompt_dim < 1 || spec.feature_dim < 1 || spec.num_classes < 1)
    throw ConfigError("model: all dimensions must be >= 1");
  if (!(spec.init_scale > 0.0)) throw ConfigError("model: init_scale must be > 0");
  if (!(spec.tau_logit > 0.0)) throw ConfigError("model: tau_logit must be > 0");

  RandomStream root = RandomStream(spec.init_seed).split("model-init");
  auto draw = [&](std::string_view label, std::size_t r, std::size_t c) {
    RandomStream s = root.split(label);
    return RealMatrix(r, c, uniform_vector(s, r * c, -spec.init_scale, spec.init_scale));
  };

  PromptedClassifier m;
  m.backbone_kind = spec.backbone_kind;
  m.w_in = draw("w_in", spec.feature_dim, spec.input_dim);
  m.w_prompt = draw("w_prompt", spec.feature_dim, spec.prompt_dim);
  if (spec.backbone_kind == BackboneKind::one_hidden_tanh)
    m.w_hidden = draw("w_hidden", spec.feature_dim, spec.feature_dim);

  m.prototypes = RealMatrix(spec.num_classes, spec.feature_dim);
  RandomStream proto = root.split("prototypes");
  for (std::size_t j = 0; j < spec.num_classes; ++j) {
    auto row = m.prototypes.row(j);
    do {
      for (double& v : row) v = proto.uniform(-spec.init_scale, spec.init_scale);
    } while (!(norm2(row) > kMinPrototypeNorm));
  }
  m.prompt.assign(spec.prompt_dim, 0.0);
  m.tau_logit = spec.tau_logit;
  return m;
}

/// Intermediate values of one forward evaluation, kept for the backward pass.
struct ForwardPass {
  RealVector pre;       // W_in x + W_prompt prompt
  RealVector features;  // z
  RealVector cosines;   // cos(z, prototype_j)
  RealVector logits;
  RealVector probs;
  double feature_norm = 0.0;
};

inline ForwardPass forward(const PromptedClassifier& m, std::span<const double> x) {
  if (x.size() != m.input_dim()) {
    throw DimensionError("forward: input length " + std::to_string(x.size()) + " != input_dim " +
                         std::to_string(m.input_dim()));
  }
  ForwardPass fp;
  fp.pre = add(m.w_in.apply(x), m.w_prompt.apply(m.prompt));
  if (m.backbone_kind == BackboneKind::one_hidden_tanh) {
    fp.features = m.w_hidden->apply(fp.pre);
    for (double& v : fp.features) v = std::tanh(v);
  } else {
    fp.features = fp.pre;
  }
  fp.feature_norm = norm2(fp.features);
  if (!(fp.feature_norm > 0.0)) throw NumericalError("forward: feature vector has zero norm");
  require_finite(fp.features, "forward.features");

  const std::size_t k = m.num_classes();
  fp.cosines.resize(k);
  fp.logits.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    fp.cosines[j] = cosine_similarity(fp.features, m.prototypes.row(j));
    fp.logits[j] = fp.cosines[j] / m.tau_logit;
  }
  fp.probs = softmax(fp.logits);
  return fp;
}

/// Backpropagates dL/dlogits to dL/dpre (the shared pre-activation).
inline RealVector backward_to_pre(const PromptedClassifier& m, const ForwardPass& fp,
                                  std::span<const double> grad_logits) {
  const std::size_t f = m.feature_dim();
  const double zn = fp.feature_norm;
  RealVector gz(f, 0.0);
  for (std::size_t j = 0; j < m.num_classes(); ++j) {
    const double g = grad_logits[j] / m.tau_logit;
    if (g == 0.0) continue;
    const auto c = m.prototypes.row(j);
    const double cn = norm2(c);
    const double a = g / (zn * cn);
    const double b = g * fp.cosines[j] / (zn * zn);
    for (std::size_t i = 0; i < f; ++i) gz[i] += a * c[i] - b * fp.features[i];
  }
  if (m.backbone_kind == BackboneKind::linear) return gz;
  for (std::size_t i = 0; i < f; ++i) gz[i] *= 1.0 - fp.features[i] * fp.features[i];
  return m.w_hidden->apply_transposed(gz);
}

struct LossAndGrads {
  double loss = 0.0;
  RealVector grad_input;
  RealVector grad_prompt;
};

inline double loss_ce(const PromptedClassifier& m, std::span<const double> x, std::size_t y) {
  return cross_entropy(forward(m, x).probs, y);
}

inline LossAndGrads ce_with_grads(const PromptedClassifier& m, std::span<const double> x, std::size_t y) {
  const ForwardPass fp = forward(m, x);
  LossAndGrads out;
  out.loss = cross_entropy(fp.probs, y);
  const RealVector gl = softmax_backward(fp.probs, cross_entropy_grad_probs(fp.probs, y));
  const RealVector gpre = backward_to_pre(m, fp, gl);
  out.grad_input = m.w_in.apply_transposed(gpre);
  out.grad_prompt = m.w_prompt.apply_transposed(gpre);
  return out;
}

inline RealVector grad_input_ce(const PromptedClassifier& m, std::span<const double> x, std::size_t y) {
  return ce_with_grads(m, x, y).grad_input;
}

inline RealVector grad_prompt_ce(const PromptedClassifier& m, std::span<const double> x, std::size_t y) {
  return ce_with_grads(m, x, y).grad_prompt;
}

/// KL loss with gradients; grad_input is taken w.r.t. x_adv with the clean
/// branch held constant, grad_prompt flows through both branches.
inline LossAndGrads kl_with_grads(const PromptedClassifier& m, std::span<const double> x_clean,
                                  std::span<const double> x_adv, KlOrder order = KlOrder::clean_adv) {
  const ForwardPass clean = forward(m, x_clean);
  const ForwardPass adv = forward(m, x_adv);
  const bool clean_first = order == KlOrder::clean_adv;
  const RealVector& p = clean_first ? clean.probs : adv.probs;
  const RealVector& q = clean_first ? adv.probs : clean.probs;

  LossAndGrads out;
  out.loss = kl_divergence(p, q);
  auto [gp, gq] = kl_divergence_grad_probs(p, q);
  const RealVector& g_clean_probs = clean_first ? gp : gq;
  const RealVector& g_adv_probs = clean_first ? gq : gp;

  const RealVector gpre_adv = backward_to_pre(m, adv, softmax_backward(adv.probs, g_adv_probs));
  const RealVector gpre_clean = backward_to_pre(m, clean, softmax_backward(clean.probs, g_clean_probs));
  out.grad_input = m.w_in.apply_transposed(gpre_adv);
  out.grad_prompt = m.w_prompt.apply_transposed(add(gpre_adv, gpre_clean));
  return out;
}

inline double loss_kl(const PromptedClassifier& m, std::span<const double> x_clean,
                      std::span<const double> x_adv, KlOrder order = KlOrder::clean_adv) {
  const RealVector pc = forward(m, x_clean).probs;
  const RealVector pa = forward(m, x_adv).probs;
  return order == KlOrder::clean_adv ? kl_divergence(pc, pa) : kl_divergence(pa, pc);
}

inline RealVector grad_input_kl(const PromptedClassifier& m, std::span<const double> x_clean,
                                std::span<const double> x_adv, KlOrder order = KlOrder::clean_adv) {
  return kl_with_grads(m, x_clean, x_adv, order).grad_input;
}

inline RealVector grad_prompt_kl(const PromptedClassifier& m, std::span<const double> x_clean,
                                 std::span<const double> x_adv, KlOrder order = KlOrder::clean_adv) {
  return kl_with_grads(m, x_clean, x_adv, order).grad_prompt;
}

inline std::size_t predict(const PromptedClassifier& m, std::span<const double> x) {
  return argmax(forward(m, x).logits);
}

/// 64-bit FNV-1a over the bytes of every frozen field.
inline std::uint64_t frozen_checksum(const PromptedClassifier& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed_bytes = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  auto feed_matrix = [&](const RealMatrix& a) {
    const std::uint64_t dims[2] = {a.rows(), a.cols()};
    feed_bytes(dims, sizeof dims);
    feed_bytes(a.data().data(), a.data().size() * sizeof(double));
  };
  const int kind = static_cast<int>(m.backbone_kind);
  feed_bytes(&kind, sizeof kind);
  feed_bytes(&m.tau_logit, sizeof m.tau_logit);
  feed_matrix(m.w_in);
  feed_matrix(m.w_prompt);
  if (m.w_hidden) feed_matrix(*m.w_hidden);
  feed_matrix(m.prototypes);
  return h;
}

}  // namespace erapt
