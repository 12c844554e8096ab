#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "stitchkit/cka.hpp"
#include "stitchkit/error.hpp"
#include "stitchkit/layer.hpp"
#include "stitchkit/linalg.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/tensor.hpp"

namespace stitchkit {

enum class JointKind { LinearToLinear, ConvToConv, ConvToLinear };

inline const char* to_string(JointKind k) {
  switch (k) {
    case JointKind::LinearToLinear: return "linear->linear";
    case JointKind::ConvToConv: return "conv->conv";
    case JointKind::ConvToLinear: return "conv->linear";
  }
  return "?";
}

// Joint kind from the incoming activation's rank (per sample: 1 = flat,
// 3 = [C,H,W]) and the outgoing fragment's first layer.
inline std::optional<JointKind> joint_kind(std::size_t incoming_rank, const Fragment& f) {
  if (f.layers.empty()) return std::nullopt;
  const bool to_linear = std::holds_alternative<Linear>(f.layers.front().op);
  const bool to_conv = std::holds_alternative<Conv2d>(f.layers.front().op);
  if (incoming_rank == 1 && to_linear) return JointKind::LinearToLinear;
  if (incoming_rank == 3 && to_conv) return JointKind::ConvToConv;
  if (incoming_rank == 3 && to_linear) return JointKind::ConvToLinear;
  return std::nullopt;
}

inline JointKind require_joint_kind(const Tensor& x_raw, const Fragment& f) {
  auto k = joint_kind(x_raw.rank() - 1, f);
  if (!k) {
    throw UnsupportedJointError("cannot stitch a " + std::to_string(x_raw.rank() - 1) +
                                "-axis activation into fragment " + f.id() + " starting with " +
                                (f.layers.empty() ? "nothing" : kind_name(f.layers.front().op)));
  }
  return *k;
}

namespace detail {

// [N, C, H, W] -> [C, N*H*W]: channels as features, positions as samples.
inline Tensor channel_major(const Tensor& t) {
  const std::size_t n = t.dim(0), c = t.dim(1), hw = t.dim(2) * t.dim(3);
  Tensor out({c, n * hw});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < hw; ++k) out.at(ch, i * hw + k) = t[(i * c + ch) * hw + k];
  return out;
}

}  // namespace detail

struct PreparedJoint {
  JointKind kind;
  ActivationMatrix x;  // incoming activations, [p x samples]
  ActivationMatrix y;  // native inputs of the outgoing fragment, [q x samples]
};

// Brings Q(D) and the outgoing fragment's native input into matrix form:
//  linear->linear  features x N
//  conv->conv      x resized to y's plane, both channels x (N*H*W)
//  conv->linear    x pooled to 1x1 and flattened, features x N
inline PreparedJoint prepare_joint(const Tensor& x_raw, const Tensor& y_raw, JointKind kind) {
  if (x_raw.empty() || y_raw.empty() || x_raw.dim(0) != y_raw.dim(0)) {
    throw DimensionError("prepare_joint needs activations with equal sample counts");
  }
  switch (kind) {
    case JointKind::LinearToLinear:
      if (x_raw.rank() != 2 || y_raw.rank() != 2) throw UnsupportedJointError("linear->linear joint needs flat activations");
      return {kind, {transpose(x_raw), {}}, {transpose(y_raw), {}}};
    case JointKind::ConvToConv: {
      if (x_raw.rank() != 4 || y_raw.rank() != 4) throw UnsupportedJointError("conv->conv joint needs [N,C,H,W] activations");
      const Tensor xr = resize_spatial(x_raw, y_raw.dim(2), y_raw.dim(3));
      return {kind, {detail::channel_major(xr), {}}, {detail::channel_major(y_raw), {}}};
    }
    case JointKind::ConvToLinear:
      if (x_raw.rank() != 4 || y_raw.rank() != 2) throw UnsupportedJointError("conv->linear joint needs [N,C,H,W] -> [N,F]");
      return {kind, {to_feature_major(adaptive_avg_pool_1x1(x_raw)), {}}, {transpose(y_raw), {}}};
  }
  throw UnsupportedJointError("unknown joint kind");
}

// Fuses a channel mix into a linear weight. `w` is [l x j] and `mix` is
// [k x j] (new input width k, original input width j); returns [l x k] with
// W'[l][k] = sum_j W[l][j] mix[k][j]. Applying W' to v equals applying W to
// mix^T v.
inline Tensor fuse_linear(const Tensor& w, const Tensor& mix) {
  detail::require_rank(w, 2, "fuse_linear weight");
  detail::require_rank(mix, 2, "fuse_linear mix");
  if (mix.dim(1) != w.dim(1)) {
    throw DimensionError("fuse_linear: mix " + shape_string(mix.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  return matmul(w, transpose(mix));
}

// Conv analogue of fuse_linear along the input-channel axis:
// W'[o][k][m][n] = sum_j W[o][j][m][n] mix[k][j].
inline Tensor fuse_conv(const Tensor& w, const Tensor& mix) {
  detail::require_rank(w, 4, "fuse_conv weight");
  detail::require_rank(mix, 2, "fuse_conv mix");
  const std::size_t o = w.dim(0), j = w.dim(1), kh = w.dim(2), kw = w.dim(3), k = mix.dim(0);
  if (mix.dim(1) != j) {
    throw DimensionError("fuse_conv: mix " + shape_string(mix.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  Tensor out({o, k, kh, kw});
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t nk = 0; nk < k; ++nk)
      for (std::size_t m = 0; m < kh; ++m)
        for (std::size_t n = 0; n < kw; ++n) {
          double s = 0.0;
          for (std::size_t ic = 0; ic < j; ++ic) s += w.at(oc, ic, m, n) * mix.at(nk, ic);
          out.at(oc, nk, m, n) = s;
        }
  out.require_finite("fuse_conv");
  return out;
}

struct StitchOptions {
  // Relative ridge: ridge = ridge_factor * trace(X X^T) / p.
  double ridge_factor = 1e-8;
  // Absolute ridge; overrides ridge_factor when set.
  std::optional<double> ridge;
  // Also fit an intercept and fold it into the outgoing bias. For conv
  // joints the fold is exact only away from zero-padded borders.
  bool affine = false;
};

struct Projection {
  JointKind kind;
  Tensor matrix;     // A [q x p], Y ~= A X
  Tensor intercept;  // [q], zero unless affine
};

inline Projection compute_projection(const PreparedJoint& joint, const StitchOptions& opt = {}) {
  const Tensor& x = joint.x.values;
  const Tensor& y = joint.y.values;
  const std::size_t p = x.dim(0), q = y.dim(0), n = x.dim(1);
  Projection out{joint.kind, {}, Tensor({q})};
  if (!opt.affine) {
    const double ridge = opt.ridge ? *opt.ridge : default_ridge(x, opt.ridge_factor);
    out.matrix = solve_projection(x, y, ridge);
    return out;
  }
  Tensor xa({p + 1, n});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < n; ++k) xa.at(i, k) = x.at(i, k);
  for (std::size_t k = 0; k < n; ++k) xa.at(p, k) = 1.0;
  const double ridge = opt.ridge ? *opt.ridge : default_ridge(xa, opt.ridge_factor);
  const Tensor aa = solve_projection(xa, y, ridge);
  out.matrix = Tensor({q, p});
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.matrix.at(i, j) = aa.at(i, j);
    out.intercept[i] = aa.at(i, p);
  }
  return out;
}

// One fragment inside a StitchNet: optional adapter layers (resize or
// pool+flatten) followed by the fragment with its first layer fused.
struct StitchPiece {
  Fragment fragment;
  std::vector<Layer> adapter;
  double joint_cka = 1.0;
};

// Ordered fragments plus fused joints, executable as a Network.
class StitchNet {
 public:
  StitchNet() = default;

  // A StitchNet holding one starting fragment, score 1.
  static StitchNet from_starting(const Fragment& f, std::string id = {}) {
    if (!f.is_starting()) throw ConfigError("fragment " + f.id() + " is not a starting fragment");
    StitchNet s;
    s.id_ = id.empty() ? f.id() : std::move(id);
    s.pieces_.push_back({f, {}, 1.0});
    s.rebuild();
    return s;
  }

  // Reassembles a StitchNet from stored pieces (used by the file reader).
  static StitchNet from_pieces(std::string id, std::vector<StitchPiece> pieces, double score,
                               std::string stitch_split) {
    if (pieces.empty() || !pieces.front().fragment.is_starting()) {
      throw ConfigError("StitchNet must begin with a starting fragment");
    }
    StitchNet s;
    s.id_ = std::move(id);
    s.pieces_ = std::move(pieces);
    s.score_ = score;
    s.stitch_split_ = std::move(stitch_split);
    s.rebuild();
    return s;
  }

  const std::string& id() const { return id_; }
  void set_id(std::string id) {
    id_ = std::move(id);
    net_.id = id_;
  }
  const std::string& stitch_split() const { return stitch_split_; }
  void set_stitch_split(std::string split) { stitch_split_ = std::move(split); }

  const std::vector<StitchPiece>& pieces() const { return pieces_; }
  double score() const { return score_; }
  std::size_t fragment_count() const { return pieces_.size(); }
  bool complete() const { return pieces_.back().fragment.is_terminating(); }
  const Network& network() const { return net_; }
  std::size_t parameter_count() const { return stitchkit::parameter_count(net_); }

  // True when `f` shares a layer span of the same source network with any
  // fragment already in this StitchNet.
  bool overlaps(const Fragment& f) const {
    for (const auto& p : pieces_) {
      const Fragment& g = p.fragment;
      if (g.source_network_id == f.source_network_id && g.start_layer < f.end_layer && f.start_layer < g.end_layer) {
        return true;
      }
    }
    return false;
  }

  // Product of recorded per-joint CKA values.
  double product_of_joints() const {
    double s = 1.0;
    for (const auto& p : pieces_) s *= p.joint_cka;
    return s;
  }

  StitchNet appended(StitchPiece piece) const {
    StitchNet s = *this;
    s.score_ = score_ * piece.joint_cka;
    s.pieces_.push_back(std::move(piece));
    s.rebuild();
    return s;
  }

 private:
  void rebuild() {
    net_ = Network{};
    net_.id = id_;
    net_.input_shape = pieces_.front().fragment.input_shape;
    for (const auto& p : pieces_) {
      net_.layers.insert(net_.layers.end(), p.adapter.begin(), p.adapter.end());
      net_.layers.insert(net_.layers.end(), p.fragment.layers.begin(), p.fragment.layers.end());
    }
    if (complete()) net_.class_labels = pieces_.back().fragment.class_labels;
    validate(net_);
  }

  std::string id_;
  std::vector<StitchPiece> pieces_;
  double score_ = 1.0;
  std::string stitch_split_;
  Network net_;
};

inline Tensor forward(const StitchNet& s, const Tensor& batch) { return forward(s.network(), batch); }

// Copy of `f` whose first layer absorbs the projection, preceded by the
// adapter the joint kind needs. `x_raw` is Q(D), `y_raw` the native input.
inline StitchPiece fuse_fragment(const Fragment& f, const Tensor& x_raw, const Tensor& y_raw,
                                 const Projection& proj) {
  StitchPiece piece{f, {}, 1.0};
  const Tensor mix = transpose(proj.matrix);  // [p x q]
  Layer& first = piece.fragment.layers.front();
  std::visit(Overloaded{
                 [&](Linear& l) {
                   const Tensor original = l.weight;
                   l.weight = fuse_linear(original, mix);
                   for (std::size_t o = 0; o < l.bias.size(); ++o) {
                     double s = 0.0;
                     for (std::size_t j = 0; j < original.dim(1); ++j) s += original.at(o, j) * proj.intercept[j];
                     l.bias[o] += s;
                   }
                 },
                 [&](Conv2d& c) {
                   const Tensor original = c.weight;
                   c.weight = fuse_conv(original, mix);
                   for (std::size_t o = 0; o < c.bias.size(); ++o) {
                     double s = 0.0;
                     for (std::size_t j = 0; j < original.dim(1); ++j)
                       for (std::size_t m = 0; m < original.dim(2); ++m)
                         for (std::size_t n = 0; n < original.dim(3); ++n) s += original.at(o, j, m, n) * proj.intercept[j];
                     c.bias[o] += s;
                   }
                 },
                 [&](auto&) { throw UnsupportedJointError("fragment " + f.id() + " does not start with a trainable layer"); },
             },
             first.op);
  first.name += "_fused";

  switch (proj.kind) {
    case JointKind::ConvToConv:
      if (x_raw.dim(2) != y_raw.dim(2) || x_raw.dim(3) != y_raw.dim(3)) {
        piece.adapter.push_back({"stitch_resize", Resize{y_raw.dim(2), y_raw.dim(3)}});
      }
      piece.fragment.input_shape = {x_raw.dim(1), y_raw.dim(2), y_raw.dim(3)};
      break;
    case JointKind::ConvToLinear:
      piece.adapter.push_back({"stitch_pool", AdaptiveAvgPool1x1{}});
      piece.adapter.push_back({"stitch_flatten", Flatten{}});
      piece.fragment.input_shape = {x_raw.dim(1)};
      break;
    case JointKind::LinearToLinear:
      piece.fragment.input_shape = {x_raw.dim(1)};
      break;
  }
  return piece;
}

// Appends `f` to `q`: solves the projection from Q(D) (x_raw) onto the
// fragment's native input (y_raw) and fuses it into the fragment's first
// layer. `joint_cka` is recorded in the provenance; when absent it is
// computed from the raw activations.
inline StitchNet stitch(const StitchNet& q, const Fragment& f, const Tensor& x_raw, const Tensor& y_raw,
                        std::optional<double> joint_cka = std::nullopt, const StitchOptions& opt = {}) {
  if (f.is_starting()) throw ConfigError("cannot append starting fragment " + f.id());
  if (q.complete()) throw ConfigError("StitchNet " + q.id() + " is already complete");
  const JointKind kind = require_joint_kind(x_raw, f);
  const PreparedJoint joint = prepare_joint(x_raw, y_raw, kind);
  const Projection proj = compute_projection(joint, opt);
  StitchPiece piece = fuse_fragment(f, x_raw, y_raw, proj);
  piece.joint_cka = joint_cka ? *joint_cka : cka_linear(activation_matrix(x_raw), activation_matrix(y_raw));
  return q.appended(std::move(piece));
}

}  // namespace stitchkit
