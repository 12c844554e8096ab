#pragma once

// `.snet` container: a text header terminated by an "end" line, followed by
// one little-endian float64 blob holding every tensor in declaration order.
//
//   SNET 1
//   kind network|stitchnet|dataset
//   ...
//   layer <name> <kind> [key=value ...]
//   tensor <layer-index> weight|bias <dims...>
//   end
//   <blob>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stitchkit/dataset.hpp"
#include "stitchkit/error.hpp"
#include "stitchkit/layer.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/stitcher.hpp"

namespace stitchkit {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw ConfigError(std::string(what) + " '" + s + "' must be a nonempty token without whitespace");
  }
}

inline void append_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((bits >> (8 * i)) & 0xff);
    bits = r;
  }
  char b[8];
  std::memcpy(b, &bits, 8);
  out.append(b, 8);
}

inline double read_f64(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((bits >> (8 * i)) & 0xff);
    bits = r;
  }
  return std::bit_cast<double>(bits);
}

inline std::string layer_line(const Layer& l) {
  require_token(l.name, "layer name");
  std::string s = "layer " + l.name + " " + kind_name(l.op);
  std::visit(Overloaded{
                 [&](const Conv2d& c) {
                   s += " stride=" + std::to_string(c.stride) + " padding=" + std::to_string(c.padding);
                 },
                 [&](const MaxPool2d& p) {
                   s += " kernel=" + std::to_string(p.kernel) + " stride=" + std::to_string(p.stride);
                 },
                 [&](const Resize& r) {
                   s += " height=" + std::to_string(r.height) + " width=" + std::to_string(r.width);
                 },
                 [](const auto&) {},
             },
             l.op);
  return s + "\n";
}

struct BlobWriter {
  std::string header;
  std::string blob;

  void tensor(const std::string& slot, const Tensor& t) {
    header += "tensor " + slot;
    for (auto d : t.shape()) header += " " + std::to_string(d);
    header += "\n";
    for (double v : t.data()) append_f64(blob, v);
  }

  void layer_tensors(const std::vector<const Layer*>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string idx = std::to_string(i);
      if (const auto* l = std::get_if<Linear>(&layers[i]->op)) {
        tensor(idx + " weight", l->weight);
        tensor(idx + " bias", l->bias);
      } else if (const auto* c = std::get_if<Conv2d>(&layers[i]->op)) {
        tensor(idx + " weight", c->weight);
        tensor(idx + " bias", c->bias);
      }
    }
  }

  std::string finish() { return header + "end\n" + blob; }
};

struct Line {
  std::vector<std::string> tokens;
  std::size_t offset = 0;
};

// Line cursor over the text header that reports byte offsets.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : buf_(bytes) {}

  Line next() {
    if (pos_ >= buf_.size()) throw ParseError("unexpected end of file in header", pos_);
    const std::size_t nl = buf_.find('\n', pos_);
    if (nl == std::string_view::npos) throw ParseError("unterminated header line", pos_);
    Line line;
    line.offset = pos_;
    std::string_view text = buf_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && text[i] == ' ') ++i;
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ') ++j;
      if (j > i) line.tokens.emplace_back(text.substr(i, j - i));
      i = j;
    }
    if (line.tokens.empty()) throw ParseError("empty header line", line.offset);
    return line;
  }

  // Next line, which must start with `key` and have at least `min_tokens` tokens.
  Line expect(const std::string& key, std::size_t min_tokens = 2) {
    Line line = next();
    if (line.tokens[0] != key) {
      throw ParseError("expected '" + key + "', found '" + line.tokens[0] + "'", line.offset);
    }
    if (line.tokens.size() < min_tokens) throw ParseError("too few fields on '" + key + "' line", line.offset);
    return line;
  }

  std::size_t position() const { return pos_; }
  std::string_view rest() const { return buf_.substr(pos_); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

inline std::size_t parse_size(const std::string& s, std::size_t offset) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("invalid integer '" + s + "'", offset);
  return v;
}

inline double parse_double(const std::string& s, std::size_t offset) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("invalid number '" + s + "'", offset);
  return v;
}

inline std::map<std::string, std::size_t> parse_params(const Line& line, std::size_t from) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = from; i < line.tokens.size(); ++i) {
    const auto& t = line.tokens[i];
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, found '" + t + "'", line.offset);
    out[t.substr(0, eq)] = parse_size(t.substr(eq + 1), line.offset);
  }
  return out;
}

inline Layer parse_layer(HeaderReader& r) {
  const Line line = r.expect("layer", 3);
  const std::string& kind = line.tokens[2];
  auto params = parse_params(line, 3);
  auto param = [&](const char* key) {
    auto it = params.find(key);
    if (it == params.end()) throw ParseError("layer '" + line.tokens[1] + "' missing " + key, line.offset);
    return it->second;
  };
  Layer l;
  l.name = line.tokens[1];
  if (kind == "linear") l.op = Linear{};
  else if (kind == "conv2d") l.op = Conv2d{Tensor{}, Tensor{}, param("stride"), param("padding")};
  else if (kind == "relu") l.op = ReLU{};
  else if (kind == "maxpool2d") l.op = MaxPool2d{param("kernel"), param("stride")};
  else if (kind == "adaptive_avg_pool_1x1") l.op = AdaptiveAvgPool1x1{};
  else if (kind == "flatten") l.op = Flatten{};
  else if (kind == "softmax") l.op = Softmax{};
  else if (kind == "resize") l.op = Resize{param("height"), param("width")};
  else throw ParseError("unknown layer kind '" + kind + "'", line.offset);
  return l;
}

struct PendingTensor {
  Tensor* target;
  std::string name;
  Shape shape;
};

inline void read_tensor_decl(HeaderReader& r, std::vector<PendingTensor>& out,
                             const std::vector<std::string>& slot, Tensor* target, const std::string& name) {
  const Line line = r.expect("tensor", 2 + slot.size());
  for (std::size_t i = 0; i < slot.size(); ++i) {
    if (line.tokens[1 + i] != slot[i]) throw ParseError("expected declaration of tensor '" + name + "'", line.offset);
  }
  const std::size_t first_dim = 1 + slot.size();
  Shape shape;
  for (std::size_t i = first_dim; i < line.tokens.size(); ++i) {
    const std::size_t d = parse_size(line.tokens[i], line.offset);
    if (d == 0) throw ParseError("tensor '" + name + "' has a zero dimension", line.offset);
    shape.push_back(d);
  }
  if (shape.empty() || shape.size() > 4) throw ParseError("tensor '" + name + "' has invalid rank", line.offset);
  out.push_back({target, name, std::move(shape)});
}

inline void read_layer_tensor_decls(HeaderReader& r, std::vector<Layer*>& layers, std::vector<PendingTensor>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
    if (auto* l = std::get_if<Linear>(&layers[i]->op)) {
      w = &l->weight;
      b = &l->bias;
    } else if (auto* c = std::get_if<Conv2d>(&layers[i]->op)) {
      w = &c->weight;
      b = &c->bias;
    } else {
      continue;
    }
    const std::string idx = std::to_string(i);
    read_tensor_decl(r, out, {idx, "weight"}, w, layers[i]->name + ".weight");
    read_tensor_decl(r, out, {idx, "bias"}, b, layers[i]->name + ".bias");
  }
}

// Consumes the "end" line and fills every pending tensor from the blob.
inline void read_blob(HeaderReader& r, std::vector<PendingTensor>& pending) {
  const Line end = r.next();
  if (end.tokens[0] != "end" || end.tokens.size() != 1) {
    throw ParseError("expected 'end', found '" + end.tokens[0] + "'", end.offset);
  }
  const std::string_view blob = r.rest();
  const std::size_t base = r.position();
  std::size_t cursor = 0;
  for (auto& p : pending) {
    const std::size_t count = shape_size(p.shape);
    const std::size_t avail = (blob.size() - cursor) / 8;
    if (count > avail) {
      throw ParseError("tensor '" + p.name + "' declares " + std::to_string(count) + " values but only " +
                           std::to_string(avail) + " remain in the blob",
                       base + cursor);
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = read_f64(blob.data() + cursor + 8 * i);
    try {
      *p.target = Tensor(p.shape, std::move(values));
    } catch (const Error& e) {
      throw ParseError("tensor '" + p.name + "': " + e.what(), base + cursor);
    }
    cursor += 8 * count;
  }
  if (cursor != blob.size()) {
    throw ParseError(std::to_string(blob.size() - cursor) + " unexpected trailing bytes after blob", base + cursor);
  }
}

inline std::string read_header_kind(HeaderReader& r) {
  const Line magic = r.next();
  if (magic.tokens.size() != 2 || magic.tokens[0] != "SNET") throw ParseError("not an .snet file", magic.offset);
  if (magic.tokens[1] != "1") throw ParseError("unsupported .snet version " + magic.tokens[1], magic.offset);
  return r.expect("kind").tokens[1];
}

inline std::string shape_tokens(const Shape& s) {
  std::string out;
  for (auto d : s) out += " " + std::to_string(d);
  return out;
}

inline Shape parse_shape(const Line& line, std::size_t from) {
  Shape s;
  for (std::size_t i = from; i < line.tokens.size(); ++i) s.push_back(parse_size(line.tokens[i], line.offset));
  return s;
}

inline void write_labels(std::string& h, const std::vector<std::string>& labels) {
  h += "labels " + std::to_string(labels.size()) + "\n";
  for (const auto& l : labels) {
    require_token(l, "class label");
    h += "label " + l + "\n";
  }
}

inline std::vector<std::string> read_labels(HeaderReader& r) {
  const Line line = r.expect("labels");
  const std::size_t n = parse_size(line.tokens[1], line.offset);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(r.expect("label").tokens[1]);
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <class F>
auto with_parse_context(F&& f) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("invalid contents: ") + e.what(), 0);
  }
}

}  // namespace detail

inline std::string serialize_network(const Network& net) {
  validate(net);
  detail::require_token(net.id, "network id");
  detail::BlobWriter w;
  w.header = "SNET 1\nkind network\nid " + net.id + "\ninput_shape" + detail::shape_tokens(net.input_shape) + "\n";
  detail::write_labels(w.header, net.class_labels);
  w.header += "layers " + std::to_string(net.layers.size()) + "\n";
  std::vector<const Layer*> refs;
  for (const auto& l : net.layers) {
    w.header += detail::layer_line(l);
    refs.push_back(&l);
  }
  w.layer_tensors(refs);
  return w.finish();
}

inline Network parse_network(std::string_view bytes) {
  detail::HeaderReader r(bytes);
  const std::string kind = detail::read_header_kind(r);
  if (kind != "network") throw ParseError("expected a network file, found kind '" + kind + "'", 0);
  Network net;
  net.id = r.expect("id").tokens[1];
  net.input_shape = detail::parse_shape(r.expect("input_shape"), 1);
  net.class_labels = detail::read_labels(r);
  const auto lc = r.expect("layers");
  const std::size_t n = detail::parse_size(lc.tokens[1], lc.offset);
  for (std::size_t i = 0; i < n; ++i) net.layers.push_back(detail::parse_layer(r));
  std::vector<Layer*> refs;
  for (auto& l : net.layers) refs.push_back(&l);
  std::vector<detail::PendingTensor> pending;
  detail::read_layer_tensor_decls(r, refs, pending);
  detail::read_blob(r, pending);
  detail::with_parse_context([&] { return validate(net); });
  return net;
}

inline std::string serialize_stitchnet(const StitchNet& s) {
  detail::require_token(s.id(), "StitchNet id");
  detail::BlobWriter w;
  w.header = "SNET 1\nkind stitchnet\nid " + s.id() + "\nscore " + detail::format_double(s.score()) + "\n";
  w.header += "stitch_split " + (s.stitch_split().empty() ? std::string("-") : s.stitch_split()) + "\n";
  detail::write_labels(w.header, s.network().class_labels);
  w.header += "pieces " + std::to_string(s.pieces().size()) + "\n";
  std::vector<const Layer*> refs;
  for (const auto& p : s.pieces()) {
    const Fragment& f = p.fragment;
    detail::require_token(f.source_network_id, "source network id");
    w.header += "piece " + f.source_network_id + " " + std::to_string(f.start_layer) + " " +
                std::to_string(f.end_layer) + " " + std::to_string(f.source_length) + " " +
                detail::format_double(p.joint_cka) + " " + std::to_string(p.adapter.size()) + " " +
                std::to_string(f.layers.size()) + "\n";
    w.header += "input_shape" + detail::shape_tokens(f.input_shape) + "\n";
    for (const auto& l : p.adapter) {
      w.header += detail::layer_line(l);
      refs.push_back(&l);
    }
    for (const auto& l : f.layers) {
      w.header += detail::layer_line(l);
      refs.push_back(&l);
    }
  }
  w.layer_tensors(refs);
  return w.finish();
}

inline StitchNet parse_stitchnet(std::string_view bytes) {
  detail::HeaderReader r(bytes);
  const std::string kind = detail::read_header_kind(r);
  if (kind != "stitchnet") throw ParseError("expected a stitchnet file, found kind '" + kind + "'", 0);
  const std::string id = r.expect("id").tokens[1];
  const auto sl = r.expect("score");
  const double score = detail::parse_double(sl.tokens[1], sl.offset);
  std::string split = r.expect("stitch_split").tokens[1];
  if (split == "-") split.clear();
  const auto labels = detail::read_labels(r);
  const auto pl = r.expect("pieces");
  const std::size_t np = detail::parse_size(pl.tokens[1], pl.offset);
  std::vector<StitchPiece> pieces(np);
  for (auto& p : pieces) {
    const auto line = r.expect("piece", 8);
    p.fragment.source_network_id = line.tokens[1];
    p.fragment.start_layer = detail::parse_size(line.tokens[2], line.offset);
    p.fragment.end_layer = detail::parse_size(line.tokens[3], line.offset);
    p.fragment.source_length = detail::parse_size(line.tokens[4], line.offset);
    p.joint_cka = detail::parse_double(line.tokens[5], line.offset);
    const std::size_t na = detail::parse_size(line.tokens[6], line.offset);
    const std::size_t nl = detail::parse_size(line.tokens[7], line.offset);
    p.fragment.input_shape = detail::parse_shape(r.expect("input_shape"), 1);
    for (std::size_t i = 0; i < na; ++i) p.adapter.push_back(detail::parse_layer(r));
    for (std::size_t i = 0; i < nl; ++i) p.fragment.layers.push_back(detail::parse_layer(r));
  }
  if (!pieces.empty() && pieces.back().fragment.is_terminating()) pieces.back().fragment.class_labels = labels;
  std::vector<Layer*> refs;
  for (auto& p : pieces) {
    for (auto& l : p.adapter) refs.push_back(&l);
    for (auto& l : p.fragment.layers) refs.push_back(&l);
  }
  std::vector<detail::PendingTensor> pending;
  detail::read_layer_tensor_decls(r, refs, pending);
  detail::read_blob(r, pending);
  return detail::with_parse_context(
      [&] { return StitchNet::from_pieces(id, std::move(pieces), score, std::move(split)); });
}

inline std::string serialize_dataset(const Dataset& d) {
  validate(d);
  detail::require_token(d.split, "split");
  detail::BlobWriter w;
  w.header = "SNET 1\nkind dataset\nseed " + std::to_string(d.seed) + "\nsplit " + d.split + "\n";
  detail::write_labels(w.header, d.class_names);
  std::vector<double> labels(d.labels.begin(), d.labels.end());
  w.tensor("images", d.images);
  w.tensor("labels", Tensor({d.labels.size()}, std::move(labels)));
  return w.finish();
}

inline Dataset parse_dataset(std::string_view bytes) {
  detail::HeaderReader r(bytes);
  const std::string kind = detail::read_header_kind(r);
  if (kind != "dataset") throw ParseError("expected a dataset file, found kind '" + kind + "'", 0);
  Dataset d;
  const auto seed = r.expect("seed");
  d.seed = static_cast<std::uint64_t>(std::stoull(seed.tokens[1]));
  d.split = r.expect("split").tokens[1];
  d.class_names = detail::read_labels(r);
  Tensor labels;
  std::vector<detail::PendingTensor> pending;
  detail::read_tensor_decl(r, pending, {"images"}, &d.images, "images");
  detail::read_tensor_decl(r, pending, {"labels"}, &labels, "labels");
  detail::read_blob(r, pending);
  for (double v : labels.data()) {
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) throw ParseError("non-integer label", 0);
    d.labels.push_back(static_cast<std::size_t>(v));
  }
  detail::with_parse_context([&] { validate(d); return 0; });
  return d;
}

inline void save_network(const Network& net, const std::filesystem::path& path) {
  detail::write_file(path, serialize_network(net));
}
inline Network load_network(const std::filesystem::path& path) { return parse_network(detail::read_file(path)); }

inline void save_stitchnet(const StitchNet& s, const std::filesystem::path& path) {
  detail::write_file(path, serialize_stitchnet(s));
}
inline StitchNet load_stitchnet(const std::filesystem::path& path) {
  return parse_stitchnet(detail::read_file(path));
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  detail::write_file(path, serialize_dataset(d));
}
inline Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(detail::read_file(path)); }

// Kind tag of an .snet file ("network", "stitchnet" or "dataset").
inline std::string snet_kind(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::HeaderReader r(bytes);
  return detail::read_header_kind(r);
}

// Pool manifest: "granularity single_cut|all_spans" then "network <path>"
// lines; relative paths resolve against the manifest's directory.
struct PoolManifest {
  Granularity granularity = Granularity::SingleCut;
  std::vector<std::filesystem::path> networks;
};

inline std::string serialize_manifest(const PoolManifest& m) {
  std::string out = "granularity ";
  out += m.granularity == Granularity::SingleCut ? "single_cut" : "all_spans";
  out += "\n";
  for (const auto& p : m.networks) out += "network " + p.generic_string() + "\n";
  return out;
}

inline PoolManifest parse_manifest(std::string_view text) {
  PoolManifest m;
  std::size_t pos = 0;
  bool have_granularity = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    const std::size_t offset = pos;
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "granularity") {
      if (value == "single_cut") m.granularity = Granularity::SingleCut;
      else if (value == "all_spans") m.granularity = Granularity::AllSpans;
      else throw ParseError("unknown granularity '" + value + "'", offset);
      have_granularity = true;
    } else if (key == "network") {
      if (value.empty()) throw ParseError("network line without a path", offset);
      m.networks.emplace_back(value);
    } else {
      throw ParseError("unknown manifest key '" + key + "'", offset);
    }
  }
  if (!have_granularity) throw ParseError("manifest lacks a granularity line", 0);
  if (m.networks.empty()) throw ParseError("manifest lists no networks", 0);
  return m;
}

inline void save_manifest(const PoolManifest& m, const std::filesystem::path& path) {
  detail::write_file(path, serialize_manifest(m));
}

inline PoolManifest load_manifest(const std::filesystem::path& path) {
  PoolManifest m = parse_manifest(detail::read_file(path));
  for (auto& p : m.networks)
    if (p.is_relative()) p = path.parent_path() / p;
  return m;
}

inline FragmentPool load_pool(const std::filesystem::path& manifest_path) {
  const PoolManifest m = load_manifest(manifest_path);
  std::vector<Network> nets;
  for (const auto& p : m.networks) nets.push_back(load_network(p));
  return FragmentPool(std::move(nets), m.granularity);
}

// Label-map file: "target <id> <name>" lines then "map <source> <target>".
inline LabelMap parse_label_map(std::string_view text) {
  std::map<std::size_t, std::string> names;
  std::map<std::size_t, std::size_t> mapping;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, a, b;
    ls >> key >> a >> b;
    if (key == "target" && !a.empty() && !b.empty()) {
      names[detail::parse_size(a, here)] = b;
    } else if (key == "map" && !a.empty() && !b.empty()) {
      mapping[detail::parse_size(a, here)] = detail::parse_size(b, here);
    } else {
      throw ParseError("malformed label map line '" + line + "'", here);
    }
  }
  std::vector<std::string> ordered;
  for (std::size_t t = 0; t < names.size(); ++t) {
    auto it = names.find(t);
    if (it == names.end()) throw ParseError("label map target names must be contiguous from 0", 0);
    ordered.push_back(it->second);
  }
  return detail::with_parse_context([&] { return LabelMap(std::move(mapping), std::move(ordered)); });
}

inline std::string serialize_label_map(const LabelMap& m) {
  std::string out;
  for (std::size_t t = 0; t < m.num_targets(); ++t) out += "target " + std::to_string(t) + " " + m.target_names()[t] + "\n";
  for (auto [s, t] : m.mapping()) out += "map " + std::to_string(s) + " " + std::to_string(t) + "\n";
  return out;
}

inline LabelMap load_label_map(const std::filesystem::path& path) { return parse_label_map(detail::read_file(path)); }

}  // namespace stitchkit
