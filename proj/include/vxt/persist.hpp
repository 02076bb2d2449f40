#pragma once

// Bit-exact file formats: the VXTC container (networks, datasets, tensors),
// sweep CSVs with 17-significant-digit numbers, and P6 heatmap images.
// Writers go through a temp file and an atomic rename.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxt/analysis.hpp"
#include "vxt/network.hpp"
#include "vxt/relevance.hpp"
#include "vxt/sampler.hpp"
#include "vxt/tensor.hpp"

namespace vxt {

class persist_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class bad_magic_error : public persist_error {
 public:
  using persist_error::persist_error;
};
class version_mismatch_error : public persist_error {
 public:
  using persist_error::persist_error;
};
class truncated_file_error : public persist_error {
 public:
  using persist_error::persist_error;
};
class manifest_error : public persist_error {
 public:
  using persist_error::persist_error;
};
class degenerate_map_error : public persist_error {
 public:
  using persist_error::persist_error;
};

namespace detail {

constexpr char kMagic[4] = {'V', 'X', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64le(out, bits);
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline double get_f64le(const unsigned char* p) {
  const std::uint64_t bits = get_u64le(p);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

inline void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw persist_error("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw persist_error("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw persist_error("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// In-memory container: named typed entries over one concatenated f64le
// payload. Entry offsets are relative to the payload base, which sits right
// after the manifest.
class Container {
 public:
  struct Entry {
    std::string name;
    std::string kind;  // tensor | netspec | dataset-meta
    std::vector<std::size_t> shape;
    std::vector<double> payload;
    nlohmann::json meta;  // extra fields for netspec / dataset-meta entries
  };

  void add_tensor(const std::string& name, const Tensor& t) {
    entries_.push_back({name, "tensor", t.shape(), t.values(), nlohmann::json::object()});
  }

  void add_meta(const std::string& name, const std::string& kind, nlohmann::json meta) {
    entries_.push_back({name, kind, {}, {}, std::move(meta)});
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  const Entry& require(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw manifest_error("container: missing entry '" + name + "'");
    return *e;
  }

  Tensor tensor(const std::string& name) const {
    const Entry& e = require(name);
    if (e.kind != "tensor") throw manifest_error("container: '" + name + "' is not a tensor");
    return Tensor(e.shape, e.payload);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["entries"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : entries_) {
      nlohmann::json j;
      j["name"] = e.name;
      j["kind"] = e.kind;
      j["shape"] = e.shape;
      j["dtype"] = "f64le";
      j["offset"] = offset;
      j["length"] = e.payload.size() * 8;
      if (!e.meta.empty()) j["meta"] = e.meta;
      manifest["entries"].push_back(std::move(j));
      offset += e.payload.size() * 8;
    }
    const std::string text = manifest.dump();

    std::string bytes;
    bytes.append(detail::kMagic, 4);
    detail::put_u32le(bytes, detail::kVersion);
    detail::put_u64le(bytes, text.size());
    bytes.append(text);
    for (const auto& e : entries_)
      for (double v : e.payload) detail::put_f64le(bytes, v);
    detail::atomic_write(path, bytes);
  }

  static Container load(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 16) throw truncated_file_error("container: file shorter than header");
    if (std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
      throw bad_magic_error("container: bad magic");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t version = detail::get_u32le(raw + 4);
    if (version != detail::kVersion)
      throw version_mismatch_error("container: unsupported version " + std::to_string(version));
    const std::uint64_t manifest_len = detail::get_u64le(raw + 8);
    if (16 + manifest_len > bytes.size())
      throw truncated_file_error("container: manifest extends beyond file end");
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(bytes.begin() + 16,
                                       bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
    } catch (const nlohmann::json::exception& e) {
      throw manifest_error(std::string("container: manifest does not parse: ") + e.what());
    }
    const std::size_t payload_base = 16 + static_cast<std::size_t>(manifest_len);

    Container c;
    try {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
      for (const auto& j : manifest.at("entries")) {
        Entry e;
        e.name = j.at("name").get<std::string>();
        e.kind = j.at("kind").get<std::string>();
        e.shape = j.at("shape").get<std::vector<std::size_t>>();
        if (j.at("dtype").get<std::string>() != "f64le")
          throw manifest_error("container: unsupported dtype in '" + e.name + "'");
        const std::uint64_t offset = j.at("offset").get<std::uint64_t>();
        const std::uint64_t length = j.at("length").get<std::uint64_t>();
        if (e.kind == "tensor" && length != Tensor::count(e.shape) * 8)
          throw manifest_error("container: shape/length mismatch in '" + e.name + "'");
        if (length % 8 != 0)
          throw manifest_error("container: length not a multiple of 8 in '" + e.name + "'");
        if (payload_base + offset + length > bytes.size())
          throw truncated_file_error("container: payload of '" + e.name +
                                     "' extends beyond file end");
        if (length > 0) spans.emplace_back(offset, length);
        e.payload.resize(length / 8);
        for (std::size_t i = 0; i < e.payload.size(); ++i)
          e.payload[i] = detail::get_f64le(raw + payload_base + offset + i * 8);
        if (j.contains("meta")) e.meta = j.at("meta");
        c.entries_.push_back(std::move(e));
      }
      std::sort(spans.begin(), spans.end());
      for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i - 1].first + spans[i - 1].second > spans[i].first)
          throw manifest_error("container: overlapping payload entries");
    } catch (const nlohmann::json::exception& e) {
      throw manifest_error(std::string("container: malformed manifest entry: ") + e.what());
    }
    return c;
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {

inline nlohmann::json layer_to_json(const LayerSpec& layer) {
  nlohmann::json j;
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv3D>) {
          j["type"] = "conv3d";
          j["in_channels"] = l.in_channels;
          j["out_channels"] = l.out_channels;
          j["kernel"] = l.kernel;
          j["stride"] = l.stride;
          j["padding"] = l.padding;
          j["bias"] = l.has_bias;
        } else if constexpr (std::is_same_v<L, ReLU>) {
          j["type"] = "relu";
        } else if constexpr (std::is_same_v<L, MaxPool3D>) {
          j["type"] = "maxpool3d";
          j["window"] = l.window;
          j["stride"] = l.stride;
        } else if constexpr (std::is_same_v<L, SumPool3D>) {
          j["type"] = "sumpool3d";
          j["window"] = l.window;
          j["stride"] = l.stride;
        } else if constexpr (std::is_same_v<L, Flatten>) {
          j["type"] = "flatten";
        } else {
          j["type"] = "dense";
          j["in_features"] = l.in_features;
          j["out_features"] = l.out_features;
          j["bias"] = l.has_bias;
        }
      },
      layer);
  return j;
}

template <typename T, std::size_t N>
std::array<T, N> array_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != N) throw manifest_error("container: bad extent array");
  std::array<T, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<T>();
  return out;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv3d") {
    Conv3D l;
    l.in_channels = j.at("in_channels").get<std::size_t>();
    l.out_channels = j.at("out_channels").get<std::size_t>();
    l.kernel = array_from_json<std::size_t, 3>(j.at("kernel"));
    l.stride = array_from_json<std::size_t, 3>(j.at("stride"));
    l.padding = array_from_json<std::size_t, 3>(j.at("padding"));
    l.has_bias = j.at("bias").get<bool>();
    return l;
  }
  if (type == "relu") return ReLU{};
  if (type == "maxpool3d")
    return MaxPool3D{array_from_json<std::size_t, 3>(j.at("window")),
                     array_from_json<std::size_t, 3>(j.at("stride"))};
  if (type == "sumpool3d")
    return SumPool3D{array_from_json<std::size_t, 3>(j.at("window")),
                     array_from_json<std::size_t, 3>(j.at("stride"))};
  if (type == "flatten") return Flatten{};
  if (type == "dense")
    return Dense{j.at("in_features").get<std::size_t>(),
                 j.at("out_features").get<std::size_t>(), j.at("bias").get<bool>()};
  throw manifest_error("container: unknown layer type '" + type + "'");
}

}  // namespace detail

inline void save_network(const std::string& path, const NetworkSpec& net) {
  Container c;
  nlohmann::json meta;
  meta["input_shape"] = net.input_shape;
  meta["class_count"] = net.class_count;
  meta["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers) meta["layers"].push_back(detail::layer_to_json(layer));
  c.add_meta("net", "netspec", std::move(meta));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.params[i].weight.size() > 0)
      c.add_tensor("layer" + std::to_string(i) + ".weight", net.params[i].weight);
    if (net.params[i].bias.size() > 0)
      c.add_tensor("layer" + std::to_string(i) + ".bias", net.params[i].bias);
  }
  c.save(path);
}

inline NetworkSpec load_network(const std::string& path) {
  const Container c = Container::load(path);
  const Container::Entry& spec = c.require("net");
  if (spec.kind != "netspec") throw manifest_error("container: 'net' entry has wrong kind");
  NetworkSpec net;
  try {
    net.input_shape = detail::array_from_json<std::size_t, 4>(spec.meta.at("input_shape"));
    net.class_count = spec.meta.at("class_count").get<std::size_t>();
    for (const auto& j : spec.meta.at("layers")) net.layers.push_back(detail::layer_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw manifest_error(std::string("container: malformed netspec: ") + e.what());
  }
  net.params.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* e = c.find("layer" + std::to_string(i) + ".weight"))
      net.params[i].weight = Tensor(e->shape, e->payload);
    if (const auto* e = c.find("layer" + std::to_string(i) + ".bias"))
      net.params[i].bias = Tensor(e->shape, e->payload);
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw manifest_error(std::string("container: inconsistent network: ") + e.what());
  }
  return net;
}

struct LoadedDataset {
  std::vector<Video> videos;
  std::size_t class_count = 0;
};

inline void save_dataset(const std::string& path, std::span<const Video> videos,
                         std::size_t class_count) {
  Container c;
  nlohmann::json meta;
  meta["count"] = videos.size();
  meta["class_count"] = class_count;
  meta["videos"] = nlohmann::json::array();
  for (const Video& v : videos) {
    nlohmann::json j;
    j["id"] = v.id;
    j["true_class"] = v.true_class;
    j["pixel_range"] = v.pixel_range;
    meta["videos"].push_back(std::move(j));
  }
  c.add_meta("dataset", "dataset-meta", std::move(meta));
  for (std::size_t i = 0; i < videos.size(); ++i)
    c.add_tensor("video" + std::to_string(i), videos[i].frames);
  c.save(path);
}

inline LoadedDataset load_dataset(const std::string& path) {
  const Container c = Container::load(path);
  const Container::Entry& spec = c.require("dataset");
  if (spec.kind != "dataset-meta")
    throw manifest_error("container: 'dataset' entry has wrong kind");
  LoadedDataset out;
  try {
    out.class_count = spec.meta.at("class_count").get<std::size_t>();
    const std::size_t count = spec.meta.at("count").get<std::size_t>();
    const auto& video_meta = spec.meta.at("videos");
    if (video_meta.size() != count) throw manifest_error("container: dataset count mismatch");
    out.videos.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Video v;
      v.frames = c.tensor("video" + std::to_string(i));
      if (v.frames.rank() != 4) throw manifest_error("container: video tensor must be rank 4");
      v.id = video_meta[i].at("id").get<std::string>();
      v.true_class = video_meta[i].at("true_class").get<std::size_t>();
      v.pixel_range = detail::array_from_json<double, 2>(video_meta[i].at("pixel_range"));
      out.videos.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw manifest_error(std::string("container: malformed dataset meta: ") + e.what());
  }
  return out;
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  Container c;
  c.add_tensor("tensor", t);
  c.save(path);
}

inline Tensor load_tensor(const std::string& path) {
  return Container::load(path).tensor("tensor");
}

// ---- CSV ----

inline void write_step_sweep_csv(const std::string& path,
                                 std::span<const StepSweepRow> rows) {
  std::string out = "step,B,C,D,L,A,topk_acc,excluded\n";
  for (const auto& r : rows) {
    out += detail::format_g17(r.step.value()) + "," + detail::format_g17(r.quad.curvature) +
           "," + detail::format_g17(r.quad.slope) + "," + detail::format_g17(r.quad.intercept) +
           "," + detail::format_g17(r.lin.slope) + "," + detail::format_g17(r.lin.intercept) +
           "," + detail::format_g17(r.topk_accuracy) + "," + std::to_string(r.excluded) + "\n";
  }
  detail::atomic_write(path, out);
}

inline void write_offset_sweep_csv(const std::string& path,
                                   std::span<const OffsetSweepRow> rows) {
  std::string out = "offset,L,A,B,C,D,excluded\n";
  for (const auto& r : rows) {
    out += std::to_string(r.offset) + "," + detail::format_g17(r.lin.slope) + "," +
           detail::format_g17(r.lin.intercept) + "," + detail::format_g17(r.quad.curvature) +
           "," + detail::format_g17(r.quad.slope) + "," + detail::format_g17(r.quad.intercept) +
           "," + std::to_string(r.excluded) + "\n";
  }
  detail::atomic_write(path, out);
}

inline void write_profile_csv(const std::string& path, std::span<const double> mean_share) {
  std::string out = "t,mean_p\n";
  for (std::size_t i = 0; i < mean_share.size(); ++i)
    out += std::to_string(i + 1) + "," + detail::format_g17(mean_share[i]) + "\n";
  detail::atomic_write(path, out);
}

inline void write_explain_csv(const std::string& path, const std::string& video_id,
                              const AttributionMap& map) {
  std::string out = "video_id,method,explained_class,explained_value,score_sum\n";
  out += video_id;
  out += ",";
  out += method_name(map.method);
  out += "," + std::to_string(map.explained_class) + "," +
         detail::format_g17(map.explained_value) + "," + detail::format_g17(map.scores.sum()) +
         "\n";
  detail::atomic_write(path, out);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  CsvTable table;
  std::size_t pos = 0;
  bool first = true;
  while (pos < bytes.size()) {
    std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos) eol = bytes.size();
    const std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = fields;
      first = false;
    } else {
      std::vector<double> row;
      row.reserve(fields.size());
      for (const auto& f : fields) row.push_back(std::strtod(f.c_str(), nullptr));
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// ---- Heatmaps ----

// One binary P6 image per frame, "frame_###.ppm" inside dir. Scores are
// collapsed over channels and normalized by the max absolute value over the
// whole snippet so frames stay comparable; white-to-red ramp.
inline std::vector<std::string> render_heatmap(const AttributionMap& map,
                                               const std::string& dir) {
  if (map.scores.rank() != 4)
    throw std::invalid_argument("render_heatmap: scores must be rank 4");
  const auto& shape = map.scores.shape();
  const std::size_t channels = shape[0], frames = shape[1], height = shape[2],
                    width = shape[3];
  std::vector<double> collapsed(frames * height * width, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < collapsed.size(); ++i)
      collapsed[i] += map.scores[c * collapsed.size() + i];
  double max_abs = 0.0;
  for (double v : collapsed) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0) throw degenerate_map_error("render_heatmap: all-zero attribution map");

  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  paths.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    std::string bytes = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t col = 0; col < width; ++col) {
        double v = collapsed[(f * height + r) * width + col] / max_abs;
        v = std::min(std::max(v, 0.0), 1.0);
        const unsigned char gb =
            static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)));
        bytes.push_back(static_cast<char>(0xFF));
        bytes.push_back(static_cast<char>(gb));
        bytes.push_back(static_cast<char>(gb));
      }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.ppm", f);
    const std::string path = (std::filesystem::path(dir) / name).string();
    detail::atomic_write(path, bytes);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace vxt
