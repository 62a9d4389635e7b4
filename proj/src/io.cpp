#include "advinn/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "advinn/error.hpp"

namespace advinn {

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- PPM ------------------------------------------------------------------

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("encode_ppm: expected 3 x H x W, got " + shape_to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), area = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * area);
  const auto px = image.data();
  for (std::size_t i = 0; i < area; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(std::round(px[c * area + i] * 255.0), 0.0, 255.0);
      out[header + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(v));
    }
  }
  return out;
}

namespace {

// Reads the next whitespace-separated header integer, skipping '#' comments.
std::size_t ppm_header_int(std::string_view bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t value = 0;
  auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
  if (ec != std::errc() || end == bytes.data() + pos) throw CorruptionError("ppm: malformed header");
  pos = static_cast<std::size_t>(end - bytes.data());
  return value;
}

}  // namespace

Tensor decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P6") throw CorruptionError("ppm: missing P6 magic");
  std::size_t pos = 2;
  const std::size_t w = ppm_header_int(bytes, pos);
  const std::size_t h = ppm_header_int(bytes, pos);
  const std::size_t maxval = ppm_header_int(bytes, pos);
  if (w == 0 || h == 0) throw CorruptionError("ppm: zero-sized image");
  if (maxval != 255) throw CorruptionError("ppm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw CorruptionError("ppm: malformed header");
  }
  ++pos;
  const std::size_t area = w * h;
  if (bytes.size() - pos != 3 * area) {
    throw CorruptionError("ppm: expected " + std::to_string(3 * area) + " pixel bytes, found " +
                          std::to_string(bytes.size() - pos));
  }
  Tensor img(Shape{3, h, w});
  auto px = img.mutable_data();
  for (std::size_t i = 0; i < area; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      px[c * area + i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + 3 * i + c])) / 255.0;
    }
  }
  return img;
}

void write_ppm(const fs::path& path, const Tensor& image) { write_file_atomic(path, encode_ppm(image)); }

Tensor read_ppm(const fs::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

// ---- manifest ---------------------------------------------------------------

std::string encode_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = "file,label,split\n";
  for (const auto& r : rows) out += r.file + "," + std::to_string(r.label) + "," + r.split + "\n";
  return out;
}

std::vector<ManifestRow> decode_manifest(std::string_view text) {
  std::vector<ManifestRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "file,label,split") throw CorruptionError("manifest: bad header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw CorruptionError("manifest: line " + std::to_string(line_no));
    ManifestRow row;
    row.file = line.substr(0, a);
    const std::string label = line.substr(a + 1, b - a - 1);
    auto [end, ec] = std::from_chars(label.data(), label.data() + label.size(), row.label);
    if (ec != std::errc() || end != label.data() + label.size()) {
      throw CorruptionError("manifest: bad label on line " + std::to_string(line_no));
    }
    row.split = line.substr(b + 1);
    if (row.split != "train" && row.split != "test") {
      throw CorruptionError("manifest: bad split on line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  std::vector<ManifestRow> rows;
  auto save_split = [&](const LabelledImages& split, const std::string& name) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%05zu.ppm", i);
      const std::string rel = name + "/" + file;
      write_ppm(dir / rel, split.images[i]);
      rows.push_back(ManifestRow{rel, split.labels[i], name});
    }
  };
  save_split(data.train, "train");
  save_split(data.test, "test");
  write_file_atomic(dir / "manifest.csv", encode_manifest(rows));
}

Dataset load_dataset(const fs::path& dir, std::size_t num_classes) {
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) throw IoError("dataset manifest not found: " + manifest.string());
  Dataset ds;
  ds.num_classes = num_classes;
  for (const auto& row : decode_manifest(read_file(manifest))) {
    if (row.label >= num_classes) throw CorruptionError("manifest: label out of range in " + row.file);
    Tensor img = read_ppm(dir / row.file);
    (row.split == "train" ? ds.train : ds.test).push_back(std::move(img), row.label);
  }
  return ds;
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "ADVINN1";

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) throw CorruptionError(std::string("checkpoint: truncated ") + what);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw CorruptionError(std::string("checkpoint: truncated ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t byte_sum(std::string_view bytes) {
  std::uint64_t s = 0;
  for (char c : bytes) s += static_cast<unsigned char>(c);
  return s;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.kind.size()));
  out += ckpt.kind;
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) meta += k + "=" + v + "\n";
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    put<std::uint64_t>(out, t.rank());
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
  }
  const std::size_t payload_start = out.size();
  for (const auto& t : ckpt.tensors) {
    for (double v : t.data()) put<double>(out, v);
  }
  put<std::uint64_t>(out, byte_sum(std::string_view(out).substr(payload_start)));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw CorruptionError("checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.kind = std::string(r.take(r.get<std::uint32_t>("kind length"), "kind"));
  std::istringstream meta{std::string(r.take(r.get<std::uint32_t>("metadata length"), "metadata"))};
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptionError("checkpoint: malformed metadata line '" + line + "'");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.get<std::uint64_t>("tensor count");
  if (count > r.remaining() / 8) throw CorruptionError("checkpoint: implausible tensor count");
  std::vector<Shape> shapes;
  std::uint64_t total = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto rank = r.get<std::uint64_t>("rank");
    if (rank == 0 || rank > 8) throw CorruptionError("checkpoint: implausible rank");
    Shape s;
    std::uint64_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0 || d > r.remaining()) throw CorruptionError("checkpoint: implausible dimension");
      s.push_back(static_cast<std::size_t>(d));
      n *= d;
    }
    total += n;
    shapes.push_back(std::move(s));
  }
  if (r.remaining() != total * 8 + 8) {
    throw CorruptionError("checkpoint: payload size mismatch (expected " + std::to_string(total * 8 + 8) +
                          " bytes, found " + std::to_string(r.remaining()) + ")");
  }
  const std::string_view payload = bytes.substr(r.pos(), total * 8);
  for (const auto& s : shapes) {
    std::vector<double> data(shape_numel(s));
    for (auto& v : data) v = r.get<double>("payload");
    ckpt.tensors.emplace_back(s, std::move(data));
  }
  if (r.get<std::uint64_t>("checksum") != byte_sum(payload)) throw CorruptionError("checkpoint: checksum mismatch");
  return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) { write_file_atomic(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

const std::string& meta_value(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw CorruptionError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

std::size_t parse_size(const std::string& text, const std::string& key) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw CorruptionError("checkpoint: bad metadata '" + key + "'");
  }
  return v;
}

std::size_t meta_size(const Checkpoint& c, const std::string& key) { return parse_size(meta_value(c, key), key); }

}  // namespace

namespace {

template <typename T>
void copy_parameters(const fs::path& path, const Checkpoint& ckpt, std::size_t offset, T& model) {
  auto params = model.parameters();
  if (params.size() + offset != ckpt.tensors.size()) throw CorruptionError(path.string() + ": parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& src = ckpt.tensors[i + offset];
    if (src.shape() != params[i].shape()) throw CorruptionError(path.string() + ": parameter shape mismatch");
    std::copy(src.data().begin(), src.data().end(), params[i].mutable_data().begin());
  }
}

}  // namespace

void save_classifier(const fs::path& path, const Classifier& model) {
  const ClassifierConfig& c = model.config();
  Checkpoint ckpt;
  ckpt.kind = "classifier";
  ckpt.meta["channels"] = std::to_string(c.channels);
  ckpt.meta["height"] = std::to_string(c.height);
  ckpt.meta["width"] = std::to_string(c.width);
  ckpt.meta["num_classes"] = std::to_string(c.num_classes);
  ckpt.meta["widths"] = join_sizes(c.widths);
  // The gain is stored bit-exactly as part of the payload.
  ckpt.tensors.push_back(Tensor::scalar(c.input_gain));
  for (const auto& p : model.parameters()) ckpt.tensors.push_back(p);
  save_checkpoint(path, ckpt);
}

Classifier load_classifier(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "classifier") throw CorruptionError(path.string() + ": checkpoint kind is '" + ckpt.kind + "'");
  ClassifierConfig c;
  c.channels = meta_size(ckpt, "channels");
  c.height = meta_size(ckpt, "height");
  c.width = meta_size(ckpt, "width");
  c.num_classes = meta_size(ckpt, "num_classes");
  c.widths.clear();
  std::istringstream widths(meta_value(ckpt, "widths"));
  for (std::string w; std::getline(widths, w, ',');) c.widths.push_back(parse_size(w, "widths"));
  if (ckpt.tensors.empty() || ckpt.tensors.front().numel() != 1) throw CorruptionError("checkpoint: missing gain");
  c.input_gain = ckpt.tensors.front()[0];
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
  Classifier model(c, 0);
  copy_parameters(path, ckpt, 1, model);
  return model;
}

void save_iiem(const fs::path& path, const Iiem& theta) {
  const IiemConfig& c = theta.config();
  Checkpoint ckpt;
  ckpt.kind = "iiem";
  ckpt.meta["channels"] = std::to_string(c.channels);
  ckpt.meta["dwt_levels"] = std::to_string(c.dwt_levels);
  ckpt.meta["num_blocks"] = std::to_string(c.num_blocks);
  ckpt.meta["layers"] = std::to_string(c.subnet.layers);
  ckpt.meta["growth"] = std::to_string(c.subnet.growth);
  ckpt.meta["kernel"] = std::to_string(c.subnet.kernel);
  // Real-valued settings travel bit-exactly in the payload: clamp, slope.
  ckpt.tensors.push_back(Tensor(Shape{2}, std::vector<double>{c.clamp, c.subnet.slope}));
  for (const auto& p : theta.parameters()) ckpt.tensors.push_back(p);
  save_checkpoint(path, ckpt);
}

Iiem load_iiem(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "iiem") throw CorruptionError(path.string() + ": checkpoint kind is '" + ckpt.kind + "'");
  IiemConfig c;
  c.channels = meta_size(ckpt, "channels");
  c.dwt_levels = meta_size(ckpt, "dwt_levels");
  c.num_blocks = meta_size(ckpt, "num_blocks");
  c.subnet.layers = meta_size(ckpt, "layers");
  c.subnet.growth = meta_size(ckpt, "growth");
  c.subnet.kernel = meta_size(ckpt, "kernel");
  if (ckpt.tensors.empty() || ckpt.tensors.front().numel() != 2) throw CorruptionError(path.string() + ": missing settings");
  c.clamp = ckpt.tensors.front()[0];
  c.subnet.slope = ckpt.tensors.front()[1];
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
  Iiem theta(c, 0);
  copy_parameters(path, ckpt, 1, theta);
  return theta;
}

}  // namespace advinn
