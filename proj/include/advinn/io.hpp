#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "advinn/classifier.hpp"
#include "advinn/coupling.hpp"
#include "advinn/dataset.hpp"
#include "advinn/tensor.hpp"

namespace advinn {

namespace fs = std::filesystem;

// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);  // IoError if missing or unreadable

// Binary PPM (P6, maxval 255) for 3 x H x W images in [0, 1]. Values are
// rounded to the nearest level (half away from zero) on write.
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(std::string_view bytes);  // CorruptionError on malformed input
void write_ppm(const fs::path& path, const Tensor& image);
Tensor read_ppm(const fs::path& path);

struct ManifestRow {
  std::string file;  // relative to the manifest's directory
  std::size_t label = 0;
  std::string split;  // "train" or "test"
};

// CSV with header "file,label,split".
std::string encode_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> decode_manifest(std::string_view text);

// Writes images under <dir>/train and <dir>/test plus <dir>/manifest.csv.
void save_dataset(const fs::path& dir, const Dataset& data);
Dataset load_dataset(const fs::path& dir, std::size_t num_classes = kShapeClasses);

// Checkpoint layout (all integers little-endian):
//   "ADVINN1"                     7-byte magic
//   u32 n, n bytes                kind tag
//   u32 n, n bytes                metadata, "key=value" lines
//   u64 count, then per tensor    u64 rank, rank x u64 dims
//   f64 payload                   every tensor, in order
//   u64 checksum                  sum of the payload bytes mod 2^64
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<Tensor> tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);  // CorruptionError on any mismatch
void save_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const fs::path& path);

void save_classifier(const fs::path& path, const Classifier& model);
Classifier load_classifier(const fs::path& path);

void save_iiem(const fs::path& path, const Iiem& theta);
Iiem load_iiem(const fs::path& path);

}  // namespace advinn
