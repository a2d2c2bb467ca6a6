#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aim {

// Synthetic benchmark: images drawn from 10 procedural class families over a
// fixed 64-color palette, quantized into patch tokens.
struct SyntheticSpec {
  int n_classes = 10;
  int image_h = 16;
  int image_w = 16;
  int patch = 2;
  float noise = 0.01f;  // uniform pixel jitter, small enough to never flip a token

  int grid_h() const { return image_h / patch; }
  int grid_w() const { return image_w / patch; }
  int seq_len() const { return grid_h() * grid_w(); }
  int vocab() const { return 64; }
  void validate() const;
};

struct Image {
  int h = 0, w = 0;
  std::vector<float> pix;  // RGB interleaved, values in [0,1]
};

struct TokenGrid {
  int h = 0, w = 0;  // grid cells, not pixels
  std::vector<uint16_t> tokens;
};

// Palette entry v paints a uniform patch: level q = v/4 in 16 steps of
// green/blue, shade s = v%4 in 4 steps of red.
struct Codebook {
  int patch = 2;
  int vocab = 64;
  std::vector<float> entries;  // [vocab, patch*patch*3]

  int dim() const { return patch * patch * 3; }
};

Codebook make_codebook(int patch = 2);

const char* class_name(int class_id);

// Deterministic in (spec, class_id, seed, index).
TokenGrid generate_grid(const SyntheticSpec& spec, int class_id, uint64_t seed, int index);
Image generate_sample(const SyntheticSpec& spec, int class_id, uint64_t seed, int index);

// Nearest palette entry per patch (L2, ties to the lowest index).
TokenGrid encode(const Image& img, const Codebook& cb);
Image decode(const TokenGrid& grid, const Codebook& cb);

std::vector<uint16_t> flatten(const TokenGrid& grid);  // row-major
TokenGrid unflatten(const std::vector<uint16_t>& tokens, int grid_h, int grid_w);

struct DatasetRecord {
  uint16_t class_id = 0;
  std::vector<uint16_t> tokens;
};

struct Dataset {
  SyntheticSpec spec;
  uint64_t seed = 0;
  int n_per_class = 0;
  std::vector<DatasetRecord> records;
};

Dataset build_dataset(const SyntheticSpec& spec, int n_per_class, uint64_t seed);

// Binary container, little-endian, "AIMD" magic; byte-stable for equal inputs.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

void write_ppm(const std::string& path, const Image& img);

}  // namespace aim
