#include "aim/tokenizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aim/common.hpp"
#include "aim/rng.hpp"
#include "aim/serial.hpp"

namespace aim {

void SyntheticSpec::validate() const {
  check(n_classes >= 1 && n_classes <= 10, "spec: n_classes must be in [1,10]");
  check(patch >= 1, "spec: patch must be >= 1");
  check(image_h > 0 && image_w > 0, "spec: image dims must be positive");
  check(image_h % patch == 0 && image_w % patch == 0,
        "spec: image dims must be divisible by patch");
  // worst-case noise displacement sqrt(dim)*noise must stay under half the
  // minimal palette distance sqrt(8)/15/2, so quantization never flips
  check(noise >= 0.0f && noise <= 0.025f, "spec: noise must be in [0, 0.025]");
}

Codebook make_codebook(int patch) {
  check(patch >= 1, "codebook: patch must be >= 1");
  Codebook cb;
  cb.patch = patch;
  cb.vocab = 64;
  cb.entries.resize(static_cast<size_t>(cb.vocab) * cb.dim());
  for (int v = 0; v < cb.vocab; ++v) {
    int q = v / 4, s = v % 4;
    float r = static_cast<float>(s) / 3.0f;
    float g = static_cast<float>(q) / 15.0f;
    float* e = cb.entries.data() + static_cast<size_t>(v) * cb.dim();
    for (int p = 0; p < patch * patch; ++p) {
      e[3 * p + 0] = r;
      e[3 * p + 1] = g;
      e[3 * p + 2] = g;
    }
  }
  return cb;
}

const char* class_name(int class_id) {
  static const char* names[10] = {"ramp_lr", "ramp_tb", "ramp_rl",  "diag",   "hstripes",
                                  "vstripes", "checker", "solid",   "border", "halfsplit"};
  check(class_id >= 0 && class_id < 10, "class id out of range");
  return names[class_id];
}

namespace {

int col_level(int j, int w) { return j * 8 / w; }

TokenGrid grid_from(const SyntheticSpec& spec, int class_id, Rng& rng) {
  const int H = spec.grid_h(), W = spec.grid_w();
  TokenGrid g;
  g.h = H;
  g.w = W;
  g.tokens.resize(static_cast<size_t>(H) * W);
  int p = 0;
  switch (class_id) {
    case 3: p = static_cast<int>(rng.uniform_int(8)); break;
    case 4:
    case 5:
    case 6: p = static_cast<int>(rng.uniform_int(2)); break;
    default: break;
  }
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      int v = 0;
      switch (class_id) {
        case 0: v = 8 * col_level(j, W); break;                    // ramp_lr
        case 1: v = 8 * col_level(i, H) + 1; break;                // ramp_tb
        case 2: v = 8 * col_level(W - 1 - j, W) + 2; break;        // ramp_rl
        case 3: v = 8 * ((i + j + p) % 8) + 3; break;              // diag
        case 4: v = 8 * ((i + p) % 2 == 0 ? 1 : 6); break;         // hstripes
        case 5: v = 8 * ((j + p) % 2 == 0 ? 2 : 5) + 1; break;     // vstripes
        case 6: v = 8 * ((i + j + p) % 2 == 0 ? 0 : 7) + 2; break; // checker
        case 7: v = 27; break;                                     // solid
        case 8:                                                    // border
          v = (i == 0 || i == H - 1 || j == 0 || j == W - 1) ? 56 : 33;
          break;
        case 9: v = j < W / 2 ? 42 : 19; break;                    // halfsplit
        default: throw Error("class id out of range");
      }
      // per-cell fine-luminance bit: visible color jitter, but histograms
      // stay concentrated so classes separate robustly
      v += 4 * static_cast<int>(rng.uniform_int(2));
      g.tokens[static_cast<size_t>(i) * W + j] = static_cast<uint16_t>(v);
    }
  }
  return g;
}

Rng sample_rng(const SyntheticSpec& spec, int class_id, uint64_t seed, int index) {
  spec.validate();
  check(class_id >= 0 && class_id < spec.n_classes, "class id out of range");
  check(index >= 0, "sample index must be >= 0");
  return Rng(seed, mix64(static_cast<uint64_t>(class_id) + 1, static_cast<uint64_t>(index) + 1));
}

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

}  // namespace

TokenGrid generate_grid(const SyntheticSpec& spec, int class_id, uint64_t seed, int index) {
  Rng rng = sample_rng(spec, class_id, seed, index);
  return grid_from(spec, class_id, rng);
}

Image generate_sample(const SyntheticSpec& spec, int class_id, uint64_t seed, int index) {
  Rng rng = sample_rng(spec, class_id, seed, index);
  TokenGrid g = grid_from(spec, class_id, rng);
  Image img = decode(g, make_codebook(spec.patch));
  if (spec.noise > 0.0f) {
    for (float& v : img.pix)
      v = clamp01(v + spec.noise * static_cast<float>(2.0 * rng.uniform() - 1.0));
  }
  return img;
}

TokenGrid encode(const Image& img, const Codebook& cb) {
  check(img.h > 0 && img.w > 0, "encode: empty image");
  check(img.h % cb.patch == 0 && img.w % cb.patch == 0,
        "encode: image dims must be divisible by patch");
  check(img.pix.size() == static_cast<size_t>(img.h) * img.w * 3, "encode: pixel buffer size");
  const int H = img.h / cb.patch, W = img.w / cb.patch, P = cb.patch;
  TokenGrid g;
  g.h = H;
  g.w = W;
  g.tokens.resize(static_cast<size_t>(H) * W);
  std::vector<double> patch(cb.dim());
  for (int bi = 0; bi < H; ++bi) {
    for (int bj = 0; bj < W; ++bj) {
      int d = 0;
      for (int pi = 0; pi < P; ++pi) {
        const float* row = img.pix.data() + ((static_cast<size_t>(bi) * P + pi) * img.w + static_cast<size_t>(bj) * P) * 3;
        for (int pj = 0; pj < P * 3; ++pj) patch[d++] = row[pj];
      }
      int best = 0;
      double best_d = 1e300;
      for (int v = 0; v < cb.vocab; ++v) {
        const float* e = cb.entries.data() + static_cast<size_t>(v) * cb.dim();
        double acc = 0.0;
        for (int k = 0; k < cb.dim(); ++k) {
          double diff = patch[k] - static_cast<double>(e[k]);
          acc += diff * diff;
        }
        if (acc < best_d) {  // strict: ties keep the lowest index
          best_d = acc;
          best = v;
        }
      }
      g.tokens[static_cast<size_t>(bi) * W + bj] = static_cast<uint16_t>(best);
    }
  }
  return g;
}

Image decode(const TokenGrid& grid, const Codebook& cb) {
  check(grid.h > 0 && grid.w > 0, "decode: empty grid");
  check(grid.tokens.size() == static_cast<size_t>(grid.h) * grid.w, "decode: token buffer size");
  const int P = cb.patch;
  Image img;
  img.h = grid.h * P;
  img.w = grid.w * P;
  img.pix.resize(static_cast<size_t>(img.h) * img.w * 3);
  for (int bi = 0; bi < grid.h; ++bi) {
    for (int bj = 0; bj < grid.w; ++bj) {
      uint16_t v = grid.tokens[static_cast<size_t>(bi) * grid.w + bj];
      check(v < cb.vocab, "decode: token id out of vocab range");
      const float* e = cb.entries.data() + static_cast<size_t>(v) * cb.dim();
      for (int pi = 0; pi < P; ++pi) {
        float* row = img.pix.data() + ((static_cast<size_t>(bi) * P + pi) * img.w + static_cast<size_t>(bj) * P) * 3;
        for (int pj = 0; pj < P * 3; ++pj) row[pj] = e[pi * P * 3 + pj];
      }
    }
  }
  return img;
}

std::vector<uint16_t> flatten(const TokenGrid& grid) { return grid.tokens; }

TokenGrid unflatten(const std::vector<uint16_t>& tokens, int grid_h, int grid_w) {
  check(grid_h > 0 && grid_w > 0, "unflatten: grid dims must be positive");
  check(tokens.size() == static_cast<size_t>(grid_h) * grid_w, "unflatten: token count mismatch");
  TokenGrid g;
  g.h = grid_h;
  g.w = grid_w;
  g.tokens = tokens;
  return g;
}

Dataset build_dataset(const SyntheticSpec& spec, int n_per_class, uint64_t seed) {
  spec.validate();
  check(n_per_class >= 1, "dataset: n_per_class must be >= 1");
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.n_per_class = n_per_class;
  Codebook cb = make_codebook(spec.patch);
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      DatasetRecord rec;
      rec.class_id = static_cast<uint16_t>(c);
      rec.tokens = flatten(encode(generate_sample(spec, c, seed, i), cb));
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

namespace {

using serial::put_u16;
using serial::put_u32;
using serial::put_u64;

constexpr uint32_t kDatasetVersion = 1;

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  ds.spec.validate();
  std::string out;
  out += "AIMD";
  put_u32(out, kDatasetVersion);

  char noise_buf[64];
  std::snprintf(noise_buf, sizeof(noise_buf), "%.9g", static_cast<double>(ds.spec.noise));
  std::string header;
  header += "classes=" + std::to_string(ds.spec.n_classes) + "\n";
  header += "image_h=" + std::to_string(ds.spec.image_h) + "\n";
  header += "image_w=" + std::to_string(ds.spec.image_w) + "\n";
  header += "patch=" + std::to_string(ds.spec.patch) + "\n";
  header += "noise=" + std::string(noise_buf) + "\n";
  header += "n_per_class=" + std::to_string(ds.n_per_class) + "\n";
  put_u32(out, static_cast<uint32_t>(header.size()));
  out += header;
  put_u64(out, ds.seed);

  put_u32(out, static_cast<uint32_t>(ds.records.size()));
  const size_t L = static_cast<size_t>(ds.spec.seq_len());
  for (const DatasetRecord& rec : ds.records) {
    check(rec.tokens.size() == L, "dataset: record length != spec seq_len");
    put_u16(out, rec.class_id);
    for (uint16_t t : rec.tokens) put_u16(out, t);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(f), "dataset: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  check(static_cast<bool>(f), "dataset: write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "dataset: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  serial::ByteReader r(buf, "dataset");

  check(r.bytes(4) == "AIMD", "dataset: bad magic (not an AIMD file)");
  check(r.u32() == kDatasetVersion, "dataset: unsupported version");

  Dataset ds;
  std::string header = r.bytes(r.u32());
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, "dataset: malformed header line '" + line + "'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "classes") ds.spec.n_classes = std::stoi(val);
      else if (key == "image_h") ds.spec.image_h = std::stoi(val);
      else if (key == "image_w") ds.spec.image_w = std::stoi(val);
      else if (key == "patch") ds.spec.patch = std::stoi(val);
      else if (key == "noise") ds.spec.noise = std::stof(val);
      else if (key == "n_per_class") ds.n_per_class = std::stoi(val);
      else throw Error("dataset: unknown header key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw Error("dataset: bad value for header key '" + key + "'");
    }
  }
  ds.seed = r.u64();
  ds.spec.validate();

  const uint32_t n = r.u32();
  const size_t L = static_cast<size_t>(ds.spec.seq_len());
  ds.records.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    DatasetRecord& rec = ds.records[i];
    rec.class_id = r.u16();
    check(rec.class_id < ds.spec.n_classes, "dataset: record class id out of range");
    rec.tokens.resize(L);
    for (size_t t = 0; t < L; ++t) {
      rec.tokens[t] = r.u16();
      check(rec.tokens[t] < ds.spec.vocab(), "dataset: token id out of vocab range");
    }
  }
  check(r.pos == buf.size(), "dataset: trailing bytes after records");
  return ds;
}

void write_ppm(const std::string& path, const Image& img) {
  check(img.h > 0 && img.w > 0, "ppm: empty image");
  check(img.pix.size() == static_cast<size_t>(img.h) * img.w * 3, "ppm: pixel buffer size");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(f), "ppm: cannot open '" + path + "' for writing");
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::string bytes;
  bytes.reserve(img.pix.size());
  for (float v : img.pix)
    bytes.push_back(static_cast<char>(static_cast<int>(std::lround(clamp01(v) * 255.0f))));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(static_cast<bool>(f), "ppm: write to '" + path + "' failed");
}

}  // namespace aim
