#include "prunix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "prunix/errors.hpp"
#include "prunix/rng.hpp"

namespace prunix {

DataFormat parse_data_format(const std::string& name) {
  if (name == "csv") return DataFormat::csv;
  if (name == "idx") return DataFormat::idx;
  throw ConfigError("unknown dataset format: " + name);
}

Tensor Dataset::image(std::size_t i) const {
  Tensor t({channels, height, width});
  const std::size_t len = image_len();
  std::copy(pixels.begin() + i * len, pixels.begin() + (i + 1) * len,
            t.data.begin());
  return t;
}

namespace {

Dataset load_csv(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  Dataset ds;
  ds.num_classes = num_classes;
  std::string line;
  std::size_t row = 0;
  std::size_t pixel_count = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("malformed row " + std::to_string(row) + " in " + path);
      }
    }
    if (values.size() < 2)
      throw DataError("malformed row " + std::to_string(row) + " in " + path);
    const double label_val = values[0];
    if (label_val != std::floor(label_val) || label_val < 0 ||
        label_val >= num_classes)
      throw DataError("label out of range at row " + std::to_string(row) +
                      " in " + path);
    if (pixel_count == 0) {
      pixel_count = values.size() - 1;
      const auto side = static_cast<std::size_t>(
          std::llround(std::sqrt(static_cast<double>(pixel_count))));
      if (side * side != pixel_count)
        throw DataError("dataset rows must hold square single-channel images");
      ds.height = ds.width = side;
    } else if (values.size() - 1 != pixel_count) {
      throw DataError("inconsistent row length at row " + std::to_string(row) +
                      " in " + path);
    }
    ds.labels.push_back(static_cast<int>(label_val));
    for (std::size_t i = 1; i < values.size(); ++i)
      ds.pixels.push_back(static_cast<float>(values[i] / 255.0));
  }
  if (ds.labels.empty()) throw DataError("empty dataset: " + path);
  return ds;
}

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("truncated idx file: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

Dataset load_idx(const std::string& prefix, int num_classes) {
  const std::string img_path = prefix + "-images.idx";
  const std::string lbl_path = prefix + "-labels.idx";
  std::ifstream img(img_path, std::ios::binary);
  if (!img) throw DataError("cannot open dataset: " + img_path);
  std::ifstream lbl(lbl_path, std::ios::binary);
  if (!lbl) throw DataError("cannot open dataset: " + lbl_path);

  if (read_be32(img, img_path) != 0x00000803u)
    throw DataError("bad idx image magic: " + img_path);
  const std::uint32_t n = read_be32(img, img_path);
  const std::uint32_t rows = read_be32(img, img_path);
  const std::uint32_t cols = read_be32(img, img_path);
  if (read_be32(lbl, lbl_path) != 0x00000801u)
    throw DataError("bad idx label magic: " + lbl_path);
  if (read_be32(lbl, lbl_path) != n)
    throw DataError("idx image/label count mismatch: " + prefix);
  if (n == 0) throw DataError("empty dataset: " + prefix);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.height = rows;
  ds.width = cols;
  ds.pixels.resize(std::size_t(n) * rows * cols);
  ds.labels.resize(n);
  std::vector<unsigned char> buf(std::size_t(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size())))
      throw DataError("truncated idx file: " + img_path);
    for (std::size_t p = 0; p < buf.size(); ++p)
      ds.pixels[std::size_t(i) * buf.size() + p] = buf[p] / 255.0f;
    char c;
    if (!lbl.read(&c, 1)) throw DataError("truncated idx file: " + lbl_path);
    const int label = static_cast<unsigned char>(c);
    if (label >= num_classes)
      throw DataError("label out of range in " + lbl_path);
    ds.labels[i] = label;
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& path, DataFormat format,
                     int num_classes) {
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  return format == DataFormat::csv ? load_csv(path, num_classes)
                                   : load_idx(path, num_classes);
}

Split split_dataset(std::size_t n, double train_frac, double val_frac,
                    double test_frac, std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be >= 0 and sum to 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "dataset-split"));
  rng.shuffle(order);

  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(n)));
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(val_frac * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

namespace {

// 8x8 glyphs; '#' marks foreground.
const char* const kGlyphs[10][8] = {
    {"........", "..###...", ".#...#..", ".#...#..", ".#...#..", ".#...#..",
     "..###...", "........"},
    {"........", "...#....", "..##....", "...#....", "...#....", "...#....",
     "..###...", "........"},
    {"........", "..###...", ".#...#..", "....#...", "...#....", "..#.....",
     ".#####..", "........"},
    {"........", ".####...", ".....#..", "..###...", ".....#..", ".....#..",
     ".####...", "........"},
    {"........", ".#..#...", ".#..#...", ".#..#...", ".#####..", "....#...",
     "....#...", "........"},
    {"........", ".#####..", ".#......", ".####...", ".....#..", ".....#..",
     ".####...", "........"},
    {"........", "..###...", ".#......", ".####...", ".#...#..", ".#...#..",
     "..###...", "........"},
    {"........", ".#####..", ".....#..", "....#...", "...#....", "..#.....",
     "..#.....", "........"},
    {"........", "..###...", ".#...#..", "..###...", ".#...#..", ".#...#..",
     "..###...", "........"},
    {"........", "..###...", ".#...#..", ".#...#..", "..####..", ".....#..",
     "..###...", "........"},
};

}  // namespace

void generate_digits_corpus(const std::string& csv_path, std::size_t per_class,
                            std::uint64_t seed) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write corpus: " + csv_path);
  Rng rng(derive_seed(seed, "digits-corpus"));

  // Interleave classes so any prefix of the file stays roughly balanced.
  for (std::size_t s = 0; s < per_class; ++s) {
    for (int cls = 0; cls < 10; ++cls) {
      const int dy = static_cast<int>(rng.uniform_int(3)) - 1;
      const int dx = static_cast<int>(rng.uniform_int(3)) - 1;
      const double intensity = rng.uniform(0.75, 1.0);
      out << cls;
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const int sy = y - dy, sx = x - dx;
          double v = 0.0;
          if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8 &&
              kGlyphs[cls][sy][sx] == '#')
            v = intensity;
          v += rng.normal(0.0, 0.08);
          v = std::clamp(v, 0.0, 1.0);
          out << ',' << static_cast<int>(std::lround(v * 255.0));
        }
      }
      out << '\n';
    }
  }
}

}  // namespace prunix
