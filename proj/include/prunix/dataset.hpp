#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunix/tensor.hpp"

namespace prunix {

enum class DataFormat { csv, idx };

DataFormat parse_data_format(const std::string& name);

// Labelled image set, pixels normalized to [0,1], channels-first.
struct Dataset {
  std::size_t channels = 1, height = 0, width = 0;
  int num_classes = 0;
  std::vector<float> pixels;  // size() * channels * height * width
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_len() const { return channels * height * width; }
  Tensor image(std::size_t i) const;
  int label(std::size_t i) const { return labels[i]; }
};

// CSV rows "label,p0,p1,..." with pixel values in [0,255]; idx expects the
// ubyte pair <path>-images.idx / <path>-labels.idx. Throws DataError on
// malformed rows or labels outside [0, num_classes).
Dataset load_dataset(const std::string& path, DataFormat format,
                     int num_classes);

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Deterministic shuffled split; counts are round(frac*n) for train and val,
// the remainder is test. Fractions must be non-negative and sum to 1.
Split split_dataset(std::size_t n, double train_frac, double val_frac,
                    double test_frac, std::uint64_t seed);

// Bundled corpus: 10 digit-like 8x8 glyph classes with per-sample jitter
// (shift, intensity, pixel noise). Writes CSV rows as produced by the same
// layout load_dataset(csv) reads.
void generate_digits_corpus(const std::string& csv_path, std::size_t per_class,
                            std::uint64_t seed);

}  // namespace prunix
