#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dcn/tensor.hpp"

namespace dcn {

struct LabeledDataset {
  Tensor4 images;
  std::vector<int> labels;
  std::size_t class_count = 0;
  /// Per-channel means that were subtracted (empty if not centered).
  std::vector<double> channel_means;

  std::size_t size() const { return labels.size(); }
  /// The first `count` samples.
  LabeledDataset head(std::size_t count) const;
  void validate() const;
};

/// Per-channel mean over all pixels of all samples.
std::vector<double> channel_means(const Tensor4& images);

/// Subtracts the training split's per-channel means from both splits.
void center_with_train_means(LabeledDataset& train, LabeledDataset& test);

/// Reads one CIFAR-10 binary batch (records of 1 label byte + 3x1024
/// channel-planar pixel bytes). Pixels are scaled to [0, 1], not centered.
LabeledDataset read_cifar10_batch(const std::filesystem::path& file);

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// data_batch_1..5.bin and test_batch.bin from `dir`, centered with the
/// training means. `train_limit`/`test_limit` of 0 keep every record.
DatasetSplit load_cifar10(const std::filesystem::path& dir, std::size_t train_limit = 0, std::size_t test_limit = 0);

/// Grayscale renders of parametric shapes, class = shape type (up to 8),
/// randomized position/scale/rotation/contrast plus pixel noise. Labels are
/// assigned round-robin. Pixels in [0, 1], not centered.
LabeledDataset synth_shapes(std::uint64_t seed, std::size_t count, std::size_t classes, std::size_t width = 128,
                            std::size_t height = 96);

/// One PGM per image (`img_00000.pgm`, ...) and `labels.csv`
/// (`file,label`).
void export_pgm_dataset(const LabeledDataset& data, const std::filesystem::path& dir);

}  // namespace dcn
