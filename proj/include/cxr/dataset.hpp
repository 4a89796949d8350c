#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cxr/image.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class Split { Train, Test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

inline const std::vector<std::string> kChestXrayClasses = {"COVID-19", "Normal", "Pneumonia"};

struct ManifestRecord {
  std::string path;  // relative to the dataset root, '/'-separated
  std::size_t label = 0;
  Split split = Split::Train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct RejectedFile {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> classes;
  std::vector<ManifestRecord> records;  // sorted by split, class, path
  std::vector<RejectedFile> rejected;

  // Records per class for one split.
  std::vector<std::size_t> counts(Split split) const;
  std::size_t size(Split split) const;
};

// Walks root/{train,test}/<class>/*.{jpg,jpeg,png}. With an empty class list the
// classes are the sorted union of class directories. Undecodable files land in
// `rejected`. Throws DataError for a missing root or no decodable image, and
// ConfigError for a class directory outside a given class list.
DatasetManifest scan_dataset(const std::filesystem::path& root,
                             const std::vector<std::string>& classes = {});

// path,label,split with a header row.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(const std::filesystem::path& csv, const std::filesystem::path& root,
                                  const std::vector<std::string>& classes);

// w_c = total / (K * count_c). Throws std::invalid_argument naming a class with count 0.
std::vector<double> compute_class_weights(std::span<const std::size_t> counts,
                                          const std::vector<std::string>& class_names = {});

// Decoded images held in memory.
struct ImageSet {
  std::vector<Tensor<float>> images;  // each [3,S,S] in [0,1]
  std::vector<std::size_t> labels;
  std::vector<std::string> classes;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> counts() const;
};

ImageSet load_split(const DatasetManifest& manifest, Split split,
                    std::size_t image_size = kDefaultImageSize);

// Seeded permutation of [0,count) cut into batches; the last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  Tensor<float> images;  // [N,3,S,S]
  Tensor<float> labels;  // [N,K] one-hot in class-list order
  std::vector<std::size_t> indices;
};

Batch assemble_batch(const ImageSet& set, std::span<const std::size_t> indices);

std::vector<Batch> batches(const DatasetManifest& manifest, Split split, std::size_t batch_size,
                           std::uint64_t seed, std::uint64_t epoch,
                           std::size_t image_size = kDefaultImageSize);

}  // namespace cxr
