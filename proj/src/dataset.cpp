#include "cxr/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cxr/errors.hpp"
#include "cxr/loss.hpp"
#include "cxr/parallel.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::vector<std::string> sorted_subdirectories(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + text + "' (expected train or test)");
}

std::vector<std::size_t> DatasetManifest::counts(Split split) const {
  std::vector<std::size_t> out(classes.size(), 0);
  for (const auto& r : records) {
    if (r.split == split) ++out.at(r.label);
  }
  return out;
}

std::size_t DatasetManifest::size(Split split) const {
  const auto c = counts(split);
  return std::accumulate(c.begin(), c.end(), std::size_t{0});
}

DatasetManifest scan_dataset(const fs::path& root, const std::vector<std::string>& classes) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " does not exist");
  DatasetManifest manifest;
  manifest.root = root;

  const Split splits[] = {Split::Train, Split::Test};
  std::set<std::string> found;
  for (Split s : splits) {
    for (auto& name : sorted_subdirectories(root / to_string(s))) found.insert(name);
  }
  if (classes.empty()) {
    manifest.classes.assign(found.begin(), found.end());
  } else {
    manifest.classes = classes;
    for (const auto& name : found) {
      if (std::find(classes.begin(), classes.end(), name) == classes.end()) {
        std::string listed;
        for (const auto& c : classes) listed += (listed.empty() ? "" : ", ") + c;
        throw ConfigError("class directory '" + name + "' under " + root.string() +
                          " is not in the class list [" + listed + "]");
      }
    }
  }

  struct Candidate {
    std::string relative;
    std::size_t label;
    Split split;
  };
  std::vector<Candidate> candidates;
  for (Split s : splits) {
    for (std::size_t label = 0; label < manifest.classes.size(); ++label) {
      const fs::path dir = root / to_string(s) / manifest.classes[label];
      if (!fs::is_directory(dir)) continue;
      std::vector<std::string> files;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) {
          files.push_back(fs::relative(entry.path(), root).generic_string());
        }
      }
      std::sort(files.begin(), files.end());
      for (auto& f : files) candidates.push_back({std::move(f), label, s});
    }
  }

  std::vector<std::string> failures(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    try {
      decode_image(root / candidates[i].relative);
    } catch (const DataError& e) {
      failures[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (failures[i].empty()) {
      manifest.records.push_back({candidates[i].relative, candidates[i].label, candidates[i].split});
    } else {
      manifest.rejected.push_back({candidates[i].relative, failures[i]});
    }
  }
  if (manifest.records.empty()) {
    throw DataError("no decodable images under " + root.string());
  }
  return manifest;
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "path,label,split\n";
  for (const auto& r : manifest.records) {
    out << csv_field(r.path) << ',' << csv_field(manifest.classes.at(r.label)) << ','
        << to_string(r.split) << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest_csv(const fs::path& csv, const fs::path& root,
                                  const std::vector<std::string>& classes) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot read manifest " + csv.string());
  DatasetManifest manifest;
  manifest.root = root;
  manifest.classes = classes;
  std::string line;
  if (!std::getline(in, line) || line != "path,label,split") {
    throw DataError("manifest " + csv.string() + " lacks the path,label,split header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw DataError("manifest " + csv.string() + " line " + std::to_string(line_no) +
                      ": expected 3 fields");
    }
    auto it = std::find(classes.begin(), classes.end(), fields[1]);
    if (it == classes.end()) {
      throw ConfigError("manifest " + csv.string() + " line " + std::to_string(line_no) +
                        ": label '" + fields[1] + "' is not in the class list");
    }
    manifest.records.push_back({fields[0], static_cast<std::size_t>(it - classes.begin()),
                                parse_split(fields[2])});
  }
  return manifest;
}

std::vector<double> compute_class_weights(std::span<const std::size_t> counts,
                                          const std::vector<std::string>& class_names) {
  if (counts.empty()) throw std::invalid_argument("class weights need at least one class");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  const double k = static_cast<double>(counts.size());
  std::vector<double> weights;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      const std::string name = c < class_names.size() ? class_names[c] : "#" + std::to_string(c);
      throw std::invalid_argument("class '" + name + "' has no samples; cannot compute its weight");
    }
    weights.push_back(total / (k * static_cast<double>(counts[c])));
  }
  return weights;
}

std::vector<std::size_t> ImageSet::counts() const {
  std::vector<std::size_t> out(classes.size(), 0);
  for (auto label : labels) ++out.at(label);
  return out;
}

ImageSet load_split(const DatasetManifest& manifest, Split split, std::size_t image_size) {
  std::vector<const ManifestRecord*> chosen;
  for (const auto& r : manifest.records) {
    if (r.split == split) chosen.push_back(&r);
  }
  if (chosen.empty()) throw DataError("split '" + to_string(split) + "' has no images");
  ImageSet set;
  set.classes = manifest.classes;
  set.images.resize(chosen.size());
  set.labels.resize(chosen.size());
  parallel_for(chosen.size(), [&](std::size_t i) {
    set.images[i] = load_and_resize(manifest.root / chosen[i]->path, image_size);
    set.labels[i] = chosen[i]->label;
  });
  return set;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch assemble_batch(const ImageSet& set, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("cannot assemble an empty batch");
  const Shape& sample = set.images.at(indices[0]).shape();
  Shape shape = sample;
  shape.insert(shape.begin(), indices.size());
  Batch batch;
  batch.images = Tensor<float>(shape);
  const std::size_t stride = element_count(sample);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& image = set.images.at(indices[i]);
    require_same_shape(image.shape(), sample, "assemble_batch");
    std::copy(image.raw(), image.raw() + stride, batch.images.raw() + i * stride);
    labels.push_back(set.labels.at(indices[i]));
  }
  batch.labels = one_hot<float>(labels, set.classes.size());
  batch.indices.assign(indices.begin(), indices.end());
  return batch;
}

std::vector<Batch> batches(const DatasetManifest& manifest, Split split, std::size_t batch_size,
                           std::uint64_t seed, std::uint64_t epoch, std::size_t image_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const ImageSet set = load_split(manifest, split, image_size);
  std::vector<Batch> out;
  for (const auto& indices : batch_order(set.size(), batch_size, seed, epoch)) {
    out.push_back(assemble_batch(set, indices));
  }
  return out;
}

}  // namespace cxr
