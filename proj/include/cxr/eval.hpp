#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/model.hpp"

namespace cxr {

// K x K counts, rows = actual class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  std::size_t classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }

  std::uint64_t at(std::size_t actual, std::size_t predicted) const;
  void add(std::size_t actual, std::size_t predicted, std::uint64_t count = 1);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t actual) const;
  std::uint64_t column_sum(std::size_t predicted) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

// Throws std::invalid_argument on length mismatch or an index >= K.
ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted,
                                 std::span<const std::size_t> actual,
                                 const std::vector<std::string>& class_names);

// Row-wise argmax; ties resolve to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor<float>& probs);

// Rates with a zero denominator are undefined (nullopt), never 0.
std::optional<double> accuracy(const ConfusionMatrix& cm);
std::optional<double> precision(const ConfusionMatrix& cm, std::size_t c);
std::optional<double> recall(const ConfusionMatrix& cm, std::size_t c);

struct MacroMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
};

// Unweighted mean over classes; undefined if any class value is undefined.
MacroMetrics macro_metrics(const ConfusionMatrix& cm);

struct ConfidenceInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Two-sided standard normal quantile for the given coverage, e.g. 0.95 -> 1.959964.
double normal_critical_value(double confidence);

// mean +- z * s / sqrt(n) with the n-1 sample deviation, clamped to [0,1].
// Throws std::invalid_argument for n < 2.
ConfidenceInterval class_probability_ci(std::span<const double> probabilities, double confidence = 0.95);

struct ClassSummary {
  std::string name;
  std::size_t support = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  // Mean predicted probability of the true class over samples of this class.
  std::optional<ConfidenceInterval> probability;
};

struct MetricsReport {
  std::size_t samples = 0;
  std::optional<double> accuracy;
  MacroMetrics macro;
  std::vector<ClassSummary> classes;
};

struct Evaluation {
  MetricsReport report;
  ConfusionMatrix matrix;
};

// Count-derived fields only (no probability intervals).
MetricsReport report_from_matrix(const ConfusionMatrix& cm);

// Builds the report from predicted probability rows and true labels.
Evaluation summarize(const Tensor<float>& probs, std::span<const std::size_t> labels,
                     const std::vector<std::string>& class_names);

Evaluation evaluate(const ModelGraph<float>& model, const ImageSet& data);
Evaluation evaluate(const ModelGraph<float>& model, const DatasetManifest& manifest, Split split);

// Writes confusion.csv and metrics.csv and prints an aligned table.
void render_report(const Evaluation& evaluation, const std::filesystem::path& confusion_csv,
                   const std::filesystem::path& metrics_csv, std::ostream& out);

ConfusionMatrix read_confusion_csv(const std::filesystem::path& path);

std::string format_rate(const std::optional<double>& rate);

}  // namespace cxr
