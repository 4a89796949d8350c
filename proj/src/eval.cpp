#include "cxr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cxr/errors.hpp"

namespace cxr {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names) : names_(std::move(class_names)) {
  if (names_.empty()) throw std::invalid_argument("confusion matrix needs at least one class name");
  counts_.assign(names_.size() * names_.size(), 0);
}

std::uint64_t ConfusionMatrix::at(std::size_t actual, std::size_t predicted) const {
  return counts_.at(actual * names_.size() + predicted);
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::uint64_t count) {
  const std::size_t k = names_.size();
  if (actual >= k || predicted >= k) {
    throw std::invalid_argument("class index out of range: actual " + std::to_string(actual) +
                                ", predicted " + std::to_string(predicted) + ", K = " + std::to_string(k));
  }
  counts_[actual * k + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < names_.size(); ++c) t += at(c, c);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < names_.size(); ++p) s += at(actual, p);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t a = 0; a < names_.size(); ++a) s += at(a, predicted);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predicted, std::span<const std::size_t> actual,
                                 const std::vector<std::string>& class_names) {
  if (predicted.size() != actual.size()) {
    throw std::invalid_argument("confusion_matrix: " + std::to_string(predicted.size()) +
                                " predictions for " + std::to_string(actual.size()) + " labels");
  }
  ConfusionMatrix cm(class_names);
  for (std::size_t i = 0; i < predicted.size(); ++i) cm.add(actual[i], predicted[i]);
  return cm;
}

std::vector<std::size_t> argmax_rows(const Tensor<float>& probs) {
  if (probs.rank() != 2) throw std::invalid_argument("argmax_rows: expected [N,K], got " + to_string(probs.shape()));
  const std::size_t k = probs.dim(1);
  std::vector<std::size_t> out(probs.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* row = probs.raw() + i * k;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

std::optional<double> accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) return std::nullopt;
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

std::optional<double> precision(const ConfusionMatrix& cm, std::size_t c) {
  const auto denom = cm.column_sum(c);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
}

std::optional<double> recall(const ConfusionMatrix& cm, std::size_t c) {
  const auto denom = cm.row_sum(c);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  auto mean_of = [&](auto rate) -> std::optional<double> {
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
      const auto v = rate(cm, c);
      if (!v) return std::nullopt;
      sum += *v;
    }
    return sum / static_cast<double>(cm.classes());
  };
  return {mean_of(precision), mean_of(recall)};
}

double normal_critical_value(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("confidence must lie in (0,1)");
  }
  // erf(z / sqrt 2) is the two-sided coverage; it is monotone, so bisect.
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erf(mid / std::sqrt(2.0)) < confidence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ConfidenceInterval class_probability_ci(std::span<const double> probabilities, double confidence) {
  const std::size_t n = probabilities.size();
  if (n < 2) throw std::invalid_argument("confidence interval needs at least two samples");
  // Rounding in the mean would otherwise give identical values a sliver of width.
  if (std::adjacent_find(probabilities.begin(), probabilities.end(), std::not_equal_to<>()) == probabilities.end()) {
    const double v = probabilities.front();
    return {v, std::clamp(v, 0.0, 1.0), std::clamp(v, 0.0, 1.0)};
  }
  const double mean = std::accumulate(probabilities.begin(), probabilities.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double p : probabilities) ss += (p - mean) * (p - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double half = normal_critical_value(confidence) * sd / std::sqrt(static_cast<double>(n));
  return {mean, std::clamp(mean - half, 0.0, 1.0), std::clamp(mean + half, 0.0, 1.0)};
}

MetricsReport report_from_matrix(const ConfusionMatrix& cm) {
  MetricsReport report;
  report.samples = cm.total();
  report.accuracy = accuracy(cm);
  report.macro = macro_metrics(cm);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    ClassSummary s;
    s.name = cm.class_names()[c];
    s.support = cm.row_sum(c);
    s.precision = precision(cm, c);
    s.recall = recall(cm, c);
    report.classes.push_back(std::move(s));
  }
  return report;
}

Evaluation summarize(const Tensor<float>& probs, std::span<const std::size_t> labels,
                     const std::vector<std::string>& class_names) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size() || probs.dim(1) != class_names.size()) {
    throw std::invalid_argument("summarize: probabilities " + to_string(probs.shape()) + " do not match " +
                                std::to_string(labels.size()) + " labels over " +
                                std::to_string(class_names.size()) + " classes");
  }
  const auto predicted = argmax_rows(probs);
  Evaluation result{{}, confusion_matrix(predicted, labels, class_names)};
  result.report = report_from_matrix(result.matrix);
  std::vector<std::vector<double>> true_probs(class_names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    true_probs[labels[i]].push_back(probs.at(i, labels[i]));
  }
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    if (true_probs[c].size() >= 2) result.report.classes[c].probability = class_probability_ci(true_probs[c]);
  }
  return result;
}

Evaluation evaluate(const ModelGraph<float>& model, const ImageSet& data) {
  if (data.size() == 0) throw DataError("cannot evaluate an empty split");
  if (data.classes != model.class_names()) {
    throw ConfigError("dataset classes do not match the model's classes");
  }
  constexpr std::size_t kChunk = 64;
  const std::size_t k = model.class_count();
  Tensor<float> probs(Shape{data.size(), k});
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    indices.resize(std::min(kChunk, data.size() - start));
    std::iota(indices.begin(), indices.end(), start);
    const Tensor<float> rows = model.predict(assemble_batch(data, indices).images);
    std::copy(rows.raw(), rows.raw() + rows.size(), probs.raw() + start * k);
  }
  return summarize(probs, data.labels, model.class_names());
}

Evaluation evaluate(const ModelGraph<float>& model, const DatasetManifest& manifest, Split split) {
  const std::size_t size = model.input_shape().size() == 3 ? model.input_shape()[1] : kDefaultImageSize;
  return evaluate(model, load_split(manifest, split, size));
}

std::string format_rate(const std::optional<double>& rate) {
  if (!rate) return "undefined";
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << *rate;
  return os.str();
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void render_report(const Evaluation& evaluation, const std::filesystem::path& confusion_csv,
                   const std::filesystem::path& metrics_csv, std::ostream& out) {
  const auto& cm = evaluation.matrix;
  const auto& names = cm.class_names();
  const auto& report = evaluation.report;
  {
    auto csv = open_for_write(confusion_csv);
    csv << "actual";
    for (const auto& n : names) csv << ',' << n;
    csv << '\n';
    for (std::size_t a = 0; a < names.size(); ++a) {
      csv << names[a];
      for (std::size_t p = 0; p < names.size(); ++p) csv << ',' << cm.at(a, p);
      csv << '\n';
    }
    if (!csv) throw DataError("failed writing " + confusion_csv.string());
  }
  {
    auto csv = open_for_write(metrics_csv);
    csv << "metric,value,class\n";
    csv << "samples," << report.samples << ",\n";
    csv << "accuracy," << format_rate(report.accuracy) << ",\n";
    csv << "macro_precision," << format_rate(report.macro.precision) << ",\n";
    csv << "macro_recall," << format_rate(report.macro.recall) << ",\n";
    for (const auto& c : report.classes) {
      csv << "support," << c.support << ',' << c.name << '\n';
      csv << "precision," << format_rate(c.precision) << ',' << c.name << '\n';
      csv << "recall," << format_rate(c.recall) << ',' << c.name << '\n';
      const auto ci = c.probability;
      csv << "probability_mean," << format_rate(ci ? std::optional(ci->mean) : std::nullopt) << ',' << c.name << '\n';
      csv << "probability_ci_lower," << format_rate(ci ? std::optional(ci->lower) : std::nullopt) << ',' << c.name << '\n';
      csv << "probability_ci_upper," << format_rate(ci ? std::optional(ci->upper) : std::nullopt) << ',' << c.name << '\n';
    }
    if (!csv) throw DataError("failed writing " + metrics_csv.string());
  }

  std::size_t width = 10;
  for (const auto& n : names) width = std::max(width, n.size() + 2);
  out << "Confusion matrix (rows = actual, columns = predicted)\n";
  out << std::left << std::setw(static_cast<int>(width)) << "";
  for (const auto& n : names) out << std::right << std::setw(static_cast<int>(width)) << n;
  out << std::right << std::setw(static_cast<int>(width)) << "Sum" << '\n';
  for (std::size_t a = 0; a < names.size(); ++a) {
    out << std::left << std::setw(static_cast<int>(width)) << names[a];
    for (std::size_t p = 0; p < names.size(); ++p) out << std::right << std::setw(static_cast<int>(width)) << cm.at(a, p);
    out << std::right << std::setw(static_cast<int>(width)) << cm.row_sum(a) << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "Sum";
  for (std::size_t p = 0; p < names.size(); ++p) out << std::right << std::setw(static_cast<int>(width)) << cm.column_sum(p);
  out << std::right << std::setw(static_cast<int>(width)) << cm.total() << "\n\n";

  out << std::left << std::setw(static_cast<int>(width)) << "class" << std::right << std::setw(10) << "support"
      << std::setw(12) << "precision" << std::setw(12) << "recall" << std::setw(12) << "p_mean" << std::setw(12)
      << "ci_lower" << std::setw(12) << "ci_upper" << '\n';
  for (const auto& c : report.classes) {
    const auto ci = c.probability;
    out << std::left << std::setw(static_cast<int>(width)) << c.name << std::right << std::setw(10) << c.support
        << std::setw(12) << format_rate(c.precision) << std::setw(12) << format_rate(c.recall) << std::setw(12)
        << format_rate(ci ? std::optional(ci->mean) : std::nullopt) << std::setw(12)
        << format_rate(ci ? std::optional(ci->lower) : std::nullopt) << std::setw(12)
        << format_rate(ci ? std::optional(ci->upper) : std::nullopt) << '\n';
  }
  out << "\naccuracy        " << format_rate(report.accuracy) << "\nmacro precision " << format_rate(report.macro.precision)
      << "\nmacro recall    " << format_rate(report.macro.recall) << '\n';
}

ConfusionMatrix read_confusion_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  auto header = split_fields(line);
  if (header.size() < 2) throw DataError(path.string() + ": header has no class names");
  std::vector<std::string> names(header.begin() + 1, header.end());
  ConfusionMatrix cm(names);
  for (std::size_t a = 0; a < names.size(); ++a) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": missing row for " + names[a]);
    const auto fields = split_fields(line);
    if (fields.size() != names.size() + 1 || fields[0] != names[a]) {
      throw DataError(path.string() + ": malformed row for " + names[a]);
    }
    for (std::size_t p = 0; p < names.size(); ++p) cm.add(a, p, std::stoull(fields[p + 1]));
  }
  return cm;
}

}  // namespace cxr
