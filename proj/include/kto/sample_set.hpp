#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

#include "kto/error.hpp"

namespace kto {

using Sample = std::variant<Eigen::VectorXd, std::string>;

/// Ordered snapshots. Vector data is stored column-per-sample (d x n).
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(Eigen::MatrixXd columns) : data_(std::move(columns)) {}
  explicit SampleSet(std::vector<std::string> words) : data_(std::move(words)) {}

  bool is_text() const { return std::holds_alternative<std::vector<std::string>>(data_); }
  bool is_vector() const { return !is_text(); }

  Eigen::Index size() const {
    return is_text() ? static_cast<Eigen::Index>(text().size()) : matrix().cols();
  }
  bool empty() const { return size() == 0; }
  /// Domain dimension; 0 for text.
  Eigen::Index dim() const { return is_text() ? 0 : matrix().rows(); }

  const Eigen::MatrixXd& matrix() const {
    if (is_text()) throw InvalidInput("expected vector samples, got text");
    return std::get<Eigen::MatrixXd>(data_);
  }
  const std::vector<std::string>& text() const {
    if (!is_text()) throw InvalidInput("expected text samples, got vectors");
    return std::get<std::vector<std::string>>(data_);
  }

  Sample at(Eigen::Index i) const {
    if (i < 0 || i >= size()) throw InvalidInput("sample index out of range");
    if (is_text()) return text()[static_cast<std::size_t>(i)];
    return Eigen::VectorXd(matrix().col(i));
  }

  /// Samples [first, first + count) taking every stride-th element.
  SampleSet slice(Eigen::Index first, Eigen::Index count, Eigen::Index stride = 1) const {
    if (is_text()) {
      std::vector<std::string> out;
      out.reserve(static_cast<std::size_t>(count));
      for (Eigen::Index i = 0; i < count; ++i) out.push_back(text()[static_cast<std::size_t>(first + i * stride)]);
      return SampleSet(std::move(out));
    }
    Eigen::MatrixXd out(dim(), count);
    for (Eigen::Index i = 0; i < count; ++i) out.col(i) = matrix().col(first + i * stride);
    return SampleSet(std::move(out));
  }

  bool same_kind(const SampleSet& other) const {
    return is_text() == other.is_text() && dim() == other.dim();
  }

 private:
  std::variant<Eigen::MatrixXd, std::vector<std::string>> data_;
};

}  // namespace kto
