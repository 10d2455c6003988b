#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace htd {

// Degrees of freedom of Student-t noise. A missing value (std::nullopt)
// is the Gaussian limit nu = infinity; it is never encoded as a big number.
//
// Per-dimension dof means each coordinate gets its own independent 1-d
// Student-t draw, so the joint is a product of 1-d t's rather than a
// multivariate t.
class DofSpec {
 public:
  static DofSpec gaussian();
  static DofSpec scalar(double nu);
  static DofSpec per_dimension(std::vector<std::optional<double>> nus);
  // "inf", "4", "20,4", "inf,4"
  static DofSpec parse(const std::string& text);

  DofSpec() = default;  // Gaussian

  bool is_gaussian() const;  // every coordinate infinite
  bool is_per_dimension() const { return per_dim_; }
  // Scalar dof; nullopt for infinity. Throws UnsupportedError if per-dimension.
  std::optional<double> scalar_value() const;
  // Dof of coordinate i (ignores i for scalar specs).
  std::optional<double> at(std::size_t i) const;
  // Number of entries for a per-dimension DofSpec, 0 otherwise.
  std::size_t size() const { return per_dim_ ? values_.size() : 0; }
  // Throws ParameterError unless the dof fits dimension d.
  void check_dim(std::size_t d) const;
  // Throws ParameterError unless every finite entry exceeds `bound`.
  void require_greater(double bound, const char* what) const;

  std::string to_string() const;
  bool operator==(const DofSpec& o) const = default;

 private:
  bool per_dim_ = false;
  std::vector<std::optional<double>> values_ = {std::nullopt};
};

}  // namespace htd
