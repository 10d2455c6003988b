#include "htd/dof.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "htd/errors.hpp"

namespace htd {
namespace {

std::optional<double> parse_one(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  if (s == "inf" || s == "infinity" || s == "Inf" || s == "INF") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParameterError("cannot parse degrees of freedom '" + s + "'");
  }
  if (used != s.size()) throw ParameterError("cannot parse degrees of freedom '" + s + "'");
  if (std::isinf(v)) return std::nullopt;
  return v;
}

void check_entry(const std::optional<double>& v) {
  if (v && !(*v > 0.0 && std::isfinite(*v)))
    throw ParameterError("degrees of freedom must be positive, got " + std::to_string(*v));
}

}  // namespace

DofSpec DofSpec::gaussian() { return DofSpec(); }

DofSpec DofSpec::scalar(double nu) {
  DofSpec s;
  s.values_ = {nu};
  if (std::isinf(nu) && nu > 0) s.values_ = {std::nullopt};
  check_entry(s.values_[0]);
  return s;
}

DofSpec DofSpec::per_dimension(std::vector<std::optional<double>> nus) {
  if (nus.empty()) throw ParameterError("per-dimension dof needs at least one entry");
  for (const auto& v : nus) check_entry(v);
  DofSpec s;
  s.per_dim_ = true;
  s.values_ = std::move(nus);
  return s;
}

DofSpec DofSpec::parse(const std::string& text) {
  std::vector<std::optional<double>> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(parse_one(item));
  if (vals.empty()) throw ParameterError("empty degrees-of-freedom list");
  if (vals.size() == 1) {
    DofSpec s;
    s.values_ = vals;
    check_entry(vals[0]);
    return s;
  }
  return per_dimension(std::move(vals));
}

bool DofSpec::is_gaussian() const {
  for (const auto& v : values_)
    if (v) return false;
  return true;
}

std::optional<double> DofSpec::scalar_value() const {
  if (per_dim_) throw UnsupportedError("per-dimension dof has no single value");
  return values_[0];
}

std::optional<double> DofSpec::at(std::size_t i) const {
  if (!per_dim_) return values_[0];
  if (i >= values_.size()) throw ParameterError("dof index out of range");
  return values_[i];
}

void DofSpec::check_dim(std::size_t d) const {
  if (per_dim_ && values_.size() != d)
    throw ParameterError("per-dimension dof has " + std::to_string(values_.size()) +
                         " entries for dimension " + std::to_string(d));
}

void DofSpec::require_greater(double bound, const char* what) const {
  for (const auto& v : values_)
    if (v && !(*v > bound)) {
      std::ostringstream os;
      os << what << " requires nu > " << bound << ", got " << *v;
      throw ParameterError(os.str());
    }
}

std::string DofSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (i) os << ',';
    if (values_[i])
      os << *values_[i];
    else
      os << "inf";
  }
  return os.str();
}

}  // namespace htd
