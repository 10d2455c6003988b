#pragma once

#include <string>
#include <vector>

#include "htd/metrics.hpp"

namespace htd::svg {

// Two step-lines (sim, data) over shared histogram edges, density-normalized,
// log-scaled counts so the tails stay visible.
void write_histogram(const std::string& path, const Histogram& h, const std::string& title);

// Simple polyline of y against x.
void write_series(const std::string& path, const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& title);

}  // namespace htd::svg
