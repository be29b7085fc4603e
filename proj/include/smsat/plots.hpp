#pragma once

#include "smsat/text.hpp"

#include <string>

namespace smsat::plots {

/// One line chart per metric column of a training history (x = "epoch";
/// "seconds" is skipped), stacked into one document.
std::string history_svg(const text::CsvTable& t, const std::string& title);

/// Scatter of an (id, label, x, y) table with one group and centroid per label.
std::string scatter_table_svg(const text::CsvTable& t, const std::string& title);

}  // namespace smsat::plots
