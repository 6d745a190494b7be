#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "corepulse/design.hpp"
#include "corepulse/econ.hpp"

namespace corepulse {

/// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, else "".
std::string significance_stars(double p);

struct ReportCell {
  std::string label;  // e.g. "Core Probit [1]"
  FitResult fit;
  Formula formula;
};

struct ReportRow {
  std::string label;
  std::vector<std::string> estimate;  // one per column; "" when absent
  std::vector<std::string> error;     // "(0.032)" or ""
};

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
};

/// Display label for each covariate row, in table order.
const std::vector<std::pair<std::string, std::string>>& report_covariates();

/// Coefficient rows for the covariates, three fixed-effect control rows,
/// pseudo R^2, and the observation count. A control reads "Yes" when the
/// formula asks for it and the fit kept at least one of its dummies. Throws
/// Error when `cells` is empty.
ReportTable report_table(std::span<const ReportCell> cells);

void write_report_csv(std::ostream& out, const ReportTable& table);
void write_report_text(std::ostream& out, const ReportTable& table);

}  // namespace corepulse
