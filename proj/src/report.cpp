#include "corepulse/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "corepulse/error.hpp"

namespace corepulse {

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

const std::vector<std::pair<std::string, std::string>>& report_covariates() {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"core_frd_adopt_lag", "Core_frd_adopt_{t-1}"},
      {"peri_frd_adopt_lag", "Peri_frd_adopt_{t-1}"},
      {"core_frd", "Core_frd"},
      {"peri_frd", "Peri_frd"},
      {"gender_male", "Gender_male"},
      {"gender_female", "Gender_female"},
      {"prepaid", "Prepaid"},
      {"phone_2.5G", "Phone_2.5G"},
      {"phone_3G", "Phone_3G"},
      {"phone_3.5G", "Phone_3.5G"},
      {"phone_other", "Phone_other"},
      {"mobile_internet", "Mobile_internet"},
      {"phone_age", "Phone_age"},
      {"tenure_t", "Tenure_t"}};
  return rows;
}

namespace {

std::string number(double v, int digits) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.000" || s == "-0.0000") s.erase(0, 1);
  return s;
}

bool has_prefix(const FitResult& fit, const std::string& prefix) {
  return std::any_of(fit.names.begin(), fit.names.end(),
                     [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
}

}  // namespace

ReportTable report_table(std::span<const ReportCell> cells) {
  if (cells.empty()) throw Error("report_table: no results");
  ReportTable t;
  for (const auto& c : cells) t.columns.push_back(c.label);

  for (const auto& [name, label] : report_covariates()) {
    ReportRow row{label, {}, {}};
    for (const auto& c : cells) {
      auto j = c.fit.index(name);
      if (!j) {
        row.estimate.emplace_back();
        row.error.emplace_back();
        continue;
      }
      const double se = c.fit.se(*j);
      row.estimate.push_back(number(c.fit.beta(*j), 3) + significance_stars(c.fit.p_value(*j)));
      row.error.push_back("(" + number(se, se < 0.001 ? 4 : 3) + ")");
    }
    t.rows.push_back(std::move(row));
  }

  auto control = [&](const std::string& label, bool Formula::*flag, const std::string& prefix) {
    ReportRow row{label, {}, {}};
    for (const auto& c : cells) {
      row.estimate.push_back(c.formula.*flag && has_prefix(c.fit, prefix) ? "Yes" : "No");
      row.error.emplace_back();
    }
    t.rows.push_back(std::move(row));
  };
  control("Control for regions", &Formula::region_effects, "region_");
  control("Control for month", &Formula::month_effects, "month_");
  control("Control for community", &Formula::community_effects, "community_");

  ReportRow r2{"Pseudo R2", {}, {}}, obs{"Observations", {}, {}};
  for (const auto& c : cells) {
    r2.estimate.push_back(number(c.fit.pseudo_r2, 4));
    r2.error.emplace_back();
    obs.estimate.push_back(std::to_string(c.fit.n_obs));
    obs.error.emplace_back();
  }
  t.rows.push_back(std::move(r2));
  t.rows.push_back(std::move(obs));
  return t;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

void write_report_csv(std::ostream& out, const ReportTable& table) {
  out << "variable";
  for (const auto& c : table.columns) out << ',' << quote(c) << ',' << quote(c + " se");
  out << '\n';
  for (const auto& row : table.rows) {
    out << quote(row.label);
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
      std::string se = row.error[k];
      if (se.size() >= 2) se = se.substr(1, se.size() - 2);
      out << ',' << row.estimate[k] << ',' << se;
    }
    out << '\n';
  }
}

void write_report_text(std::ostream& out, const ReportTable& table) {
  std::size_t label_w = 0;
  for (const auto& row : table.rows) label_w = std::max(label_w, row.label.size());
  std::vector<std::size_t> est_w(table.columns.size(), 0), se_w(table.columns.size(), 0);
  for (std::size_t k = 0; k < table.columns.size(); ++k) {
    for (const auto& row : table.rows) {
      est_w[k] = std::max(est_w[k], row.estimate[k].size());
      se_w[k] = std::max(se_w[k], row.error[k].size());
    }
    const std::size_t need = table.columns[k].size();
    if (est_w[k] + 1 + se_w[k] < need) est_w[k] = need - 1 - se_w[k];
  }
  auto pad = [](const std::string& s, std::size_t w, bool right) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return right ? fill + s : s + fill;
  };
  out << pad("", label_w, false);
  for (std::size_t k = 0; k < table.columns.size(); ++k) {
    out << "  " << pad(table.columns[k], est_w[k] + 1 + se_w[k], false);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    std::string line = pad(row.label, label_w, false);
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
      line += "  " + pad(row.estimate[k], est_w[k], false) + " " + pad(row.error[k], se_w[k], false);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  out << "***p<0.001, **p<0.01, *p<0.05 (two-tailed)\n";
}

}  // namespace corepulse
