#include "mehmm/dataset.hpp"

#include "mehmm/error.hpp"
#include "mehmm/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace mehmm {

ObservationPanel::ObservationPanel(int n_subjects, int n_days, int n_levels, std::vector<int> levels)
    : n_subjects_(n_subjects), n_days_(n_days), n_levels_(n_levels), levels_(std::move(levels)) {
  if (n_subjects < 0 || n_days < 0 || n_levels < 1) {
    throw InputError("observation panel: invalid dimensions");
  }
  if (levels_.size() != static_cast<std::size_t>(n_subjects) * static_cast<std::size_t>(n_days)) {
    throw InputError("observation panel: grid size does not match N x T");
  }
  missing_.resize(levels_.size());
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    const int v = levels_[k];
    if (v == kMissing) {
      missing_[k] = 1;
    } else if (v < 0 || v >= n_levels) {
      throw InputError("observation panel: level " + std::to_string(v + 1) + " outside 1.." +
                       std::to_string(n_levels));
    }
  }
}

std::span<const int> ObservationPanel::row(int subject) const {
  return std::span<const int>(levels_).subspan(index(subject, 0), static_cast<std::size_t>(n_days_));
}

std::size_t ObservationPanel::missing_count() const {
  return static_cast<std::size_t>(std::count(missing_.begin(), missing_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> ObservationPanel::level_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_levels_), 0);
  for (int v : levels_) {
    if (v != kMissing) ++counts[static_cast<std::size_t>(v)];
  }
  return counts;
}

int ObservationPanel::observed_count(int subject) const {
  const auto r = row(subject);
  return static_cast<int>(std::count_if(r.begin(), r.end(), [](int v) { return v != kMissing; }));
}

ObservationPanel ObservationPanel::with_mask(std::span<const std::uint8_t> mask) const {
  if (mask.size() != levels_.size()) throw InputError("mask dimensions do not match panel");
  std::vector<int> levels = levels_;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (mask[k]) levels[k] = kMissing;
  }
  return ObservationPanel(n_subjects_, n_days_, n_levels_, std::move(levels));
}

namespace {

bool is_missing_token(std::string_view cell, std::string_view token) {
  return cell.empty() || text::iequals(cell, token);
}

}  // namespace

ObservationPanel load_observations(const std::filesystem::path& path, std::string_view missing_token,
                                   int n_levels) {
  auto in = text::open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> levels;
  int n_days = -1;
  int n_subjects = 0;
  bool drop_first_column = false;
  bool first_row = true;
  char delim = ',';

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
    if (first_row) delim = text::detect_delimiter(line);
    auto cells = text::split(line, delim);

    if (first_row) {
      first_row = false;
      const bool any_integer = std::any_of(cells.begin(), cells.end(), [](const std::string& c) {
        return text::parse_int(c).has_value();
      });
      const bool all_missing = std::all_of(cells.begin(), cells.end(), [&](const std::string& c) {
        return is_missing_token(c, missing_token);
      });
      if (!any_integer && !all_missing) {
        // Header row. An empty leading header cell marks a row-label column.
        drop_first_column = cells.front().empty();
        n_days = static_cast<int>(cells.size()) - (drop_first_column ? 1 : 0);
        continue;
      }
    }
    if (drop_first_column) cells.erase(cells.begin());

    if (n_days < 0) n_days = static_cast<int>(cells.size());
    if (static_cast<int>(cells.size()) != n_days) {
      throw InputError(text::where(path, line_no,
                                   "ragged row: expected " + std::to_string(n_days) + " cells, got " +
                                       std::to_string(cells.size())));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (is_missing_token(cells[c], missing_token)) {
        levels.push_back(kMissing);
        continue;
      }
      const auto v = text::parse_int(cells[c]);
      if (!v || *v < 1 || *v > n_levels) {
        throw InputError(text::where(path, line_no,
                                     "column " + std::to_string(c + 1) + ": code '" + cells[c] +
                                         "' is not in 1.." + std::to_string(n_levels)));
      }
      levels.push_back(static_cast<int>(*v) - 1);
    }
    ++n_subjects;
  }
  if (n_subjects == 0) throw InputError(path.string() + ": no observation rows");
  return ObservationPanel(n_subjects, n_days, n_levels, std::move(levels));
}

void write_observations(const std::filesystem::path& path, const ObservationPanel& panel,
                        std::string_view missing_token) {
  auto out = text::open_output(path);
  out << "# mehmm-schema 1 observations\n";
  for (int t = 0; t < panel.n_days(); ++t) out << (t > 0 ? ",day" : "day") << t + 1;
  out << '\n';
  for (int i = 0; i < panel.n_subjects(); ++i) {
    for (int t = 0; t < panel.n_days(); ++t) {
      if (t > 0) out << ',';
      if (panel.is_missing(i, t)) {
        out << missing_token;
      } else {
        out << panel.level(i, t) + 1;
      }
    }
    out << '\n';
  }
}

int encode_drinks(int raw_count, Sex sex) {
  if (raw_count < 0) throw InputError("encode_drinks: negative drink count");
  const int heavy_threshold = sex == Sex::female ? 4 : 5;
  if (raw_count == 0) return 1;
  if (raw_count >= heavy_threshold) return 3;
  return 2;
}

double prior_drinking_index(double d_drink, double d_heavy) {
  if (!(d_heavy >= 0.0 && d_heavy <= d_drink && d_drink <= 1.0)) {
    throw InputError("prior_drinking_index: requires 0 <= d_heavy <= d_drink <= 1");
  }
  const double d_moderate = d_drink - d_heavy;
  return d_moderate + 2.0 * d_heavy;
}

StandardizedVector standardize(std::span<const double> raw, std::string name) {
  if (raw.size() < 2) throw InputError("standardize: need at least two values for " + name);
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : raw) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw InputError("standardize: degenerate (constant) covariate " + name);

  StandardizedVector out;
  out.record.name = std::move(name);
  out.record.mean = mean;
  out.record.sd = sd;
  out.record.scale = 2.0 * sd;
  const std::set<double> distinct(raw.begin(), raw.end());
  out.record.binary = distinct.size() == 2;
  out.record.raw_low = *distinct.begin();
  out.record.raw_high = *distinct.rbegin();
  out.values.reserve(raw.size());
  for (double v : raw) out.values.push_back(out.record.apply(v));
  return out;
}

namespace {

double parse_sex(const std::string& cell, const std::filesystem::path& path, std::size_t line_no) {
  const std::string s = text::lower(cell);
  if (s == "m" || s == "male") return 0.0;
  if (s == "f" || s == "female") return 1.0;
  const auto v = text::parse_double(cell);
  if (v && (*v == 0.0 || *v == 1.0)) return *v;
  throw InputError(text::where(path, line_no, "sex must be 0/1 or male/female, got '" + cell + "'"));
}

}  // namespace

RawCovariates load_covariates(const std::filesystem::path& path) {
  auto in = text::open_input(path);
  std::string line;
  std::size_t line_no = 0;
  char delim = ',';
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
    delim = text::detect_delimiter(line);
    header = text::split(line, delim);
  }
  if (header.empty()) throw InputError(path.string() + ": empty covariate file");

  auto find = [&](std::string_view name) -> int {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (text::iequals(header[c], name)) return static_cast<int>(c);
    }
    return -1;
  };
  const int c_sex = find("sex");
  const int c_treat = find("treatment");
  const int c_drink = find("d_drink");
  const int c_heavy = find("d_heavy");
  const int c_prior = find("prior_drinking");
  if (c_sex < 0 || c_treat < 0) {
    throw InputError(text::where(path, line_no, "header must name columns sex and treatment"));
  }
  const bool have_pair = c_drink >= 0 && c_heavy >= 0;
  if (!have_pair && c_prior < 0) {
    throw InputError(text::where(path, line_no, "header must name d_drink and d_heavy (or prior_drinking)"));
  }

  RawCovariates raw;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
    auto cells = text::split(line, delim);
    // Row-label column from R-style writers: header one cell shorter.
    if (cells.size() == header.size() + 1) cells.erase(cells.begin());
    if (cells.size() != header.size()) {
      throw InputError(text::where(path, line_no, "ragged row: expected " + std::to_string(header.size()) +
                                                      " cells, got " + std::to_string(cells.size())));
    }
    auto number = [&](int c, std::string_view what) {
      const auto v = text::parse_double(cells[static_cast<std::size_t>(c)]);
      if (!v) throw InputError(text::where(path, line_no, std::string(what) + " is not a number"));
      return *v;
    };
    raw.sex.push_back(parse_sex(cells[static_cast<std::size_t>(c_sex)], path, line_no));
    const double treat = number(c_treat, "treatment");
    if (treat != 0.0 && treat != 1.0) throw InputError(text::where(path, line_no, "treatment must be 0 or 1"));
    raw.treatment.push_back(treat);
    if (have_pair) {
      const double d_drink = number(c_drink, "d_drink");
      const double d_heavy = number(c_heavy, "d_heavy");
      try {
        raw.prior_drinking.push_back(prior_drinking_index(d_drink, d_heavy));
      } catch (const InputError& e) {
        throw InputError(text::where(path, line_no, e.what()));
      }
      raw.d_drink.push_back(d_drink);
      raw.d_heavy.push_back(d_heavy);
    } else {
      const double z = number(c_prior, "prior_drinking");
      if (z < 0.0 || z > 2.0) throw InputError(text::where(path, line_no, "prior_drinking outside [0,2]"));
      raw.prior_drinking.push_back(z);
    }
  }
  if (raw.treatment.empty()) throw InputError(path.string() + ": no covariate rows");
  return raw;
}

void write_covariates(const std::filesystem::path& path, const RawCovariates& covariates) {
  auto out = text::open_output(path);
  const bool pair = !covariates.d_drink.empty();
  out << "# mehmm-schema 1 covariates\n";
  out << "sex,treatment," << (pair ? "d_drink,d_heavy" : "prior_drinking") << '\n';
  for (int i = 0; i < covariates.n_subjects(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << text::format_double(covariates.sex[k]) << ',' << text::format_double(covariates.treatment[k]) << ',';
    if (pair) {
      out << text::format_double(covariates.d_drink[k]) << ',' << text::format_double(covariates.d_heavy[k]);
    } else {
      out << text::format_double(covariates.prior_drinking[k]);
    }
    out << '\n';
  }
}

DesignMatrix::DesignMatrix(int n_subjects, int n_days, std::vector<Column> columns)
    : n_subjects_(n_subjects), n_days_(n_days), columns_(std::move(columns)) {
  for (const auto& col : columns_) {
    const auto expected = static_cast<std::size_t>(col.per_day ? n_days : n_subjects);
    if (col.values.size() != expected) {
      throw InputError("design column " + col.record.name + " has wrong length");
    }
  }
}

DesignMatrix DesignMatrix::from_raw(const RawCovariates& raw, int n_days) {
  const int n = raw.n_subjects();
  if (raw.sex.size() != raw.treatment.size() || raw.prior_drinking.size() != raw.treatment.size()) {
    throw InputError("covariate columns have unequal lengths");
  }
  if (n_days < 2) throw InputError("design needs at least two days");
  std::vector<double> days(static_cast<std::size_t>(n_days));
  std::iota(days.begin(), days.end(), 1.0);

  std::vector<Column> columns;
  auto add = [&](std::span<const double> values, std::string_view name, bool per_day) {
    auto s = standardize(values, std::string(name));
    columns.push_back(Column{std::move(s.record), per_day, std::move(s.values)});
  };
  add(raw.treatment, kTreatment, false);
  add(raw.sex, kSex, false);
  add(raw.prior_drinking, kPriorDrinking, false);
  add(days, kTime, true);
  return DesignMatrix(n, n_days, std::move(columns));
}

DesignMatrix DesignMatrix::empty(int n_subjects, int n_days) { return DesignMatrix(n_subjects, n_days, {}); }

double DesignMatrix::value(int subject, int day, int covariate) const {
  const auto& col = columns_[static_cast<std::size_t>(covariate)];
  return col.values[static_cast<std::size_t>(col.per_day ? day : subject)];
}

void DesignMatrix::fill(int subject, int day, std::span<double> out) const {
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    const auto& col = columns_[k];
    out[k] = col.values[static_cast<std::size_t>(col.per_day ? day : subject)];
  }
}

std::vector<double> DesignMatrix::vector(int subject, int day) const {
  if (subject < 0 || subject >= n_subjects_ || day < 0 || day >= n_days_) {
    throw InputError("design_vector: index (" + std::to_string(subject) + ", " + std::to_string(day) +
                     ") out of bounds");
  }
  std::vector<double> x(columns_.size());
  fill(subject, day, x);
  return x;
}

int DesignMatrix::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    if (text::iequals(columns_[k].record.name, name)) return static_cast<int>(k);
  }
  throw InputError("unknown covariate '" + std::string(name) + "'");
}

DesignMatrix DesignMatrix::subset_subjects(int n_subjects) const {
  if (n_subjects > n_subjects_) throw InputError("subset larger than design");
  std::vector<Column> cols = columns_;
  for (auto& c : cols) {
    if (!c.per_day) c.values.resize(static_cast<std::size_t>(n_subjects));
  }
  return DesignMatrix(n_subjects, n_days_, std::move(cols));
}

}  // namespace mehmm
