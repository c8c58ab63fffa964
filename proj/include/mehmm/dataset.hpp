#pragma once

// Panel data ingestion and covariate construction.
//
// Ordinal codes are 1..M in files and 0..M-1 in memory. A missing cell holds
// kMissing in the level grid; the missingness mask is kept as a separate
// array and never changes after construction.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mehmm {

inline constexpr int kMissing = -1;

class ObservationPanel {
public:
  ObservationPanel() = default;

  /// `levels` is row-major N x T with values in [0, n_levels) or kMissing.
  ObservationPanel(int n_subjects, int n_days, int n_levels, std::vector<int> levels);

  int n_subjects() const { return n_subjects_; }
  int n_days() const { return n_days_; }
  int n_levels() const { return n_levels_; }

  bool is_missing(int subject, int day) const { return missing_[index(subject, day)] != 0; }
  /// Zero-based level, or kMissing.
  int level(int subject, int day) const { return levels_[index(subject, day)]; }
  std::span<const int> row(int subject) const;

  std::size_t missing_count() const;
  /// Observed-cell count per level.
  std::vector<std::size_t> level_counts() const;
  int observed_count(int subject) const;

  /// Row-major copy of the mask (1 = missing).
  const std::vector<std::uint8_t>& mask() const { return missing_; }

  /// Copy with every cell flagged in `mask` set to missing.
  ObservationPanel with_mask(std::span<const std::uint8_t> mask) const;

  bool operator==(const ObservationPanel&) const = default;

private:
  std::size_t index(int subject, int day) const {
    return static_cast<std::size_t>(subject) * static_cast<std::size_t>(n_days_) +
           static_cast<std::size_t>(day);
  }

  int n_subjects_ = 0;
  int n_days_ = 0;
  int n_levels_ = 0;
  std::vector<int> levels_;
  std::vector<std::uint8_t> missing_;
};

/// Reads a rectangular delimited file of codes 1..n_levels. Missing cells are
/// empty or equal to `missing_token` (case-insensitive). A first row without
/// any integer cells is treated as a header; if its first cell is empty the
/// first column of every row is taken to be a row label and dropped. Lines
/// starting with '#' are comments.
ObservationPanel load_observations(const std::filesystem::path& path,
                                   std::string_view missing_token = "NA",
                                   int n_levels = 3);

/// Schema comment line, "day1,...,dayT" header, then one row per subject.
void write_observations(const std::filesystem::path& path, const ObservationPanel& panel,
                        std::string_view missing_token = "NA");

enum class Sex { male, female };

/// Ordinal drinking level (1 = none, 2 = moderate, 3 = heavy) for a raw
/// standard-drink count. Heavy starts at 4 drinks for women and 5 for men.
int encode_drinks(int raw_count, Sex sex);

/// Previous-drinking index: moderate share plus twice the heavy share,
/// i.e. d_drink + d_heavy. Requires 0 <= d_heavy <= d_drink <= 1.
double prior_drinking_index(double d_drink, double d_heavy);

struct Standardization {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;     ///< population standard deviation of the raw values
  double scale = 2.0;  ///< 2 * sd; standardized = (raw - mean) / scale
  bool binary = false;
  double raw_low = 0.0;   ///< smallest raw value observed
  double raw_high = 0.0;  ///< largest raw value observed

  double apply(double raw) const { return (raw - mean) / scale; }
  double invert(double standardized) const { return standardized * scale + mean; }
};

struct StandardizedVector {
  std::vector<double> values;
  Standardization record;
};

/// Centers to mean 0 and scales to standard deviation 1/2 (population sd).
/// Throws InputError for a constant vector.
StandardizedVector standardize(std::span<const double> raw, std::string name = {});

struct RawCovariates {
  std::vector<double> treatment;  ///< 0 = control, 1 = active drug
  std::vector<double> sex;        ///< 0 = male, 1 = female
  std::vector<double> d_drink;    ///< empty when prior_drinking was read directly
  std::vector<double> d_heavy;
  std::vector<double> prior_drinking;

  int n_subjects() const { return static_cast<int>(treatment.size()); }
};

/// Reads x.csv. A header is required; columns are located by name
/// (sex, treatment, d_drink, d_heavy, or prior_drinking in place of the pair).
/// Sex may be numeric (1 = female) or male/female/m/f.
RawCovariates load_covariates(const std::filesystem::path& path);

void write_covariates(const std::filesystem::path& path, const RawCovariates& covariates);

/// Per-(subject, day) standardized design vectors. Each column is either
/// subject-level (one value per subject) or day-level (one value per day).
class DesignMatrix {
public:
  struct Column {
    Standardization record;
    bool per_day = false;
    std::vector<double> values;  ///< standardized; length N or T
  };

  DesignMatrix() = default;
  DesignMatrix(int n_subjects, int n_days, std::vector<Column> columns);

  /// Standardized (Treatment, Sex, PriorDrinking, Time) with Time = day 1..T.
  /// Subject-level covariates are standardized over subjects, Time over days.
  static DesignMatrix from_raw(const RawCovariates& raw, int n_days);

  /// Design with no covariates (p = 0).
  static DesignMatrix empty(int n_subjects, int n_days);

  int n_subjects() const { return n_subjects_; }
  int n_days() const { return n_days_; }
  int n_covariates() const { return static_cast<int>(columns_.size()); }

  double value(int subject, int day, int covariate) const;
  void fill(int subject, int day, std::span<double> out) const;
  /// design_vector: throws InputError for out-of-range indices.
  std::vector<double> vector(int subject, int day) const;

  /// Index of a covariate by name (case-insensitive); throws InputError.
  int index_of(std::string_view name) const;
  const Column& column(int covariate) const { return columns_.at(static_cast<std::size_t>(covariate)); }
  const std::vector<Column>& columns() const { return columns_; }

  /// Same design restricted to the first n_subjects subjects.
  DesignMatrix subset_subjects(int n_subjects) const;

private:
  int n_subjects_ = 0;
  int n_days_ = 0;
  std::vector<Column> columns_;
};

inline constexpr std::string_view kTreatment = "treatment";
inline constexpr std::string_view kSex = "sex";
inline constexpr std::string_view kPriorDrinking = "prior_drinking";
inline constexpr std::string_view kTime = "time";

}  // namespace mehmm
