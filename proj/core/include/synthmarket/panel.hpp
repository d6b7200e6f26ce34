#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace synthmarket {

using Date = std::chrono::year_month_day;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws InputError.
Date parse_date(std::string_view text);
std::string format_date(Date date);

/// `count` consecutive Monday-Friday dates starting at the first business day >= start.
std::vector<Date> business_days(Date start, std::size_t count);

/// First business day strictly after `date`.
Date next_business_day(Date date);

/// Dated n x d panel of simple daily returns.
///
/// Invariants, enforced on construction: n >= 2, d >= 1, dates strictly
/// increasing, all values finite, one ticker per column.
class ReturnsPanel {
public:
    ReturnsPanel(std::vector<Date> dates, std::vector<std::string> tickers, Eigen::MatrixXd values);

    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<std::string>& tickers() const { return tickers_; }
    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }

    /// Rows [begin, begin + count). Requires count >= 2.
    ReturnsPanel slice_rows(Eigen::Index begin, Eigen::Index count) const;

    /// Columns reordered/selected by index.
    ReturnsPanel select_columns(const std::vector<Eigen::Index>& columns) const;

    friend bool operator==(const ReturnsPanel&, const ReturnsPanel&) = default;

private:
    std::vector<Date> dates_;
    std::vector<std::string> tickers_;
    Eigen::MatrixXd values_;
};

/// Column-standardized view of a panel. Standard deviations use the
/// population convention (divisor n), consistent with Sigma = X'X / n.
struct StandardizedPanel {
    ReturnsPanel base;
    Eigen::VectorXd mu_hat;
    Eigen::VectorXd sigma_hat;
    Eigen::MatrixXd values;
};

struct CsvOptions {
    char delimiter = ',';
};

ReturnsPanel read_csv(std::istream& in, const CsvOptions& options = {});
ReturnsPanel load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes "date,<tickers...>" then one row per date, numbers in shortest
/// round-trip form. Reading the output back reproduces the panel bit for bit.
void write_csv(const ReturnsPanel& panel, std::ostream& out);
void save_csv(const ReturnsPanel& panel, const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

StandardizedPanel standardize(const ReturnsPanel& panel);

/// x * sigma + mu, column-wise.
Eigen::MatrixXd destandardize(const Eigen::MatrixXd& standardized, const Eigen::VectorXd& mu_hat,
                              const Eigen::VectorXd& sigma_hat);

/// Rows dated <= boundary go to the first part. Both parts must keep >= 2 rows.
std::pair<ReturnsPanel, ReturnsPanel> split(const ReturnsPanel& panel, Date boundary);

/// Population moments of a series.
double mean(const Eigen::Ref<const Eigen::VectorXd>& x);
double population_sd(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace synthmarket
