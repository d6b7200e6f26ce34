#include "synthmarket/panel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "synthmarket/errors.hpp"

namespace synthmarket {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delimiter) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(delimiter, start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

std::string cell_position(std::size_t row, std::size_t col) {
    return "(" + std::to_string(row) + "," + std::to_string(col) + ")";
}

}  // namespace

Date parse_date(std::string_view text) {
    text = trim(text);
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return InputError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    auto parse = [&](std::string_view part, auto& out) {
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        if (ec != std::errc{} || p != part.data() + part.size()) throw bad();
    };
    parse(text.substr(0, 4), y);
    parse(text.substr(5, 2), m);
    parse(text.substr(8, 2), d);
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw bad();
    return date;
}

std::string format_date(Date date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

namespace {
bool is_business_day(std::chrono::sys_days day) {
    std::chrono::weekday wd{day};
    return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}
}  // namespace

Date next_business_day(Date date) {
    std::chrono::sys_days day{date};
    do {
        day += std::chrono::days{1};
    } while (!is_business_day(day));
    return Date{day};
}

std::vector<Date> business_days(Date start, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    std::chrono::sys_days day{start};
    while (!is_business_day(day)) day += std::chrono::days{1};
    while (out.size() < count) {
        out.emplace_back(day);
        do {
            day += std::chrono::days{1};
        } while (!is_business_day(day));
    }
    return out;
}

ReturnsPanel::ReturnsPanel(std::vector<Date> dates, std::vector<std::string> tickers, Eigen::MatrixXd values)
    : dates_(std::move(dates)), tickers_(std::move(tickers)), values_(std::move(values)) {
    if (values_.rows() < 2 || values_.cols() < 1) {
        throw InputError("empty panel: need at least 2 rows and 1 column, got " +
                         std::to_string(values_.rows()) + "x" + std::to_string(values_.cols()));
    }
    if (static_cast<Eigen::Index>(dates_.size()) != values_.rows()) {
        throw InputError("panel has " + std::to_string(values_.rows()) + " rows but " +
                         std::to_string(dates_.size()) + " dates");
    }
    if (static_cast<Eigen::Index>(tickers_.size()) != values_.cols()) {
        throw InputError("panel has " + std::to_string(values_.cols()) + " columns but " +
                         std::to_string(tickers_.size()) + " tickers");
    }
    for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (!(dates_[i - 1] < dates_[i])) {
            throw InputError("dates not increasing at row " + std::to_string(i + 1) + " (" +
                             format_date(dates_[i - 1]) + " then " + format_date(dates_[i]) + ")");
        }
    }
    for (Eigen::Index j = 0; j < values_.cols(); ++j) {
        for (Eigen::Index i = 0; i < values_.rows(); ++i) {
            if (!std::isfinite(values_(i, j))) {
                throw InputError("missing value at " + cell_position(i + 1, j + 1));
            }
        }
    }
}

ReturnsPanel ReturnsPanel::slice_rows(Eigen::Index begin, Eigen::Index count) const {
    if (begin < 0 || count < 2 || begin + count > rows()) {
        throw InputError("row slice out of range");
    }
    std::vector<Date> d(dates_.begin() + begin, dates_.begin() + begin + count);
    return ReturnsPanel(std::move(d), tickers_, values_.middleRows(begin, count));
}

ReturnsPanel ReturnsPanel::select_columns(const std::vector<Eigen::Index>& columns) const {
    Eigen::MatrixXd v(rows(), static_cast<Eigen::Index>(columns.size()));
    std::vector<std::string> t;
    t.reserve(columns.size());
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (columns[k] < 0 || columns[k] >= cols()) throw InputError("column index out of range");
        v.col(static_cast<Eigen::Index>(k)) = values_.col(columns[k]);
        t.push_back(tickers_[static_cast<std::size_t>(columns[k])]);
    }
    return ReturnsPanel(dates_, std::move(t), std::move(v));
}

ReturnsPanel read_csv(std::istream& in, const CsvOptions& options) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty panel: no header row");
    auto header = split_line(line, options.delimiter);
    if (!header.empty() && header[0].size() >= 3 && header[0].substr(0, 3) == "\xEF\xBB\xBF") {
        header[0].remove_prefix(3);
    }
    if (header.size() < 2) throw InputError("header must be 'date,<ticker1>,...'");
    std::vector<std::string> tickers;
    for (std::size_t k = 1; k < header.size(); ++k) {
        if (header[k].empty()) throw InputError("empty ticker name in header column " + std::to_string(k + 1));
        tickers.emplace_back(header[k]);
    }
    const std::size_t d = tickers.size();

    std::vector<Date> dates;
    std::vector<double> cells;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        auto parts = split_line(line, options.delimiter);
        if (parts.size() != d + 1) {
            // A trailing empty cell is a missing value, not a ragged row.
            if (parts.size() < d + 1 && parts.size() >= 2) {
                throw InputError("missing value at " + cell_position(row, parts.size()) + ": ragged row with " +
                                 std::to_string(parts.size()) + " cells, expected " + std::to_string(d + 1));
            }
            throw InputError("ragged row " + std::to_string(row) + ": " + std::to_string(parts.size()) +
                             " cells, expected " + std::to_string(d + 1));
        }
        Date date = parse_date(parts[0]);
        if (!dates.empty() && !(dates.back() < date)) {
            throw InputError("dates not increasing at row " + std::to_string(row) + " (" +
                             format_date(dates.back()) + " then " + format_date(date) + ")");
        }
        dates.push_back(date);
        for (std::size_t k = 1; k <= d; ++k) {
            auto cell = parts[k];
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
                throw InputError("missing value at " + cell_position(row, k));
            }
            double value = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc{} || p != cell.data() + cell.size()) {
                throw InputError("non-numeric cell at " + cell_position(row, k) + ": '" + std::string(cell) + "'");
            }
            if (!std::isfinite(value)) throw InputError("missing value at " + cell_position(row, k));
            cells.push_back(value);
        }
    }
    if (dates.empty()) throw InputError("empty panel: no data rows");
    Eigen::MatrixXd values(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < dates.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i * d + j];
    return ReturnsPanel(std::move(dates), std::move(tickers), std::move(values));
}

ReturnsPanel load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open data file '" + path.string() + "'");
    return read_csv(in, options);
}

std::string format_double(double value) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, p);
}

void write_csv(const ReturnsPanel& panel, std::ostream& out) {
    out << "date";
    for (const auto& t : panel.tickers()) out << ',' << t;
    out << '\n';
    std::string line;
    for (Eigen::Index i = 0; i < panel.rows(); ++i) {
        line = format_date(panel.dates()[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < panel.cols(); ++j) {
            line += ',';
            line += format_double(panel.values()(i, j));
        }
        line += '\n';
        out << line;
    }
}

void save_csv(const ReturnsPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_csv(panel, out);
}

double mean(const Eigen::Ref<const Eigen::VectorXd>& x) { return x.mean(); }

double population_sd(const Eigen::Ref<const Eigen::VectorXd>& x) {
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().mean());
}

StandardizedPanel standardize(const ReturnsPanel& panel) {
    const Eigen::Index d = panel.cols();
    Eigen::VectorXd mu(d), sigma(d);
    Eigen::MatrixXd z(panel.rows(), d);
    for (Eigen::Index j = 0; j < d; ++j) {
        // Plain sequential sums: Eigen's vectorized reductions depend on the
        // column's memory alignment, which would tie results to column order.
        auto col = panel.values().col(j);
        const Eigen::Index n = col.size();
        double sum = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) sum += col(t);
        mu(j) = sum / static_cast<double>(n);
        double ss = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) ss += (col(t) - mu(j)) * (col(t) - mu(j));
        sigma(j) = std::sqrt(ss / static_cast<double>(n));
        if (!(sigma(j) > 0.0)) {
            throw InputError("zero-variance column '" + panel.tickers()[static_cast<std::size_t>(j)] + "'");
        }
        z.col(j) = (col.array() - mu(j)) / sigma(j);
    }
    return StandardizedPanel{panel, std::move(mu), std::move(sigma), std::move(z)};
}

Eigen::MatrixXd destandardize(const Eigen::MatrixXd& standardized, const Eigen::VectorXd& mu_hat,
                              const Eigen::VectorXd& sigma_hat) {
    if (standardized.cols() != mu_hat.size() || mu_hat.size() != sigma_hat.size()) {
        throw InputError("destandardize: dimension mismatch");
    }
    Eigen::MatrixXd out = standardized;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = out.col(j).array() * sigma_hat(j) + mu_hat(j);
    return out;
}

std::pair<ReturnsPanel, ReturnsPanel> split(const ReturnsPanel& panel, Date boundary) {
    const auto& dates = panel.dates();
    Eigen::Index first = 0;
    while (first < panel.rows() && !(boundary < dates[static_cast<std::size_t>(first)])) ++first;
    if (first < 2 || panel.rows() - first < 2) {
        throw InputError("split boundary " + format_date(boundary) + " leaves " + std::to_string(first) +
                         " training and " + std::to_string(panel.rows() - first) +
                         " test rows; each side needs at least 2");
    }
    return {panel.slice_rows(0, first), panel.slice_rows(first, panel.rows() - first)};
}

}  // namespace synthmarket
