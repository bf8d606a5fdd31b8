#include "stam/dataio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stam {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

bool is_blank(const std::string& s) {
    for (char c : s)
        if (c != ' ' && c != '\t' && c != '\r') return false;
    return true;
}

double parse_cell(const std::string& s, const std::string& path, size_t line_no) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data() + b, s.data() + e, v);
    if (ec != std::errc{} || ptr != s.data() + e)
        throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                    s + "'");
    return v;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    CsvTable t;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            for (auto& h : split_line(line)) t.header.push_back(h);
            continue;
        }
        if (line.empty() && in.peek() == EOF) break;  // trailing newline
        auto cells = split_line(line);
        if (Index(cells.size()) != t.n_cols())
            throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": ragged row (" +
                                        std::to_string(cells.size()) + " cells, header has " +
                                        std::to_string(t.header.size()) + ")");
        std::vector<std::optional<double>> row;
        row.reserve(cells.size());
        for (const auto& c : cells)
            row.push_back(is_blank(c) ? std::nullopt
                                      : std::optional<double>(parse_cell(c, path, line_no)));
        t.rows.push_back(std::move(row));
    }
    if (line_no == 0) throw std::invalid_argument(path + ": empty file");
    return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Tensor& values_tn, const Tensor* mask_tn) {
    const Index t_len = values_tn.dim(0), n = values_tn.dim(1);
    if (Index(header.size()) != n) shape_error("csv header width");
    if (mask_tn && (mask_tn->dim(0) != t_len || mask_tn->dim(1) != n))
        shape_error("csv mask shape");
    std::string out;
    out.reserve(size_t(values_tn.size()) * 8);
    for (Index j = 0; j < n; ++j) {
        if (j) out += ',';
        out += header[size_t(j)];
    }
    out += '\n';
    for (Index i = 0; i < t_len; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (j) out += ',';
            if (!mask_tn || mask_tn->at(i, j) != 0.0) out += format_double(values_tn.at(i, j));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

Tensor read_matrix_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        auto cells = split_line(line);
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_cell(c, path, line_no));
        if (!rows.empty() && rows[0].size() != row.size())
            throw std::invalid_argument(path + ": ragged matrix");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument(path + ": empty matrix");
    Tensor m(Shape{Index(rows.size()), Index(rows[0].size())});
    for (Index i = 0; i < m.dim(0); ++i)
        for (Index j = 0; j < m.dim(1); ++j) m.at(i, j) = rows[size_t(i)][size_t(j)];
    return m;
}

void write_matrix_csv(const std::string& path, const Tensor& m) {
    if (m.rank() != 2) shape_error("write_matrix_csv wants rank 2");
    std::string out;
    out.reserve(size_t(m.size()) * 8);
    for (Index i = 0; i < m.dim(0); ++i) {
        for (Index j = 0; j < m.dim(1); ++j) {
            if (j) out += ',';
            out += format_double(m.at(i, j));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

// Howard Hinnant's civil date algorithms.
int64_t days_from_civil(int64_t y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = unsigned(y - era * 400);
    const unsigned doy = unsigned((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + int64_t(doe) - 719468;
}

void civil_from_days(int64_t z, int64_t& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = unsigned(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = int64_t(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = int(doy - (153 * mp + 2) / 5 + 1);
    m = int(mp < 10 ? mp + 3 : mp - 9);
    y += m <= 2;
}

int64_t parse_iso8601(const std::string& s) {
    int year = 0, mon = 0, day = 0, hh = 0, mm = 0, ss = 0;
    char sep = 0;
    const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &year, &mon, &day, &sep, &hh, &mm, &ss);
    if (got < 3 || mon < 1 || mon > 12 || day < 1 || day > 31)
        throw std::invalid_argument("bad iso8601 timestamp: " + s);
    if (got > 3 && sep != 'T' && sep != ' ')
        throw std::invalid_argument("bad iso8601 timestamp: " + s);
    return days_from_civil(year, mon, day) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601(int64_t epoch_seconds) {
    int64_t days = epoch_seconds / 86400;
    int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int64_t y;
    int m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02d-%02dT%02d:%02d:%02d", (long long)y, m, d,
                  int(rem / 3600), int((rem / 60) % 60), int(rem % 60));
    return buf;
}

int weekday_mon1(int64_t epoch_seconds) {
    int64_t days = epoch_seconds / 86400;
    if (epoch_seconds % 86400 < 0) days -= 1;
    // 1970-01-01 was a Thursday.
    return int(((days % 7) + 7 + 3) % 7) + 1;
}

int64_t seconds_of_day(int64_t epoch_seconds) {
    int64_t rem = epoch_seconds % 86400;
    return rem < 0 ? rem + 86400 : rem;
}

}  // namespace stam
