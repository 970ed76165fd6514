#include "apub/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

namespace apub {

namespace {

bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) {
        return false;
    }
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            return false;
        }
        value = value * 10 + (s[i] - '0');
    }
    out = value;
    return true;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const sys_time<milliseconds> tp{milliseconds{t.ms}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const auto tod = hh_mm_ss{tp - day};
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()), static_cast<int>(tod.subseconds().count()));
    return buf;
}

Timestamp parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    int y, mo, d, h, mi, sec;
    const bool ok = text.size() >= 20 && parse_fixed_int(text, 0, 4, y) && text[4] == '-' &&
                    parse_fixed_int(text, 5, 2, mo) && text[7] == '-' && parse_fixed_int(text, 8, 2, d) &&
                    (text[10] == 'T' || text[10] == 't') && parse_fixed_int(text, 11, 2, h) && text[13] == ':' &&
                    parse_fixed_int(text, 14, 2, mi) && text[16] == ':' && parse_fixed_int(text, 17, 2, sec);
    if (!ok) {
        throw Error(ErrorCode::parse, "invalid RFC 3339 timestamp: " + std::string(text));
    }
    std::size_t pos = 19;
    int millis = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 3) {
                millis = millis * 10 + (text[pos] - '0');
            }
            ++digits;
            ++pos;
        }
        if (digits == 0) {
            throw Error(ErrorCode::parse, "invalid RFC 3339 timestamp: " + std::string(text));
        }
        for (int i = digits; i < 3; ++i) {
            millis *= 10;
        }
    }
    if (pos + 1 != text.size() || (text[pos] != 'Z' && text[pos] != 'z')) {
        throw Error(ErrorCode::parse, "timestamp must be UTC with Z suffix: " + std::string(text));
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) {
        throw Error(ErrorCode::parse, "invalid RFC 3339 timestamp: " + std::string(text));
    }
    const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{millis};
    return Timestamp{duration_cast<milliseconds>(tp.time_since_epoch()).count()};
}

bool is_valid_date(std::string_view date) {
    using namespace std::chrono;
    int y, m, d;
    if (date.size() != 10 || date[4] != '-' || date[7] != '-' || !parse_fixed_int(date, 0, 4, y) ||
        !parse_fixed_int(date, 5, 2, m) || !parse_fixed_int(date, 8, 2, d)) {
        return false;
    }
    return year_month_day{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}}.ok();
}

Clock system_clock() {
    return [] {
        using namespace std::chrono;
        return Timestamp{duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()};
    };
}

Clock stepping_clock(Timestamp start, std::int64_t step_ms) {
    auto state = std::make_shared<std::int64_t>(start.ms);
    return [state, step_ms] {
        const Timestamp now{*state};
        *state += step_ms;
        return now;
    };
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c) || c >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) {
            ++i;
        }
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) {
            ++i;
        }
        if (i > start) {
            words.emplace_back(text.substr(start, i - start));
        }
    }
    return words;
}

std::size_t word_count(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (const char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
            auto piece = trim(text.substr(start, i + 1 - start));
            if (!piece.empty()) {
                sentences.push_back(std::move(piece));
            }
            start = i + 1;
        }
    }
    if (start < text.size()) {
        auto piece = trim(text.substr(start));
        if (!piece.empty()) {
            sentences.push_back(std::move(piece));
        }
    }
    return sentences;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) {
        ++b;
    }
    while (e > b && is_space(s[e - 1])) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    for (const auto& w : split_whitespace(s)) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

std::string normalize_name(std::string_view s) { return to_lower(collapse_whitespace(s)); }

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_number(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::optional<double> parse_number(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) {
        return std::nullopt;
    }
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (*begin == '+') {
        ++begin;
    }
    double value = 0;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

bool is_doi(std::string_view ref) {
    return ref.size() > 3 && ref.substr(0, 3) == "10." && ref.find('/') != std::string_view::npos;
}

}  // namespace apub
