#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apub {

enum class ErrorCode {
    invalid_argument,
    not_found,
    conflict,
    corrupt,
    io,
    provider,
    parse,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline Error invalid_argument(const std::string& msg) { return {ErrorCode::invalid_argument, msg}; }
inline Error not_found(const std::string& msg) { return {ErrorCode::not_found, msg}; }
inline Error conflict(const std::string& msg) { return {ErrorCode::conflict, msg}; }

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

/// Milliseconds since the Unix epoch, UTC.
struct Timestamp {
    std::int64_t ms = 0;

    auto operator<=>(const Timestamp&) const = default;
};

/// RFC 3339 with millisecond precision and `Z` suffix, e.g. 2025-01-02T03:04:05.006Z.
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view text);

/// Validates a YYYY-MM-DD calendar date.
bool is_valid_date(std::string_view date);

using Clock = std::function<Timestamp()>;
Clock system_clock();

/// Deterministic clock for tests: starts at `start` and advances by `step_ms` per call.
Clock stepping_clock(Timestamp start, std::int64_t step_ms = 1000);

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

/// Lowercases ASCII and splits on every non-alphanumeric byte. Bytes >= 0x80
/// are kept as token characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text);

/// Whitespace-token count.
std::size_t word_count(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
/// Delimiters stay with their sentence; surrounding whitespace is trimmed.
std::vector<std::string> split_sentences(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// trim + collapse internal whitespace runs to one space + lowercase.
std::string normalize_name(std::string_view s);

/// Collapses all whitespace runs to single spaces and trims.
std::string collapse_whitespace(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);
bool iequals(std::string_view a, std::string_view b);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// Shortest round-trip decimal rendering of a finite double.
std::string format_number(double v);

/// Strict decimal parse: whole string must be consumed and the value finite.
std::optional<double> parse_number(std::string_view s);

/// DOI shape: `10.` prefix and contains `/`.
bool is_doi(std::string_view ref);

}  // namespace apub
