#pragma once

#include <string>
#include <vector>

namespace chronocon::csv {

// Floats are serialized with 17 significant digits so that write/read
// round-trips are exact and files are byte-stable.
std::string format_double(double v);

// Splits one CSV line on ','. No quoting: field values must not contain
// commas or newlines (enforced by the writers).
std::vector<std::string> split_line(const std::string& line);

// Reads an entire file; throws std::runtime_error on I/O failure.
std::string read_file(const std::string& path);

// Writes content atomically (tmp file + rename) so partially written
// outputs never appear under the final name.
void write_file(const std::string& path, const std::string& content);

bool file_exists(const std::string& path);

// Parses a double, rejecting trailing garbage and non-finite values unless
// allow_nonfinite is set. Throws std::runtime_error with `context` on error.
double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);

}  // namespace chronocon::csv
