#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rbmsem/likelihood.hpp"

namespace rbmsem {

/// Comma-separated numbers, one observation per line. A first line that does
/// not parse as numbers is taken as a header. Throws std::runtime_error with
/// the offending line number on ragged or non-numeric rows.
Dataset read_csv(std::istream& in);
Dataset read_csv(const std::string& path);

/// Writes with 17 significant digits so values round-trip exactly.
void write_csv(std::ostream& out, const Dataset& data, const std::vector<std::string>& header = {});
void write_csv(const std::string& path, const Dataset& data, const std::vector<std::string>& header = {});

}  // namespace rbmsem
