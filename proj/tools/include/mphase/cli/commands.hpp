#pragma once

#include "mphase/estimator.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace mphase::cli {

using Json = nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kValidationError = 2,
  kInfeasible = 3,
  kIdentifiability = 4,
  kFailureBudget = 5,
};

/// Reads a CSV with header `x,y`; LF or CRLF line endings. Any malformed row
/// throws InvalidArgument naming the file and line.
Dataset read_csv(const std::filesystem::path& path);
std::string to_csv(const Dataset& data);

/// Shortest representation that round-trips.
std::string format_number(double v);

Json load_config(const std::filesystem::path& path);

/// Command bodies. `cfg` is the merged configuration (file values overridden
/// by flags); outputs go to cfg["out"] (default "."). Each returns the report
/// it wrote.
Json cmd_fit(const Json& cfg);
Json cmd_simulate(const Json& cfg);
Json cmd_mc(const Json& cfg);
Json cmd_limit(const Json& cfg);

/// Full command line, mapping exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mphase::cli
