#pragma once

#include <stdexcept>
#include <string>

namespace crft {

// One subclass per failure family so callers and tests can catch precisely.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };        // dimension mismatch
struct IndexError : Error { using Error::Error; };        // out-of-range labels/indices
struct TapeError : Error { using Error::Error; };         // tape misuse (double backward)
struct SpecError : Error { using Error::Error; };         // invalid model geometry
struct CalibError : Error { using Error::Error; };        // empty/mismatched calibration
struct StructureError : Error { using Error::Error; };    // mask/N:M/grouping misalignment
struct ConfigError : Error { using Error::Error; };       // bad run configuration
struct FormatError : Error { using Error::Error; };       // malformed file
struct ConsistencyError : Error { using Error::Error; };  // cross-file disagreement
struct VersionError : Error { using Error::Error; };      // unknown checkpoint version
struct StatsError : Error { using Error::Error; };        // insufficient data for stats
struct ReportError : Error { using Error::Error; };       // empty/invalid result table

}  // namespace crft
