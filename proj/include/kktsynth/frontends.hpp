#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kktsynth/errors.hpp"
#include "kktsynth/problem.hpp"

namespace kktsynth {

enum class SourceFormat { Mps, AmplSubset };

std::string_view to_string(SourceFormat f);

/// `.mps` -> Mps, `.mod` -> AmplSubset; nullopt for anything else.
std::optional<SourceFormat> detect_format(const std::filesystem::path& path);

/// Parses "mps" / "ampl" / "mod".
std::optional<SourceFormat> format_from_name(std::string_view name);

struct ParseDiagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  int line = 0;    // 1-based
  int column = 0;  // 1-based
  std::string message;

  std::string to_string() const;
};

/// Raised when a source file is rejected; carries every diagnostic found.
class ParseError : public Error {
 public:
  explicit ParseError(std::vector<ParseDiagnostic> diagnostics);
  const std::vector<ParseDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<ParseDiagnostic> diagnostics_;
};

/// A parsed problem plus the non-fatal diagnostics collected on the way.
struct ParseResult {
  Problem problem;
  std::vector<ParseDiagnostic> warnings;
};

/// Free-format MPS with optional RANGES, BOUNDS, QUADOBJ/QMATRIX and QCMATRIX.
ParseResult parse_mps(std::string_view text);

/// The AMPL subset: var declarations, one minimize, subject to rows.
ParseResult parse_ampl_subset(std::string_view text);

/// Reads and parses a file; the format comes from `format` or the extension.
ParseResult parse_file(const std::filesystem::path& path,
                       std::optional<SourceFormat> format = std::nullopt);

/// Writes a raw (bounds-carrying) problem in the AMPL subset.
std::string emit_ampl(const Problem& p);

}  // namespace kktsynth
