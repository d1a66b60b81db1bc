#pragma once

#include <stdexcept>
#include <string>

namespace dyntx {

// Every failure carries a short machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct UnreachableCell : Error {
  explicit UnreachableCell(const std::string& cell)
      : Error("UnreachableCell", "unreachable cell: " + cell) {}
};

struct UnsupportedLatent : Error {
  explicit UnsupportedLatent(const std::string& why)
      : Error("UnsupportedLatent", "unsupported latent law: " + why) {}
};

struct IrrelevantInstrument : Error {
  explicit IrrelevantInstrument(const std::string& cell)
      : Error("IrrelevantInstrument", "instrument irrelevant at " + cell) {}
};

struct NoMatch : Error {
  explicit NoMatch(const std::string& cell)
      : Error("NoMatch", "no matching x at " + cell) {}
};

struct MatchSpread : Error {
  explicit MatchSpread(const std::string& cell)
      : Error("MatchSpread", "matched x values disagree at " + cell) {}
};

struct DegenerateConditioning : Error {
  explicit DegenerateConditioning(const std::string& what)
      : Error("DegenerateConditioning", "degenerate conditioning: " + what) {}
};

struct TooManyFailures : Error {
  explicit TooManyFailures(const std::string& what)
      : Error("TooManyFailures", "too many failed bootstrap replicates: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

}  // namespace dyntx
