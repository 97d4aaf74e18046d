#pragma once

#include <stdexcept>
#include <string>

namespace lanescope {

// Base of every domain error. name() is the stable identifier printed by the
// CLI on failure (e.g. "MissingColumn").
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(name + ": " + what), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define LANESCOPE_DEFINE_ERROR(Type)                                    \
  class Type : public Error {                                           \
   public:                                                              \
    explicit Type(const std::string& what) : Error(#Type, what) {}      \
  }

// core / configuration
LANESCOPE_DEFINE_ERROR(InvalidArgument);
LANESCOPE_DEFINE_ERROR(ConfigError);
LANESCOPE_DEFINE_ERROR(PathNotFound);

// ingest
LANESCOPE_DEFINE_ERROR(MissingColumn);
LANESCOPE_DEFINE_ERROR(ParseError);
LANESCOPE_DEFINE_ERROR(EmptyInput);
LANESCOPE_DEFINE_ERROR(AmbiguousHeading);
LANESCOPE_DEFINE_ERROR(RateMismatch);
LANESCOPE_DEFINE_ERROR(NoLaneChange);
LANESCOPE_DEFINE_ERROR(MultipleLaneChanges);

// synth
LANESCOPE_DEFINE_ERROR(SpecError);

// field
LANESCOPE_DEFINE_ERROR(SingularGram);

// codec
LANESCOPE_DEFINE_ERROR(ShapeError);
LANESCOPE_DEFINE_ERROR(EmptyDataset);
LANESCOPE_DEFINE_ERROR(RankDeficient);
LANESCOPE_DEFINE_ERROR(LengthMismatch);

// bnp
LANESCOPE_DEFINE_ERROR(NumericalUnderflow);

// cli: unknown config keys and malformed overrides
LANESCOPE_DEFINE_ERROR(UsageError);

#undef LANESCOPE_DEFINE_ERROR

}  // namespace lanescope
