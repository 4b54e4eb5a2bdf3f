#pragma once

#include <stdexcept>
#include <string>

namespace cisfa {

/// Base of every error raised by the library. `exit_code()` maps the error
/// family onto the CLI convention (2 usage, 3 data/IO, 4 numerical).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 3; }
};

#define CISFA_DEFINE_ERROR(Name, Code)                         \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what) : Error(what) {}    \
    int exit_code() const override { return Code; }            \
  };

CISFA_DEFINE_ERROR(DegenerateVolume, 3)
CISFA_DEFINE_ERROR(InvalidROI, 3)
CISFA_DEFINE_ERROR(TooFewVolumes, 3)
CISFA_DEFINE_ERROR(FormatError, 3)
CISFA_DEFINE_ERROR(ShapeError, 3)
CISFA_DEFINE_ERROR(ShapeMismatch, 3)
CISFA_DEFINE_ERROR(TooManyPatches, 3)
CISFA_DEFINE_ERROR(DegenerateBatch, 4)
CISFA_DEFINE_ERROR(InvalidMode, 2)
CISFA_DEFINE_ERROR(LabelLeak, 3)
CISFA_DEFINE_ERROR(NonFiniteLoss, 4)

#undef CISFA_DEFINE_ERROR

}  // namespace cisfa
