#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace realface {

/// Base class of every error raised by the library. `kind()` is the stable
/// name printed by the CLI (e.g. "IncompleteCartesianProduct").
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& what)
      : std::runtime_error(std::string(kind) + ": " + what), kind_(kind) {}

  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

#define REALFACE_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  }

REALFACE_DEFINE_ERROR(ParseError);
REALFACE_DEFINE_ERROR(ShapeError);
REALFACE_DEFINE_ERROR(IncompleteCartesianProduct);
REALFACE_DEFINE_ERROR(DegenerateAnchors);
REALFACE_DEFINE_ERROR(InvalidAnchors);
REALFACE_DEFINE_ERROR(DegenerateCorpus);
REALFACE_DEFINE_ERROR(RankDeficient);
REALFACE_DEFINE_ERROR(DegenerateMode);
REALFACE_DEFINE_ERROR(CollinearModes);
REALFACE_DEFINE_ERROR(MissingAsset);
REALFACE_DEFINE_ERROR(DuplicateIdentity);
REALFACE_DEFINE_ERROR(EmptyGallery);
REALFACE_DEFINE_ERROR(DegenerateVector);
REALFACE_DEFINE_ERROR(PolarityError);
REALFACE_DEFINE_ERROR(UnknownIdentity);
REALFACE_DEFINE_ERROR(SpecError);
REALFACE_DEFINE_ERROR(OracleUnavailable);
REALFACE_DEFINE_ERROR(ProtocolError);
REALFACE_DEFINE_ERROR(IoError);

#undef REALFACE_DEFINE_ERROR

}  // namespace realface
