#pragma once

#include <stdexcept>
#include <string>

namespace aucal {

// Base of every error raised by the library. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string& column)
      : Error("missing column: " + column), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& column, const std::string& detail)
      : Error("parse error at row " + std::to_string(row) + ", column '" + column +
              "': " + detail),
        row_(row),
        column_(column) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

#define AUCAL_DEFINE_ERROR(Name)   \
  class Name : public Error {      \
   public:                         \
    using Error::Error;            \
  };

AUCAL_DEFINE_ERROR(EmptyDataset)
AUCAL_DEFINE_ERROR(InconsistentFeatureDim)
AUCAL_DEFINE_ERROR(UnknownAu)
AUCAL_DEFINE_ERROR(UnknownGroupLevel)
AUCAL_DEFINE_ERROR(UnknownAttribute)
AUCAL_DEFINE_ERROR(LengthMismatch)
AUCAL_DEFINE_ERROR(EmptyInput)
AUCAL_DEFINE_ERROR(DegenerateGroup)
AUCAL_DEFINE_ERROR(InsufficientData)
AUCAL_DEFINE_ERROR(InvalidCounts)
AUCAL_DEFINE_ERROR(NonFiniteValue)
AUCAL_DEFINE_ERROR(InvalidTable)
AUCAL_DEFINE_ERROR(NotBinarized)
AUCAL_DEFINE_ERROR(Separation)
AUCAL_DEFINE_ERROR(SingularDesign)
AUCAL_DEFINE_ERROR(InvalidCount)
AUCAL_DEFINE_ERROR(IndexOutOfRange)
AUCAL_DEFINE_ERROR(InvalidLabel)
AUCAL_DEFINE_ERROR(DimensionMismatch)
AUCAL_DEFINE_ERROR(NoFeatures)
AUCAL_DEFINE_ERROR(EmptyTrainSplit)
AUCAL_DEFINE_ERROR(InvalidConfig)
AUCAL_DEFINE_ERROR(MissingGroup)
AUCAL_DEFINE_ERROR(SingleClass)
AUCAL_DEFINE_ERROR(Misaligned)
AUCAL_DEFINE_ERROR(InfeasibleBalance)

#undef AUCAL_DEFINE_ERROR

}  // namespace aucal
