#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace polydes {

/// Base class for all library errors. Carries a stable machine-readable code
/// alongside the human-readable message.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define POLYDES_DEFINE_ERROR(NAME)                        \
  class NAME : public Error {                             \
  public:                                                 \
    explicit NAME(const std::string& what = #NAME)        \
        : Error(#NAME, what) {}                           \
  }

POLYDES_DEFINE_ERROR(BinomialOverflow);
POLYDES_DEFINE_ERROR(DimensionMismatch);
POLYDES_DEFINE_ERROR(MissingCompactnessCertificate);
POLYDES_DEFINE_ERROR(SamplingExhausted);
POLYDES_DEFINE_ERROR(DegreeOverflow);
POLYDES_DEFINE_ERROR(NonSymmetricInput);
POLYDES_DEFINE_ERROR(SingularMatrix);
POLYDES_DEFINE_ERROR(EigMultiplicityAmbiguous);
POLYDES_DEFINE_ERROR(UnsupportedCriterion);
POLYDES_DEFINE_ERROR(MatchConstraintInfeasible);
POLYDES_DEFINE_ERROR(ExtractionUnstable);
POLYDES_DEFINE_ERROR(NoAtomsExtracted);
POLYDES_DEFINE_ERROR(IllConditionedVandermonde);
POLYDES_DEFINE_ERROR(NegativeWeight);
POLYDES_DEFINE_ERROR(CertificateResidualTooLarge);
POLYDES_DEFINE_ERROR(UnsupportedDimension);
POLYDES_DEFINE_ERROR(ParseError);

#undef POLYDES_DEFINE_ERROR

}  // namespace polydes
