#pragma once

#include <stdexcept>
#include <string>

namespace protoscope {

/// Base class for every typed failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define PROTOSCOPE_DEFINE_ERROR(NAME)                                  \
    class NAME : public Error {                                       \
    public:                                                           \
        explicit NAME(const std::string& what = #NAME) : Error(what) {} \
    }

// dicom
PROTOSCOPE_DEFINE_ERROR(MalformedHeader);
PROTOSCOPE_DEFINE_ERROR(TruncatedElement);
PROTOSCOPE_DEFINE_ERROR(UnsupportedTransferSyntax);
PROTOSCOPE_DEFINE_ERROR(MissingCriticalTag);
PROTOSCOPE_DEFINE_ERROR(PixelLengthMismatch);
PROTOSCOPE_DEFINE_ERROR(UnsupportedPixelEncoding);
PROTOSCOPE_DEFINE_ERROR(InvalidRecord);

// quality metrics
PROTOSCOPE_DEFINE_ERROR(EmptyImage);
PROTOSCOPE_DEFINE_ERROR(DegenerateDistribution);

// dataset assembly
PROTOSCOPE_DEFINE_ERROR(EmptyAfterFiltering);
PROTOSCOPE_DEFINE_ERROR(SingleClassInput);

// learners
PROTOSCOPE_DEFINE_ERROR(SingleClassTraining);
PROTOSCOPE_DEFINE_ERROR(NonFiniteFeature);
PROTOSCOPE_DEFINE_ERROR(SchemaMismatch);

// evaluation
PROTOSCOPE_DEFINE_ERROR(LengthMismatch);
PROTOSCOPE_DEFINE_ERROR(SingleClass);
PROTOSCOPE_DEFINE_ERROR(NoPositives);
PROTOSCOPE_DEFINE_ERROR(TooFewPerClass);

// explanation
PROTOSCOPE_DEFINE_ERROR(TooManyFeatures);
PROTOSCOPE_DEFINE_ERROR(UnsupportedKind);
PROTOSCOPE_DEFINE_ERROR(ShapeMismatch);

// synthetic cohorts
PROTOSCOPE_DEFINE_ERROR(OutOfRange);
PROTOSCOPE_DEFINE_ERROR(BadConfig);

#undef PROTOSCOPE_DEFINE_ERROR

} // namespace protoscope
