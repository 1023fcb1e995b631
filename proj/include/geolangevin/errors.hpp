#pragma once

#include <stdexcept>
#include <string>

namespace geolangevin {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// geometry
class InvalidChartPoint : public Error { public: using Error::Error; };
class SingularMetric : public Error { public: using Error::Error; };
class NoTransition : public Error { public: using Error::Error; };
class OutOfDomain : public Error { public: using Error::Error; };
class ChartEscape : public Error { public: using Error::Error; };

// bundle
class NotUnitState : public Error { public: using Error::Error; };

// measures
class EnvelopeViolation : public Error { public: using Error::Error; };

// analysis
class InfeasibleConstants : public Error { public: using Error::Error; };
class InsufficientSignal : public Error { public: using Error::Error; };
class NonCompactBase : public Error { public: using Error::Error; };
class DegenerateGradient : public Error { public: using Error::Error; };

// parameters and configuration
class InvalidParameter : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

} // namespace geolangevin
