// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace layerwise {

// Every failure surfaced by the library derives from Error so the CLI can map
// the class to an exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ScheduleError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Raised when a closed-form result is requested outside the assumptions it
// was derived under (e.g. unequal forward/backward cost).
class AssumptionError : public Error {
public:
    using Error::Error;
};

}  // namespace layerwise
