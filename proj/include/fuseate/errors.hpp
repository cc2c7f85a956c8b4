#pragma once

#include <stdexcept>
#include <string>

namespace fuseate {

// Every failure raised by the library derives from Error so callers (the CLI,
// the replication harness) can catch one type and still report the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class PrecisionError : public Error {
public:
    using Error::Error;
};

class StratificationError : public Error {
public:
    using Error::Error;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class LinkDegeneracyError : public Error {
public:
    using Error::Error;
};

class IdentificationError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

class ConsistencyError : public Error {
public:
    using Error::Error;
};

}  // namespace fuseate
