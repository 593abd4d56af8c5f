#pragma once

#include <stdexcept>
#include <string>

namespace pheno {

// Error classes double as the CLI exit-code contract:
// ValidationError -> 1, InputError -> 2, BackendError -> 3.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data, bad arguments, violated invariants.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A required input file or directory could not be opened.
class InputError : public Error {
public:
  using Error::Error;
};

/// A remote service (NER, LLM, embedding) failed or answered garbage.
class BackendError : public Error {
public:
  using Error::Error;
};

}  // namespace pheno
