#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace radixlm {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;
using RequestId = std::uint64_t;

// Every library error derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTokenError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

}  // namespace radixlm
