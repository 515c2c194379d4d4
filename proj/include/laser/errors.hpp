#pragma once

#include <stdexcept>
#include <string>

namespace laser {

// Error taxonomy used across the library. what() carries the offending detail
// (shapes, field names, client ids) so callers can report precisely.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };    // tensor shape mismatch
struct InputError : Error { using Error::Error; };        // bad argument value
struct ContractError : Error { using Error::Error; };     // precondition violated
struct CapacityError : Error { using Error::Error; };     // enumeration guard exceeded
struct ProtocolError : Error { using Error::Error; };     // message barrier violated
struct ParseError : Error { using Error::Error; };        // CSV / config parse failure
struct UnavailableError : Error { using Error::Error; };  // predictor cannot serve this pattern

}  // namespace laser
