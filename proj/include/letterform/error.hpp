#pragma once

#include <stdexcept>
#include <string>

namespace letterform {

/// Raised for every rejected input: malformed files, violated preconditions,
/// unknown labels. The message always names the offending value or path.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace letterform
