#pragma once

#include <stdexcept>
#include <string>

namespace redgrape {

// Invalid experiment setup: bad shapes, bad knobs, malformed input files.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A client/server message violated the round contract.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace redgrape
