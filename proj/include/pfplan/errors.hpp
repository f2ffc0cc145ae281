#pragma once

#include <stdexcept>
#include <string>

namespace pfplan {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

// All particle weights are zero; the weighted state estimate is undefined.
struct ParticleDeathError : Error {
    explicit ParticleDeathError(int t)
        : Error("all particle weights are zero at t=" + std::to_string(t)), time(t) {}
    int time;
};

// The observation record has zero likelihood under the model (gamma_t = 0).
struct ImpossibleObservationError : Error {
    explicit ImpossibleObservationError(int t)
        : Error("observation record is impossible under the model at t=" + std::to_string(t)),
          time(t) {}
    int time;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg, int line_no = 0)
        : Error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
    int line;
};

}  // namespace pfplan
