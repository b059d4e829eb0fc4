#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctlfm {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Two spikes of one neuron fell into the same inference bin.
class ResolutionTooCoarse : public Error {
 public:
  ResolutionTooCoarse(std::size_t neuron, std::size_t bin, const std::string& what)
      : Error(what), neuron_(neuron), bin_(bin) {}
  std::size_t neuron() const noexcept { return neuron_; }
  std::size_t bin() const noexcept { return bin_; }

 private:
  std::size_t neuron_;
  std::size_t bin_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class DegenerateData : public Error {
 public:
  using Error::Error;
};

// An iterative solver gave up. `trace` holds one human-readable line per
// iteration or restart so callers can persist it.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, std::vector<std::string> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<std::string>& trace() const noexcept { return trace_; }

 private:
  std::vector<std::string> trace_;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctlfm
