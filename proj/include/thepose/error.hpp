#pragma once

#include <stdexcept>
#include <string>

namespace thepose {

// Every failure carries a short machine-readable code ("empty-object",
// "shape", "bad-magic", ...) next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Raised by training when the loss stops being finite.
class DivergedError : public Error {
 public:
  DivergedError(long step, const std::string& message)
      : Error("diverged", message), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace thepose
