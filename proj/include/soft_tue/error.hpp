#pragma once

#include <stdexcept>
#include <string>

namespace soft_tue {

enum class Errc {
  WrongLength,
  OutOfRange,
  InvalidK,
  InvalidConfig,
  ProtocolViolation,
  EndpointBusy,
  IoFailure,
  ParseError,
};

constexpr const char* errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::WrongLength: return "WrongLength";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::InvalidK: return "InvalidK";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::EndpointBusy: return "EndpointBusy";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace soft_tue
