#pragma once

// Simplified 5G SA attach message set, the bit-exact RRC Setup Complete
// layout, the gNB/AMF validation rule table and the optional keystream.
// See docs/frame-layout.md for the normative layout.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "soft_tue/error.hpp"
#include "soft_tue/json_util.hpp"
#include "soft_tue/prng.hpp"

namespace soft_tue {

using Tick = std::int64_t;

inline constexpr std::size_t kSetupCompleteBytes = 26;
inline constexpr std::size_t kSetupCompleteBits = kSetupCompleteBytes * 8;

inline constexpr std::uint8_t kSetupCompleteMsgType = 0x43;
inline constexpr std::uint8_t kRegistrationRequestNasType = 0x41;
inline constexpr std::uint16_t kSetupCompleteLength = 26;
inline constexpr std::uint64_t kDefaultSuci = 0x0011223344556677ULL;

// ---------------------------------------------------------------------------
// Frame

// Fixed-length octet buffer with MSB-first bit addressing: bit b lives in
// byte b / 8 under mask 0x80 >> (b % 8).
class Frame {
 public:
  Frame() = default;
  explicit Frame(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  Frame(std::initializer_list<std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t size() const noexcept { return bytes_.size(); }
  std::size_t bit_len() const noexcept { return bytes_.size() * 8; }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::uint8_t operator[](std::size_t i) const { return bytes_.at(i); }
  std::uint8_t& operator[](std::size_t i) { return bytes_.at(i); }

  bool bit(std::size_t b) const {
    check_bit(b);
    return (bytes_[b / 8] & mask(b)) != 0;
  }

  void flip(std::size_t b) {
    check_bit(b);
    bytes_[b / 8] ^= mask(b);
  }

  std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes_.size() * 2);
    for (auto v : bytes_) {
      out.push_back(digits[v >> 4]);
      out.push_back(digits[v & 0x0f]);
    }
    return out;
  }

  static Frame from_hex(std::string_view hex) {
    std::vector<std::uint8_t> bytes;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    int hi = -1;
    for (char c : hex) {
      if (c == ' ' || c == ':') continue;
      const int v = nibble(c);
      if (v < 0) throw Error(Errc::ParseError, "bad hex digit in frame");
      if (hi < 0) {
        hi = v;
      } else {
        bytes.push_back(static_cast<std::uint8_t>(hi << 4 | v));
        hi = -1;
      }
    }
    if (hi >= 0) throw Error(Errc::ParseError, "odd number of hex digits");
    return Frame(std::move(bytes));
  }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  static constexpr std::uint8_t mask(std::size_t b) noexcept {
    return static_cast<std::uint8_t>(0x80u >> (b % 8));
  }
  void check_bit(std::size_t b) const {
    if (b >= bit_len())
      throw Error(Errc::OutOfRange, "bit " + std::to_string(b) + " outside frame of " +
                                        std::to_string(bit_len()) + " bits");
  }

  std::vector<std::uint8_t> bytes_;
};

// ---------------------------------------------------------------------------
// Causes and verdicts

enum class RejectCause : std::uint8_t {
  BadMsgType = 1,
  BadTransactionId,
  BadPlmn,
  BadCause,
  BadRegistrationType,
  UnknownSubscriber,
  NoSecurityAlgo,
  BadNasType,
  BadSlice,
  BadLength,
  // Outside the validation rule table.
  Congestion,
  AuthenticationFailure,
  ProtocolError,
  Released,
};

inline constexpr std::array<std::pair<RejectCause, std::string_view>, 14> kRejectCauseNames{{
    {RejectCause::BadMsgType, "BadMsgType"},
    {RejectCause::BadTransactionId, "BadTransactionId"},
    {RejectCause::BadPlmn, "BadPlmn"},
    {RejectCause::BadCause, "BadCause"},
    {RejectCause::BadRegistrationType, "BadRegistrationType"},
    {RejectCause::UnknownSubscriber, "UnknownSubscriber"},
    {RejectCause::NoSecurityAlgo, "NoSecurityAlgo"},
    {RejectCause::BadNasType, "BadNasType"},
    {RejectCause::BadSlice, "BadSlice"},
    {RejectCause::BadLength, "BadLength"},
    {RejectCause::Congestion, "Congestion"},
    {RejectCause::AuthenticationFailure, "AuthenticationFailure"},
    {RejectCause::ProtocolError, "ProtocolError"},
    {RejectCause::Released, "Released"},
}};

inline std::string_view to_string(RejectCause c) {
  for (const auto& [v, name] : kRejectCauseNames)
    if (v == c) return name;
  return "Unknown";
}

inline RejectCause reject_cause_from_string(std::string_view s) {
  for (const auto& [v, name] : kRejectCauseNames)
    if (name == s) return v;
  throw Error(Errc::ParseError, "unknown reject cause: " + std::string(s));
}

inline RejectCause reject_cause_from_wire(std::uint8_t v) {
  for (const auto& [c, name] : kRejectCauseNames)
    if (static_cast<std::uint8_t>(c) == v) return c;
  throw Error(Errc::ParseError, "unknown reject cause value " + std::to_string(v));
}

struct ValidationVerdict {
  bool accepted = true;
  std::optional<RejectCause> cause;

  static ValidationVerdict accept() { return {}; }
  static ValidationVerdict reject(RejectCause c) { return {false, c}; }

  friend bool operator==(const ValidationVerdict&, const ValidationVerdict&) = default;
};

inline Json to_json(const ValidationVerdict& v) {
  Json j;
  j["accepted"] = v.accepted;
  j["cause"] = v.cause ? Json(std::string(to_string(*v.cause))) : Json(nullptr);
  return j;
}

inline ValidationVerdict verdict_from_json(const Json& j) {
  ValidationVerdict v;
  v.accepted = j.at("accepted").get<bool>();
  if (!j.at("cause").is_null()) v.cause = reject_cause_from_string(j.at("cause").get<std::string>());
  if (v.accepted == v.cause.has_value()) throw Error(Errc::ParseError, "verdict/cause mismatch");
  return v;
}

// ---------------------------------------------------------------------------
// RAN configuration

struct RanConfig {
  std::uint8_t expected_tid = 1;
  unsigned plmn_count = 2;
  std::set<std::uint8_t> valid_causes{0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08};
  std::set<std::uint8_t> valid_reg_types{0x01, 0x02, 0x03};
  std::set<std::uint64_t> provisioned_sucis{kDefaultSuci};
  std::set<std::uint32_t> allowed_slices{0x00000001, 0x00000003};
  unsigned context_capacity = 16;
  Tick context_expiry_ticks = 50;

  void validate() const {
    if (expected_tid > 0x0f) throw Error(Errc::InvalidConfig, "expected_tid must fit in 4 bits");
    if (plmn_count < 1 || plmn_count > 16)
      throw Error(Errc::InvalidConfig, "plmn_count must be in [1, 16]");
    if (valid_causes.empty() || valid_reg_types.empty() || provisioned_sucis.empty() ||
        allowed_slices.empty())
      throw Error(Errc::InvalidConfig, "RanConfig sets must be non-empty");
    if (context_expiry_ticks < 0) throw Error(Errc::InvalidConfig, "negative context expiry");
  }

  friend bool operator==(const RanConfig&, const RanConfig&) = default;
};

inline Json to_json(const RanConfig& c) {
  Json j;
  j["expected_tid"] = c.expected_tid;
  j["plmn_count"] = c.plmn_count;
  j["valid_causes"] = c.valid_causes;
  j["valid_reg_types"] = c.valid_reg_types;
  Json sucis = Json::array();
  for (auto s : c.provisioned_sucis) sucis.push_back(hex_u64(s));
  j["provisioned_sucis"] = std::move(sucis);
  j["allowed_slices"] = c.allowed_slices;
  j["context_capacity"] = c.context_capacity;
  j["context_expiry_ticks"] = c.context_expiry_ticks;
  return j;
}

// Missing keys keep their defaults.
inline RanConfig ran_config_from_json(const Json& j) {
  RanConfig c;
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "ran config must be an object");
  if (j.contains("expected_tid")) c.expected_tid = json_uint<std::uint8_t>(j["expected_tid"], 0x0f);
  if (j.contains("plmn_count")) c.plmn_count = json_uint<unsigned>(j["plmn_count"], 16);
  auto read_set = [&](const char* key, auto& out, std::uint64_t max) {
    if (!j.contains(key)) return;
    using T = typename std::decay_t<decltype(out)>::value_type;
    out.clear();
    for (const auto& v : j[key]) out.insert(json_uint<T>(v, max));
  };
  read_set("valid_causes", c.valid_causes, 0xff);
  read_set("valid_reg_types", c.valid_reg_types, 0xff);
  read_set("provisioned_sucis", c.provisioned_sucis, UINT64_MAX);
  read_set("allowed_slices", c.allowed_slices, 0xffffffffULL);
  if (j.contains("context_capacity"))
    c.context_capacity = json_uint<unsigned>(j["context_capacity"], 1u << 20);
  if (j.contains("context_expiry_ticks"))
    c.context_expiry_ticks = json_uint<Tick>(j["context_expiry_ticks"], INT64_MAX);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// RRC Setup Complete (carrying the NAS Registration Request)

struct SetupCompleteFields {
  std::uint8_t msg_type = kSetupCompleteMsgType;
  std::uint8_t tid = 1;          // 4 bits
  std::uint8_t plmn_index = 0;   // 4 bits
  std::uint8_t establishment_cause = 0x03;
  std::uint8_t registration_type = 0x01;
  std::uint64_t suci = kDefaultSuci;
  std::uint16_t sec_caps = 0x1100;
  std::uint8_t nas_msg_type = kRegistrationRequestNasType;
  std::uint8_t nas_key_set_id = 0;
  std::uint32_t slice_id = 0x00000001;
  std::uint16_t ue_caps = 0;
  std::uint16_t reserved = 0;
  std::uint16_t length = kSetupCompleteLength;

  friend bool operator==(const SetupCompleteFields&, const SetupCompleteFields&) = default;
};

namespace detail {

template <typename T>
void put_be(std::vector<std::uint8_t>& out, T v) {
  for (int shift = (sizeof(T) - 1) * 8; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> shift));
}

template <typename T>
T get_be(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = (v << 8) | in[offset + i];
  return static_cast<T>(v);
}

}  // namespace detail

inline Frame encode_setup_complete(const SetupCompleteFields& f) {
  std::vector<std::uint8_t> out;
  out.reserve(kSetupCompleteBytes);
  out.push_back(f.msg_type);
  out.push_back(static_cast<std::uint8_t>((f.tid & 0x0f) << 4 | (f.plmn_index & 0x0f)));
  out.push_back(f.establishment_cause);
  out.push_back(f.registration_type);
  detail::put_be(out, f.suci);
  detail::put_be(out, f.sec_caps);
  out.push_back(f.nas_msg_type);
  out.push_back(f.nas_key_set_id);
  detail::put_be(out, f.slice_id);
  detail::put_be(out, f.ue_caps);
  detail::put_be(out, f.reserved);
  detail::put_be(out, f.length);
  return Frame(std::move(out));
}

inline void require_setup_complete_length(const Frame& frame) {
  if (frame.size() != kSetupCompleteBytes)
    throw Error(Errc::WrongLength, "RRC Setup Complete must be 26 bytes, got " +
                                       std::to_string(frame.size()));
}

// No validation: a fuzzed frame always decodes.
inline SetupCompleteFields decode_setup_complete(const Frame& frame) {
  require_setup_complete_length(frame);
  const auto b = frame.bytes();
  SetupCompleteFields f;
  f.msg_type = b[0];
  f.tid = b[1] >> 4;
  f.plmn_index = b[1] & 0x0f;
  f.establishment_cause = b[2];
  f.registration_type = b[3];
  f.suci = detail::get_be<std::uint64_t>(b, 4);
  f.sec_caps = detail::get_be<std::uint16_t>(b, 12);
  f.nas_msg_type = b[14];
  f.nas_key_set_id = b[15];
  f.slice_id = detail::get_be<std::uint32_t>(b, 16);
  f.ue_caps = detail::get_be<std::uint16_t>(b, 20);
  f.reserved = detail::get_be<std::uint16_t>(b, 22);
  f.length = detail::get_be<std::uint16_t>(b, 24);
  return f;
}

inline Json to_json(const SetupCompleteFields& f) {
  Json j;
  j["msg_type"] = f.msg_type;
  j["tid"] = f.tid;
  j["plmn_index"] = f.plmn_index;
  j["establishment_cause"] = f.establishment_cause;
  j["registration_type"] = f.registration_type;
  j["suci"] = hex_u64(f.suci);
  j["sec_caps"] = f.sec_caps;
  j["nas_msg_type"] = f.nas_msg_type;
  j["nas_key_set_id"] = f.nas_key_set_id;
  j["slice_id"] = f.slice_id;
  j["ue_caps"] = f.ue_caps;
  j["reserved"] = f.reserved;
  j["length"] = f.length;
  return j;
}

inline SetupCompleteFields setup_complete_fields_from_json(const Json& j) {
  SetupCompleteFields f;
  f.msg_type = json_uint<std::uint8_t>(j.at("msg_type"), 0xff);
  f.tid = json_uint<std::uint8_t>(j.at("tid"), 0x0f);
  f.plmn_index = json_uint<std::uint8_t>(j.at("plmn_index"), 0x0f);
  f.establishment_cause = json_uint<std::uint8_t>(j.at("establishment_cause"), 0xff);
  f.registration_type = json_uint<std::uint8_t>(j.at("registration_type"), 0xff);
  f.suci = json_u64(j.at("suci"));
  f.sec_caps = json_uint<std::uint16_t>(j.at("sec_caps"), 0xffff);
  f.nas_msg_type = json_uint<std::uint8_t>(j.at("nas_msg_type"), 0xff);
  f.nas_key_set_id = json_uint<std::uint8_t>(j.at("nas_key_set_id"), 0xff);
  f.slice_id = json_uint<std::uint32_t>(j.at("slice_id"), 0xffffffffULL);
  f.ue_caps = json_uint<std::uint16_t>(j.at("ue_caps"), 0xffff);
  f.reserved = json_uint<std::uint16_t>(j.at("reserved"), 0xffff);
  f.length = json_uint<std::uint16_t>(j.at("length"), 0xffff);
  return f;
}

// Field covering each bit of the 26-byte frame.
inline std::string_view setup_complete_field_name(std::size_t bit) {
  if (bit >= kSetupCompleteBits) throw Error(Errc::OutOfRange, "bit outside RRC Setup Complete");
  const std::size_t byte = bit / 8;
  switch (byte) {
    case 0: return "msg_type";
    case 1: return (bit % 8) < 4 ? "tid" : "plmn_index";
    case 2: return "establishment_cause";
    case 3: return "registration_type";
    case 12:
    case 13: return "sec_caps";
    case 14: return "nas_msg_type";
    case 15: return "nas_key_set_id";
    case 20:
    case 21: return "ue_caps";
    case 22:
    case 23: return "reserved";
    case 24:
    case 25: return "length";
    default: break;
  }
  if (byte >= 4 && byte <= 11) return "suci";
  return "slice_id";  // 16..19
}

// Rule table, evaluated in order; the first failing rule names the cause.
inline ValidationVerdict validate_setup_complete(const Frame& frame, const RanConfig& config) {
  const auto f = decode_setup_complete(frame);
  if (f.msg_type != kSetupCompleteMsgType) return ValidationVerdict::reject(RejectCause::BadMsgType);
  if (f.length != kSetupCompleteLength) return ValidationVerdict::reject(RejectCause::BadLength);
  if (f.tid != config.expected_tid) return ValidationVerdict::reject(RejectCause::BadTransactionId);
  if (f.plmn_index >= config.plmn_count) return ValidationVerdict::reject(RejectCause::BadPlmn);
  if (!config.valid_causes.contains(f.establishment_cause))
    return ValidationVerdict::reject(RejectCause::BadCause);
  if (!config.valid_reg_types.contains(f.registration_type))
    return ValidationVerdict::reject(RejectCause::BadRegistrationType);
  if (!config.provisioned_sucis.contains(f.suci))
    return ValidationVerdict::reject(RejectCause::UnknownSubscriber);
  const std::uint8_t algos = static_cast<std::uint8_t>(f.sec_caps >> 8);
  if ((algos & 0xf0) == 0 || (algos & 0x0f) == 0)
    return ValidationVerdict::reject(RejectCause::NoSecurityAlgo);
  if (f.nas_msg_type != kRegistrationRequestNasType)
    return ValidationVerdict::reject(RejectCause::BadNasType);
  if (!config.allowed_slices.contains(f.slice_id)) return ValidationVerdict::reject(RejectCause::BadSlice);
  return ValidationVerdict::accept();
}

// ---------------------------------------------------------------------------
// Keystream

// Byte i is byte (i % 8), big-endian, of mix64(key ^ block_offset) where
// block_offset = 8 * (i / 8). XOR-based, so it is an involution and commutes
// with bit flips.
inline Frame keystream_apply(const Frame& frame, std::uint64_t key, bool enabled) {
  if (!enabled) return frame;
  std::vector<std::uint8_t> out(frame.bytes().begin(), frame.bytes().end());
  std::uint64_t block = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 8 == 0) block = mix64(key ^ static_cast<std::uint64_t>(i));
    out[i] ^= static_cast<std::uint8_t>(block >> (56 - 8 * (i % 8)));
  }
  return Frame(std::move(out));
}

// ---------------------------------------------------------------------------
// Message set

struct RrcSetupRequest {
  std::uint32_t ue_id = 0;
  std::uint8_t establishment_cause = 0x03;  // 0x00-0x08
  friend bool operator==(const RrcSetupRequest&, const RrcSetupRequest&) = default;
};
struct RrcSetupComplete {
  Frame frame;
  friend bool operator==(const RrcSetupComplete&, const RrcSetupComplete&) = default;
};
struct AuthenticationResponse {
  std::uint64_t res = 0;
  friend bool operator==(const AuthenticationResponse&, const AuthenticationResponse&) = default;
};
struct SecurityModeComplete {
  friend bool operator==(const SecurityModeComplete&, const SecurityModeComplete&) = default;
};
struct PduSessionEstablishmentRequest {
  std::uint8_t session_id = 1;
  friend bool operator==(const PduSessionEstablishmentRequest&,
                         const PduSessionEstablishmentRequest&) = default;
};

using UplinkMessage = std::variant<RrcSetupRequest, RrcSetupComplete, AuthenticationResponse,
                                   SecurityModeComplete, PduSessionEstablishmentRequest>;

struct RrcSetup {
  std::uint8_t tid = 0;  // 4 bits
  friend bool operator==(const RrcSetup&, const RrcSetup&) = default;
};
struct RrcReject {
  RejectCause cause = RejectCause::Congestion;
  friend bool operator==(const RrcReject&, const RrcReject&) = default;
};
struct AuthenticationRequest {
  std::uint64_t rand = 0;
  friend bool operator==(const AuthenticationRequest&, const AuthenticationRequest&) = default;
};
struct SecurityModeCommand {
  std::uint8_t ciphering_algo = 0;  // 4 bits
  std::uint8_t integrity_algo = 0;  // 4 bits
  friend bool operator==(const SecurityModeCommand&, const SecurityModeCommand&) = default;
};
struct RegistrationAccept {
  friend bool operator==(const RegistrationAccept&, const RegistrationAccept&) = default;
};
struct RegistrationReject {
  RejectCause cause = RejectCause::ProtocolError;
  friend bool operator==(const RegistrationReject&, const RegistrationReject&) = default;
};
struct PduSessionEstablishmentAccept {
  std::uint8_t session_id = 1;
  friend bool operator==(const PduSessionEstablishmentAccept&,
                         const PduSessionEstablishmentAccept&) = default;
};
struct RrcRelease {
  friend bool operator==(const RrcRelease&, const RrcRelease&) = default;
};

using DownlinkMessage =
    std::variant<RrcSetup, RrcReject, AuthenticationRequest, SecurityModeCommand, RegistrationAccept,
                 RegistrationReject, PduSessionEstablishmentAccept, RrcRelease>;

inline constexpr std::array<std::string_view, std::variant_size_v<UplinkMessage>> kUplinkNames{
    "RrcSetupRequest", "RrcSetupComplete", "AuthenticationResponse", "SecurityModeComplete",
    "PduSessionEstablishmentRequest"};

inline constexpr std::array<std::string_view, std::variant_size_v<DownlinkMessage>> kDownlinkNames{
    "RrcSetup",           "RrcReject",          "AuthenticationRequest",
    "SecurityModeCommand", "RegistrationAccept", "RegistrationReject",
    "PduSessionEstablishmentAccept", "RrcRelease"};

inline std::string_view message_name(const UplinkMessage& m) { return kUplinkNames[m.index()]; }
inline std::string_view message_name(const DownlinkMessage& m) { return kDownlinkNames[m.index()]; }

// Wire tags. RrcSetupComplete travels as its raw 26-byte frame (its first
// byte is the RRC message type), every other message is tag + payload.
namespace tag {
inline constexpr std::uint8_t kRrcSetupRequest = 0x01;
inline constexpr std::uint8_t kAuthenticationResponse = 0x03;
inline constexpr std::uint8_t kSecurityModeComplete = 0x04;
inline constexpr std::uint8_t kPduSessionEstablishmentRequest = 0x05;
inline constexpr std::uint8_t kRrcSetup = 0x81;
inline constexpr std::uint8_t kRrcReject = 0x82;
inline constexpr std::uint8_t kAuthenticationRequest = 0x83;
inline constexpr std::uint8_t kSecurityModeCommand = 0x84;
inline constexpr std::uint8_t kRegistrationAccept = 0x85;
inline constexpr std::uint8_t kRegistrationReject = 0x86;
inline constexpr std::uint8_t kPduSessionEstablishmentAccept = 0x87;
inline constexpr std::uint8_t kRrcRelease = 0x88;
}  // namespace tag

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline Frame encode(const UplinkMessage& m) {
  std::vector<std::uint8_t> out;
  std::visit(overloaded{
                 [&](const RrcSetupRequest& r) {
                   out.push_back(tag::kRrcSetupRequest);
                   detail::put_be(out, r.ue_id);
                   out.push_back(r.establishment_cause);
                 },
                 [&](const RrcSetupComplete& r) {
                   out.assign(r.frame.bytes().begin(), r.frame.bytes().end());
                 },
                 [&](const AuthenticationResponse& r) {
                   out.push_back(tag::kAuthenticationResponse);
                   detail::put_be(out, r.res);
                 },
                 [&](const SecurityModeComplete&) { out.push_back(tag::kSecurityModeComplete); },
                 [&](const PduSessionEstablishmentRequest& r) {
                   out.push_back(tag::kPduSessionEstablishmentRequest);
                   out.push_back(r.session_id);
                 },
             },
             m);
  return Frame(std::move(out));
}

inline Frame encode(const DownlinkMessage& m) {
  std::vector<std::uint8_t> out;
  std::visit(overloaded{
                 [&](const RrcSetup& r) {
                   out.push_back(tag::kRrcSetup);
                   out.push_back(r.tid & 0x0f);
                 },
                 [&](const RrcReject& r) {
                   out.push_back(tag::kRrcReject);
                   out.push_back(static_cast<std::uint8_t>(r.cause));
                 },
                 [&](const AuthenticationRequest& r) {
                   out.push_back(tag::kAuthenticationRequest);
                   detail::put_be(out, r.rand);
                 },
                 [&](const SecurityModeCommand& r) {
                   out.push_back(tag::kSecurityModeCommand);
                   out.push_back(static_cast<std::uint8_t>((r.ciphering_algo & 0x0f) << 4 |
                                                           (r.integrity_algo & 0x0f)));
                 },
                 [&](const RegistrationAccept&) { out.push_back(tag::kRegistrationAccept); },
                 [&](const RegistrationReject& r) {
                   out.push_back(tag::kRegistrationReject);
                   out.push_back(static_cast<std::uint8_t>(r.cause));
                 },
                 [&](const PduSessionEstablishmentAccept& r) {
                   out.push_back(tag::kPduSessionEstablishmentAccept);
                   out.push_back(r.session_id);
                 },
                 [&](const RrcRelease&) { out.push_back(tag::kRrcRelease); },
             },
             m);
  return Frame(std::move(out));
}

inline std::size_t wire_size(const UplinkMessage& m) { return encode(m).size(); }
inline std::size_t wire_size(const DownlinkMessage& m) { return encode(m).size(); }

// Structured view used by capture records: {"message": name, ...fields}.
inline Json to_json(const UplinkMessage& m) {
  Json j;
  j["message"] = std::string(message_name(m));
  std::visit(overloaded{
                 [&](const RrcSetupRequest& r) {
                   j["ue_id"] = r.ue_id;
                   j["establishment_cause"] = r.establishment_cause;
                 },
                 [&](const RrcSetupComplete& r) {
                   if (r.frame.size() == kSetupCompleteBytes)
                     j["fields"] = to_json(decode_setup_complete(r.frame));
                   else
                     j["frame_hex"] = r.frame.hex();
                 },
                 [&](const AuthenticationResponse& r) { j["res"] = hex_u64(r.res); },
                 [&](const SecurityModeComplete&) {},
                 [&](const PduSessionEstablishmentRequest& r) { j["session_id"] = r.session_id; },
             },
             m);
  return j;
}

inline Json to_json(const DownlinkMessage& m) {
  Json j;
  j["message"] = std::string(message_name(m));
  std::visit(overloaded{
                 [&](const RrcSetup& r) { j["tid"] = r.tid; },
                 [&](const RrcReject& r) { j["cause"] = std::string(to_string(r.cause)); },
                 [&](const AuthenticationRequest& r) { j["rand"] = hex_u64(r.rand); },
                 [&](const SecurityModeCommand& r) {
                   j["ciphering_algo"] = r.ciphering_algo;
                   j["integrity_algo"] = r.integrity_algo;
                 },
                 [&](const RegistrationAccept&) {},
                 [&](const RegistrationReject& r) { j["cause"] = std::string(to_string(r.cause)); },
                 [&](const PduSessionEstablishmentAccept& r) { j["session_id"] = r.session_id; },
                 [&](const RrcRelease&) {},
             },
             m);
  return j;
}

inline UplinkMessage uplink_from_json(const Json& j) {
  const auto name = j.at("message").get<std::string>();
  if (name == "RrcSetupRequest")
    return RrcSetupRequest{json_uint<std::uint32_t>(j.at("ue_id"), 0xffffffffULL),
                           json_uint<std::uint8_t>(j.at("establishment_cause"), 0xff)};
  if (name == "RrcSetupComplete") {
    if (j.contains("fields"))
      return RrcSetupComplete{encode_setup_complete(setup_complete_fields_from_json(j["fields"]))};
    return RrcSetupComplete{Frame::from_hex(j.at("frame_hex").get<std::string>())};
  }
  if (name == "AuthenticationResponse") return AuthenticationResponse{json_u64(j.at("res"))};
  if (name == "SecurityModeComplete") return SecurityModeComplete{};
  if (name == "PduSessionEstablishmentRequest")
    return PduSessionEstablishmentRequest{json_uint<std::uint8_t>(j.at("session_id"), 0xff)};
  throw Error(Errc::ParseError, "unknown uplink message " + name);
}

inline DownlinkMessage downlink_from_json(const Json& j) {
  const auto name = j.at("message").get<std::string>();
  if (name == "RrcSetup") return RrcSetup{json_uint<std::uint8_t>(j.at("tid"), 0x0f)};
  if (name == "RrcReject") return RrcReject{reject_cause_from_string(j.at("cause").get<std::string>())};
  if (name == "AuthenticationRequest") return AuthenticationRequest{json_u64(j.at("rand"))};
  if (name == "SecurityModeCommand")
    return SecurityModeCommand{json_uint<std::uint8_t>(j.at("ciphering_algo"), 0x0f),
                               json_uint<std::uint8_t>(j.at("integrity_algo"), 0x0f)};
  if (name == "RegistrationAccept") return RegistrationAccept{};
  if (name == "RegistrationReject")
    return RegistrationReject{reject_cause_from_string(j.at("cause").get<std::string>())};
  if (name == "PduSessionEstablishmentAccept")
    return PduSessionEstablishmentAccept{json_uint<std::uint8_t>(j.at("session_id"), 0xff)};
  if (name == "RrcRelease") return RrcRelease{};
  throw Error(Errc::ParseError, "unknown downlink message " + name);
}

}  // namespace soft_tue
