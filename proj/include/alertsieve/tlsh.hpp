#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "alertsieve/error.hpp"

/// TLSH similarity digests, T1 variant (128 buckets, 1-byte checksum).
///
/// Digests and difference scores are bit-compatible with the public TLSH
/// reference implementation, so digests rendered here can be compared with
/// ones produced by any other TLSH tool.
namespace alertsieve::tlsh {

inline constexpr std::size_t kMinInputLength = 50;
inline constexpr std::size_t kBodyBytes = 32;
inline constexpr std::size_t kDigestBytes = 3 + kBodyBytes;
inline constexpr std::size_t kRenderedLength = 2 + 2 * kDigestBytes;

/// Longest input whose length bucket is known to match the reference table.
inline constexpr std::size_t kMaxInputLength = 39583245;

/// A 35-byte digest.
///
/// Bytes are held in rendering order (nibble-swapped header, reversed body),
/// so the defaulted comparison orders digests exactly like their "T1..."
/// strings do.
class Digest {
public:
  Digest() = default;

  static Digest from_components(std::uint8_t checksum, std::uint8_t log_length,
                                std::uint8_t q1_ratio, std::uint8_t q2_ratio,
                                std::span<const std::uint8_t, kBodyBytes> body);
  static Digest from_wire(const std::array<std::uint8_t, kDigestBytes>& wire) {
    Digest d;
    d.wire_ = wire;
    return d;
  }

  [[nodiscard]] std::uint8_t checksum() const noexcept;
  [[nodiscard]] std::uint8_t log_length() const noexcept;
  [[nodiscard]] std::uint8_t q1_ratio() const noexcept { return wire_[2] >> 4; }
  [[nodiscard]] std::uint8_t q2_ratio() const noexcept { return wire_[2] & 0x0F; }
  /// Bucket code byte i (4 two-bit codes), in reference order.
  [[nodiscard]] std::uint8_t body_byte(std::size_t i) const noexcept {
    return wire_[3 + kBodyBytes - 1 - i];
  }

  [[nodiscard]] const std::array<std::uint8_t, kDigestBytes>& wire() const noexcept {
    return wire_;
  }

  /// "T1" followed by 70 uppercase hex characters.
  [[nodiscard]] std::string render() const;

  auto operator<=>(const Digest&) const = default;

private:
  std::array<std::uint8_t, kDigestBytes> wire_{};
};

/// Parses a rendering. Accepts upper- or lowercase hex; rejects anything that
/// is not exactly "T1" + 70 hex characters with MalformedDigest.
[[nodiscard]] Digest parse_digest(std::string_view text);

/// Throws Error(InputTooShort) below 50 bytes and
/// Error(InsufficientComplexity) when at most half of the buckets are hit.
[[nodiscard]] Digest digest(std::span<const std::uint8_t> input);
[[nodiscard]] Digest digest(std::string_view input);

/// Non-throwing variant for hot paths. On failure `why` receives the code.
[[nodiscard]] std::optional<Digest> try_digest(std::span<const std::uint8_t> input,
                                               ErrorCode* why = nullptr) noexcept;
[[nodiscard]] std::optional<Digest> try_digest(std::string_view input,
                                               ErrorCode* why = nullptr) noexcept;

/// Reference difference score including the length component.
[[nodiscard]] int distance(const Digest& a, const Digest& b) noexcept;

/// Quantized log length for an input of `length` bytes.
[[nodiscard]] std::uint8_t length_bucket(std::size_t length);

}  // namespace alertsieve::tlsh

template <>
struct std::hash<alertsieve::tlsh::Digest> {
  std::size_t operator()(const alertsieve::tlsh::Digest& d) const noexcept {
    // FNV-1a over the wire bytes.
    std::uint64_t h = 1469598103934665603ULL;
    for (auto b : d.wire()) {
      h ^= b;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};
