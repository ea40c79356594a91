// TLSH T1 digest construction and scoring.
//
// The Pearson table, bucket salts, quartile coding and difference scoring
// reproduce the public TLSH reference scheme (Trend Micro, released under
// Apache-2.0 OR BSD-3-Clause) so that digests interoperate with it.

#include "alertsieve/tlsh.hpp"

#include <algorithm>
#include <cctype>

namespace alertsieve::tlsh {
namespace {

constexpr std::size_t kBuckets = 256;
constexpr std::size_t kEffectiveBuckets = 128;
constexpr std::size_t kWindow = 5;

constexpr std::uint8_t kPearson[256] = {
    1,   87,  49,  12,  176, 178, 102, 166, 121, 193, 6,   84,  249, 230, 44,  163,
    14,  197, 213, 181, 161, 85,  218, 80,  64,  239, 24,  226, 236, 142, 38,  200,
    110, 177, 104, 103, 141, 253, 255, 50,  77,  101, 81,  18,  45,  96,  31,  222,
    25,  107, 190, 70,  86,  237, 240, 34,  72,  242, 20,  214, 244, 227, 149, 235,
    97,  234, 57,  22,  60,  250, 82,  175, 208, 5,   127, 199, 111, 62,  135, 248,
    174, 169, 211, 58,  66,  154, 106, 195, 245, 171, 17,  187, 182, 179, 0,   243,
    132, 56,  148, 75,  128, 133, 158, 100, 130, 126, 91,  13,  153, 246, 216, 219,
    119, 68,  223, 78,  83,  88,  201, 99,  122, 11,  92,  32,  136, 114, 52,  10,
    138, 30,  48,  183, 156, 35,  61,  26,  143, 74,  251, 94,  129, 162, 63,  152,
    170, 7,   115, 167, 241, 206, 3,   150, 55,  59,  151, 220, 90,  53,  23,  131,
    125, 173, 15,  238, 79,  95,  89,  16,  105, 137, 225, 224, 217, 160, 37,  123,
    118, 73,  2,   157, 46,  116, 9,   145, 134, 228, 207, 212, 202, 215, 69,  229,
    27,  188, 67,  124, 168, 252, 42,  4,   29,  108, 21,  247, 19,  205, 39,  203,
    233, 40,  186, 147, 198, 192, 155, 33,  164, 191, 98,  204, 165, 180, 117, 76,
    140, 36,  210, 172, 41,  54,  159, 8,   185, 232, 113, 196, 231, 47,  146, 120,
    51,  65,  28,  144, 254, 221, 93,  189, 194, 139, 112, 43,  71,  109, 184, 209,
};

// Largest input length mapped to length bucket (9 + i). Inputs of 50..57
// bytes land in bucket 9; shorter inputs are rejected before lookup.
constexpr std::uint32_t kLengthBounds[] = {
    57,       86,       129,      194,      291,      437,      656,      854,
    1110,     1443,     1876,     2439,     3171,     3475,     3823,     4205,
    4626,     5088,     5597,     6157,     6772,     7450,     8195,     9014,
    9916,     10907,    11998,    13198,    14518,    15970,    17567,    19323,
    21256,    23382,    25720,    28292,    31121,    34233,    37656,    41422,
    45564,    50121,    55133,    60646,    66711,    73382,    80721,    88793,
    97672,    107439,   118183,   130002,   143002,   157302,   173032,   190335,
    209369,   230306,   253337,   278670,   306538,   337191,   370911,   408002,
    448802,   493682,   543050,   597356,   657091,   722800,   795081,   874589,
    962048,   1058252,  1164078,  1280486,  1408534,  1549388,  1704327,  1874759,
    2062236,  2268459,  2495305,  2744836,  3019320,  3321252,  3653374,  4018711,
    4420582,  4862641,  5348905,  5883796,  6472176,  7119394,  7831333,  8614467,
    9475909,  10423501, 11465851, 12612437, 13873681, 15261050, 16787154, 18465870,
    20312458, 22343706, 24578077, 27035886, 29739474, 32713425, 35984770, 39583245,
};
constexpr std::uint8_t kFirstLengthBucket = 9;

constexpr std::uint8_t pearson(std::uint8_t salt, std::uint8_t a, std::uint8_t b,
                               std::uint8_t c) {
  return kPearson[kPearson[kPearson[salt ^ a] ^ b] ^ c];
}

constexpr std::uint8_t swap_nibbles(std::uint8_t v) {
  return static_cast<std::uint8_t>(((v & 0x0F) << 4) | ((v & 0xF0) >> 4));
}

// Summed per-bucket code difference for one body byte; a gap of 3 costs 6.
struct BodyDiffTable {
  std::array<std::array<std::uint8_t, 256>, 256> cost{};
  constexpr BodyDiffTable() {
    for (int x = 0; x < 256; ++x) {
      for (int y = 0; y < 256; ++y) {
        int total = 0;
        for (int shift = 0; shift < 8; shift += 2) {
          int d = ((x >> shift) & 3) - ((y >> shift) & 3);
          d = d < 0 ? -d : d;
          total += d == 3 ? 6 : d;
        }
        cost[x][y] = static_cast<std::uint8_t>(total);
      }
    }
  }
};

const BodyDiffTable& body_diff() {
  static const BodyDiffTable table;
  return table;
}

int mod_diff(int x, int y, int range) {
  int dl = x > y ? x - y : y - x;
  int dr = range - dl;
  return std::min(dl, dr);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

Digest Digest::from_components(std::uint8_t checksum, std::uint8_t log_length,
                               std::uint8_t q1_ratio, std::uint8_t q2_ratio,
                               std::span<const std::uint8_t, kBodyBytes> body) {
  std::array<std::uint8_t, kDigestBytes> wire{};
  wire[0] = swap_nibbles(checksum);
  wire[1] = swap_nibbles(log_length);
  wire[2] = static_cast<std::uint8_t>(((q1_ratio & 0x0F) << 4) | (q2_ratio & 0x0F));
  for (std::size_t i = 0; i < kBodyBytes; ++i) wire[3 + kBodyBytes - 1 - i] = body[i];
  return from_wire(wire);
}

std::uint8_t Digest::checksum() const noexcept { return swap_nibbles(wire_[0]); }
std::uint8_t Digest::log_length() const noexcept { return swap_nibbles(wire_[1]); }

std::string Digest::render() const {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(kRenderedLength);
  out += "T1";
  for (auto b : wire_) {
    out += kHex[b >> 4];
    out += kHex[b & 0x0F];
  }
  return out;
}

Digest parse_digest(std::string_view text) {
  if (text.size() != kRenderedLength) {
    throw Error(ErrorCode::MalformedDigest,
                "digest must be " + std::to_string(kRenderedLength) + " characters, got " +
                    std::to_string(text.size()));
  }
  if (text[0] != 'T' || text[1] != '1') {
    throw Error(ErrorCode::MalformedDigest, "digest must start with T1");
  }
  std::array<std::uint8_t, kDigestBytes> wire{};
  for (std::size_t i = 0; i < kDigestBytes; ++i) {
    int hi = hex_value(text[2 + 2 * i]);
    int lo = hex_value(text[3 + 2 * i]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::MalformedDigest, "non-hex character in digest");
    }
    wire[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return Digest::from_wire(wire);
}

std::uint8_t length_bucket(std::size_t length) {
  if (length > kMaxInputLength) {
    throw Error(ErrorCode::InvalidArgument, "input longer than the supported length table");
  }
  const auto* it = std::lower_bound(std::begin(kLengthBounds), std::end(kLengthBounds),
                                    static_cast<std::uint32_t>(length));
  return static_cast<std::uint8_t>(kFirstLengthBucket + (it - std::begin(kLengthBounds)));
}

std::optional<Digest> try_digest(std::span<const std::uint8_t> input, ErrorCode* why) noexcept {
  auto fail = [why](ErrorCode code) -> std::optional<Digest> {
    if (why != nullptr) *why = code;
    return std::nullopt;
  };
  if (input.size() < kMinInputLength) return fail(ErrorCode::InputTooShort);
  if (input.size() > kMaxInputLength) return fail(ErrorCode::InvalidArgument);

  std::array<std::uint32_t, kBuckets> buckets{};
  std::uint8_t checksum = 0;
  std::uint8_t w[kWindow] = {};
  for (std::size_t i = 0; i < input.size(); ++i) {
    // w[0] is the newest byte, w[4] the oldest in the 5-byte window.
    w[4] = w[3];
    w[3] = w[2];
    w[2] = w[1];
    w[1] = w[0];
    w[0] = input[i];
    if (i < kWindow - 1) continue;
    checksum = pearson(1, w[0], w[1], checksum);
    ++buckets[pearson(49, w[0], w[1], w[2])];
    ++buckets[pearson(12, w[0], w[1], w[3])];
    ++buckets[pearson(178, w[0], w[2], w[3])];
    ++buckets[pearson(166, w[0], w[2], w[4])];
    ++buckets[pearson(84, w[0], w[1], w[4])];
    ++buckets[pearson(230, w[0], w[3], w[4])];
  }

  std::array<std::uint32_t, kEffectiveBuckets> sorted{};
  std::copy_n(buckets.begin(), kEffectiveBuckets, sorted.begin());
  std::sort(sorted.begin(), sorted.end());
  const std::uint32_t q1 = sorted[kEffectiveBuckets / 4 - 1];
  const std::uint32_t q2 = sorted[kEffectiveBuckets / 2 - 1];
  const std::uint32_t q3 = sorted[kEffectiveBuckets - kEffectiveBuckets / 4 - 1];

  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < kEffectiveBuckets; ++i) nonzero += buckets[i] > 0 ? 1 : 0;
  if (nonzero <= kEffectiveBuckets / 2 || q3 == 0) {
    return fail(ErrorCode::InsufficientComplexity);
  }

  std::array<std::uint8_t, kBodyBytes> body{};
  for (std::size_t i = 0; i < kBodyBytes; ++i) {
    std::uint8_t code = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const std::uint32_t k = buckets[4 * i + j];
      std::uint8_t level = 0;
      if (q3 < k) {
        level = 3;
      } else if (q2 < k) {
        level = 2;
      } else if (q1 < k) {
        level = 1;
      }
      code = static_cast<std::uint8_t>(code | (level << (2 * j)));
    }
    body[i] = code;
  }

  // Single-precision quotient, truncated, exactly as the reference computes it.
  const auto ratio = [q3](std::uint32_t q) {
    const auto scaled = static_cast<float>(q * 100u) / static_cast<float>(q3);
    return static_cast<std::uint8_t>(static_cast<std::uint32_t>(scaled) % 16);
  };
  const std::uint8_t q1_ratio = ratio(q1);
  const std::uint8_t q2_ratio = ratio(q2);
  return Digest::from_components(checksum, length_bucket(input.size()), q1_ratio, q2_ratio,
                                 body);
}

std::optional<Digest> try_digest(std::string_view input, ErrorCode* why) noexcept {
  return try_digest(std::span(reinterpret_cast<const std::uint8_t*>(input.data()), input.size()),
                    why);
}

Digest digest(std::span<const std::uint8_t> input) {
  ErrorCode why = ErrorCode::InvalidArgument;
  if (auto d = try_digest(input, &why)) return *d;
  switch (why) {
    case ErrorCode::InputTooShort:
      throw Error(why, "TLSH needs at least 50 bytes, got " + std::to_string(input.size()));
    case ErrorCode::InsufficientComplexity:
      throw Error(why, "input has too little byte diversity for a TLSH digest");
    default:
      throw Error(why, "input longer than the supported length table");
  }
}

Digest digest(std::string_view input) {
  return digest(std::span(reinterpret_cast<const std::uint8_t*>(input.data()), input.size()));
}

int distance(const Digest& a, const Digest& b) noexcept {
  const auto& x = a.wire();
  const auto& y = b.wire();
  int score = 0;

  const int ldiff = mod_diff(swap_nibbles(x[1]), swap_nibbles(y[1]), 256);
  score += ldiff <= 1 ? ldiff : ldiff * 12;

  const int q1diff = mod_diff(x[2] >> 4, y[2] >> 4, 16);
  score += q1diff <= 1 ? q1diff : (q1diff - 1) * 12;
  const int q2diff = mod_diff(x[2] & 0x0F, y[2] & 0x0F, 16);
  score += q2diff <= 1 ? q2diff : (q2diff - 1) * 12;

  if (x[0] != y[0]) ++score;

  const auto& table = body_diff().cost;
  for (std::size_t i = 3; i < kDigestBytes; ++i) score += table[x[i]][y[i]];
  return score;
}

}  // namespace alertsieve::tlsh
