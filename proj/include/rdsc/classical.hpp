#pragma once

// Conventional chain: Huffman source coding, Reed-Solomon channel coding over
// GF(2^m) and Gray-mapped 64-QAM, sent through the channel module.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdsc/channel.hpp"

namespace rdsc {

using Bits = std::vector<std::uint8_t>;  // one bit per element

class CodecError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- GF(2^m)

class GaloisField {
 public:
  // m in [3, 8]; the primitive polynomial defaults to a standard choice.
  explicit GaloisField(unsigned m, unsigned primitive_poly = 0);

  unsigned m() const { return m_; }
  unsigned size() const { return size_; }  // 2^m
  unsigned primitive_poly() const { return poly_; }

  static unsigned add(unsigned a, unsigned b) { return a ^ b; }
  unsigned mul(unsigned a, unsigned b) const;
  unsigned div(unsigned a, unsigned b) const;  // throws DomainError on b == 0
  unsigned inv(unsigned a) const;
  unsigned alpha_pow(int e) const;  // alpha^e, any integer e
  unsigned log(unsigned a) const;   // throws DomainError on 0

 private:
  unsigned m_, size_, poly_;
  std::vector<unsigned> exp_, log_;
};

// ---------------------------------------------------------------- Reed-Solomon

struct RsConfig {
  unsigned m = 4;
  unsigned n = 15;
  unsigned k = 11;

  unsigned t() const { return (n - k) / 2; }
  void validate() const;
};

struct RsDecodeResult {
  std::vector<unsigned> message;
  bool ok = true;             // false when the error pattern was not correctable
  std::size_t corrected = 0;  // symbol errors fixed
};

class ReedSolomon {
 public:
  explicit ReedSolomon(RsConfig cfg);

  const RsConfig& config() const { return cfg_; }
  const GaloisField& field() const { return gf_; }
  // Generator coefficients, lowest degree first; roots alpha^1 .. alpha^(n-k).
  const std::vector<unsigned>& generator() const { return gen_; }

  // Systematic codeword, element i the coefficient of x^i: parity in [0, n-k),
  // message in [n-k, n).
  std::vector<unsigned> encode(std::span<const unsigned> message) const;
  // Berlekamp-Massey, Chien search and Forney. On failure the systematic part
  // of the received word is returned unchanged and ok is false.
  RsDecodeResult decode(std::span<const unsigned> received) const;
  std::vector<unsigned> syndromes(std::span<const unsigned> word) const;

 private:
  RsConfig cfg_;
  GaloisField gf_;
  std::vector<unsigned> gen_;
};

// ---------------------------------------------------------------- Huffman

inline constexpr unsigned kHuffmanEscape = 256;

class HuffmanTable {
 public:
  // Symbols with nonzero weight get a codeword. With `with_escape`, symbol
  // 256 is added (weight 1) and bytes without a codeword are sent as escape
  // followed by 8 raw bits.
  static HuffmanTable from_frequencies(const std::array<std::uint64_t, 257>& freq, bool with_escape);
  // Byte frequencies of the corpus lines, with escape.
  static HuffmanTable from_corpus(const std::vector<std::string>& lines);

  const std::vector<Bits>& codes() const { return codes_; }  // 257 entries, empty = no codeword
  bool has_escape() const { return !codes_[kHuffmanEscape].empty(); }

  Bits encode(const std::string& bytes) const;  // throws CodecError on an unknown byte without escape
  std::string decode(std::span<const std::uint8_t> bits) const;  // throws CodecError on invalid or truncated input

  struct Lenient {
    std::string text;
    bool error = false;
  };
  // Decodes up to the first invalid or truncated codeword; on error the text
  // ends with the replacement marker.
  Lenient decode_lenient(std::span<const std::uint8_t> bits) const;

  // Weighted mean codeword length (bits per byte) over a frequency table.
  double average_length(const std::array<std::uint64_t, 257>& freq) const;

 private:
  struct Node {
    int child[2] = {-1, -1};
    int symbol = -1;
  };
  std::vector<Bits> codes_;
  std::vector<Node> trie_;

  void build_trie();
};

inline constexpr const char* kReplacementMarker = "\xEF\xBF\xBD";  // U+FFFD

std::array<std::uint64_t, 257> byte_frequencies(const std::vector<std::string>& lines);
// Shannon entropy in bits per symbol of a frequency table.
double entropy_bits(const std::array<std::uint64_t, 257>& freq);

// ---------------------------------------------------------------- 64-QAM

// Point for each 6-bit label: bits 0-2 Gray-index the in-phase level, bits
// 3-5 the quadrature level; levels {-7, ..., 7} / sqrt(42).
const std::array<cplx, 64>& qam64_constellation();

// Zero-pads to a multiple of 6 bits.
std::vector<cplx> qam64_modulate(std::span<const std::uint8_t> bits);
// Nearest-point hard decisions, 6 bits per symbol.
Bits qam64_demodulate(std::span<const cplx> symbols);

// 2 (1 - 1/sqrt(64)) Q(sqrt(3 snr / 63)), snr linear Es/N0.
double qam64_ser_approximation(double snr_linear);

// ---------------------------------------------------------------- chain

struct ClassicalResult {
  std::string text;
  std::size_t rs_blocks = 0;
  std::size_t rs_failures = 0;
  bool huffman_error = false;
};

class ClassicalChain {
 public:
  ClassicalChain(HuffmanTable table, RsConfig rs);

  const HuffmanTable& huffman() const { return table_; }
  const ReedSolomon& rs() const { return rs_; }

  // bytes -> Huffman -> RS blocks -> 64-QAM -> channel + equalization ->
  // demodulation -> RS decode -> Huffman decode. One channel frame per
  // sentence; the receiver knows the Huffman bit count.
  ClassicalResult transmit(const std::string& sentence, ChannelKind kind, double snr_db, std::mt19937_64& rng) const;

 private:
  HuffmanTable table_;
  ReedSolomon rs_;
};

// Packs bits MSB first into m-bit symbols, zero-padding the last one.
std::vector<unsigned> bits_to_symbols(std::span<const std::uint8_t> bits, unsigned m);
Bits symbols_to_bits(std::span<const unsigned> symbols, unsigned m);

}  // namespace rdsc
