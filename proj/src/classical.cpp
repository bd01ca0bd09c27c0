#include "rdsc/classical.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

namespace rdsc {

// ---------------------------------------------------------------- GF(2^m)

namespace {

unsigned default_poly(unsigned m) {
  switch (m) {
    case 3: return 0xB;
    case 4: return 0x13;
    case 5: return 0x25;
    case 6: return 0x43;
    case 7: return 0x89;
    case 8: return 0x11D;
    default: throw ConfigError("rs.m: must lie in [3, 8], got " + std::to_string(m));
  }
}

}  // namespace

GaloisField::GaloisField(unsigned m, unsigned primitive_poly)
    : m_(m), size_(1u << m), poly_(primitive_poly ? primitive_poly : default_poly(m)) {
  if (m < 3 || m > 8) throw ConfigError("rs.m: must lie in [3, 8], got " + std::to_string(m));
  exp_.assign(2 * size_, 0);
  log_.assign(size_, 0);
  unsigned x = 1;
  for (unsigned i = 0; i + 1 < size_; ++i) {
    exp_[i] = x;
    if (i > 0 && x == 1) throw ConfigError("rs.primitive_poly: not primitive");
    log_[x] = i;
    x <<= 1;
    if (x & size_) x ^= poly_;
  }
  if (x != 1) throw ConfigError("rs.primitive_poly: not primitive");
  for (unsigned i = size_ - 1; i < 2 * size_; ++i) exp_[i] = exp_[i - (size_ - 1)];
}

unsigned GaloisField::mul(unsigned a, unsigned b) const {
  if (a == 0 || b == 0) return 0;
  return exp_[log_[a] + log_[b]];
}

unsigned GaloisField::div(unsigned a, unsigned b) const {
  if (b == 0) throw DomainError("GF division by zero");
  if (a == 0) return 0;
  return exp_[log_[a] + (size_ - 1) - log_[b]];
}

unsigned GaloisField::inv(unsigned a) const { return div(1, a); }

unsigned GaloisField::alpha_pow(int e) const {
  const int order = int(size_ - 1);
  return exp_[std::size_t(((e % order) + order) % order)];
}

unsigned GaloisField::log(unsigned a) const {
  if (a == 0) throw DomainError("GF log of zero");
  return log_[a];
}

// ---------------------------------------------------------------- Reed-Solomon

void RsConfig::validate() const {
  if (m < 3 || m > 8) throw ConfigError("rs.m: must lie in [3, 8]");
  if (n != (1u << m) - 1) throw ConfigError("rs.n: must equal 2^m - 1");
  if (k == 0 || k >= n) throw ConfigError("rs.k: must satisfy 0 < k < n");
  if ((n - k) % 2 != 0) throw ConfigError("rs.k: n - k must be even");
}

ReedSolomon::ReedSolomon(RsConfig cfg) : cfg_(cfg), gf_((cfg.validate(), cfg.m)) {
  gen_ = {1};
  for (unsigned j = 1; j <= cfg_.n - cfg_.k; ++j) {
    const unsigned root = gf_.alpha_pow(int(j));
    std::vector<unsigned> next(gen_.size() + 1, 0);
    for (std::size_t i = 0; i < gen_.size(); ++i) {
      next[i + 1] ^= gen_[i];
      next[i] ^= gf_.mul(gen_[i], root);
    }
    gen_ = std::move(next);
  }
}

std::vector<unsigned> ReedSolomon::encode(std::span<const unsigned> message) const {
  const unsigned n = cfg_.n, k = cfg_.k, r = n - k;
  if (message.size() != k) throw ShapeError("rs_encode: message length must be " + std::to_string(k));
  std::vector<unsigned> cw(n, 0);
  for (unsigned j = 0; j < k; ++j) {
    if (message[j] >= gf_.size()) throw DomainError("rs_encode: symbol outside the field");
    cw[r + j] = message[j];
  }
  // remainder of m(x) x^r divided by the monic generator
  std::vector<unsigned> rem(cw);
  for (unsigned d = n - 1; d >= r; --d) {
    const unsigned c = rem[d];
    if (c != 0)
      for (unsigned i = 0; i <= r; ++i) rem[d - r + i] ^= gf_.mul(c, gen_[i]);
    if (d == r) break;
  }
  for (unsigned i = 0; i < r; ++i) cw[i] = rem[i];
  return cw;
}

std::vector<unsigned> ReedSolomon::syndromes(std::span<const unsigned> word) const {
  const unsigned r = cfg_.n - cfg_.k;
  std::vector<unsigned> s(r, 0);
  for (unsigned j = 0; j < r; ++j) {
    const unsigned x = gf_.alpha_pow(int(j + 1));
    unsigned acc = 0;
    for (std::size_t i = word.size(); i-- > 0;) acc = gf_.mul(acc, x) ^ word[i];
    s[j] = acc;
  }
  return s;
}

RsDecodeResult ReedSolomon::decode(std::span<const unsigned> received) const {
  const unsigned n = cfg_.n, k = cfg_.k, r = n - k;
  if (received.size() != n) throw ShapeError("rs_decode: received length must be " + std::to_string(n));
  RsDecodeResult out;
  std::vector<unsigned> word(received.begin(), received.end());
  for (auto& s : word) s &= gf_.size() - 1;
  auto take_message = [&] { out.message.assign(word.begin() + r, word.end()); };

  const auto syn = syndromes(word);
  if (std::all_of(syn.begin(), syn.end(), [](unsigned s) { return s == 0; })) {
    take_message();
    return out;
  }

  // Berlekamp-Massey
  std::vector<unsigned> lambda{1}, prev{1};
  std::size_t L = 0, shift = 1;
  unsigned b = 1;
  for (std::size_t step = 0; step < r; ++step) {
    unsigned d = syn[step];
    for (std::size_t i = 1; i <= L && i < lambda.size(); ++i) d ^= gf_.mul(lambda[i], syn[step - i]);
    if (d == 0) {
      ++shift;
      continue;
    }
    const unsigned coef = gf_.div(d, b);
    std::vector<unsigned> next = lambda;
    if (next.size() < prev.size() + shift) next.resize(prev.size() + shift, 0);
    for (std::size_t i = 0; i < prev.size(); ++i) next[i + shift] ^= gf_.mul(coef, prev[i]);
    if (2 * L <= step) {
      prev = lambda;
      L = step + 1 - L;
      b = d;
      shift = 1;
    } else {
      ++shift;
    }
    lambda = std::move(next);
  }
  while (lambda.size() > 1 && lambda.back() == 0) lambda.pop_back();

  auto fail = [&] {
    out.ok = false;
    out.corrected = 0;
    word.assign(received.begin(), received.end());
    for (auto& s : word) s &= gf_.size() - 1;
    take_message();
    return out;
  };
  if (L > cfg_.t() || lambda.size() != L + 1) return fail();

  // Chien search: position i is in error when lambda(alpha^-i) = 0
  std::vector<unsigned> positions;
  for (unsigned i = 0; i < n; ++i) {
    const unsigned x = gf_.alpha_pow(-int(i));
    unsigned acc = 0;
    for (std::size_t j = lambda.size(); j-- > 0;) acc = gf_.mul(acc, x) ^ lambda[j];
    if (acc == 0) positions.push_back(i);
  }
  if (positions.size() != L) return fail();

  // Forney: omega = S(x) lambda(x) mod x^r
  std::vector<unsigned> omega(r, 0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < lambda.size() && i + j < r; ++j) omega[i + j] ^= gf_.mul(syn[i], lambda[j]);
  for (unsigned pos : positions) {
    const unsigned xinv = gf_.alpha_pow(-int(pos));
    unsigned num = 0;
    for (std::size_t j = omega.size(); j-- > 0;) num = gf_.mul(num, xinv) ^ omega[j];
    unsigned den = 0;  // formal derivative: odd-degree terms only
    for (std::size_t j = lambda.size(); j-- > 0;) {
      den = gf_.mul(den, xinv);
      if (j % 2 == 1) den ^= lambda[j];
    }
    // den accumulated lambda_j x^j for odd j; divide once by x to get x^(j-1)
    den = gf_.div(den, xinv);
    if (den == 0) return fail();
    word[pos] ^= gf_.div(num, den);
  }
  const auto check = syndromes(word);
  if (!std::all_of(check.begin(), check.end(), [](unsigned s) { return s == 0; })) return fail();
  out.corrected = positions.size();
  take_message();
  return out;
}

// ---------------------------------------------------------------- Huffman

HuffmanTable HuffmanTable::from_frequencies(const std::array<std::uint64_t, 257>& freq, bool with_escape) {
  std::array<std::uint64_t, 257> w = freq;
  w[kHuffmanEscape] = with_escape ? std::max<std::uint64_t>(1, freq[kHuffmanEscape]) : 0;

  struct Item {
    std::uint64_t weight;
    std::size_t order;
    int node;
  };
  auto cmp = [](const Item& a, const Item& b) { return std::tie(a.weight, a.order) > std::tie(b.weight, b.order); };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);

  struct Build {
    int left = -1, right = -1, symbol = -1;
  };
  std::vector<Build> nodes;
  for (unsigned s = 0; s < 257; ++s)
    if (w[s] > 0) {
      nodes.push_back({-1, -1, int(s)});
      heap.push({w[s], nodes.size() - 1, int(nodes.size() - 1)});
    }
  if (nodes.empty()) throw ShapeError("huffman: empty alphabet");

  HuffmanTable t;
  t.codes_.assign(257, {});
  if (nodes.size() == 1) {
    t.codes_[std::size_t(nodes[0].symbol)] = {0};
    t.build_trie();
    return t;
  }
  while (heap.size() > 1) {
    const Item a = heap.top();
    heap.pop();
    const Item b = heap.top();
    heap.pop();
    nodes.push_back({a.node, b.node, -1});
    heap.push({a.weight + b.weight, nodes.size() - 1, int(nodes.size() - 1)});
  }
  // iterative walk assigning 0 to the left branch
  std::vector<std::pair<int, Bits>> stack{{heap.top().node, {}}};
  while (!stack.empty()) {
    auto [id, prefix] = std::move(stack.back());
    stack.pop_back();
    const Build& nd = nodes[std::size_t(id)];
    if (nd.symbol >= 0) {
      t.codes_[std::size_t(nd.symbol)] = prefix;
      continue;
    }
    Bits l = prefix, r = prefix;
    l.push_back(0);
    r.push_back(1);
    stack.emplace_back(nd.left, std::move(l));
    stack.emplace_back(nd.right, std::move(r));
  }
  t.build_trie();
  return t;
}

void HuffmanTable::build_trie() {
  trie_.assign(1, Node{});
  for (unsigned s = 0; s < 257; ++s) {
    const Bits& code = codes_[s];
    if (code.empty()) continue;
    std::size_t cur = 0;
    for (std::uint8_t bit : code) {
      if (trie_[cur].child[bit] < 0) {
        trie_[cur].child[bit] = int(trie_.size());
        trie_.push_back(Node{});
      }
      cur = std::size_t(trie_[cur].child[bit]);
    }
    trie_[cur].symbol = int(s);
  }
}

std::array<std::uint64_t, 257> byte_frequencies(const std::vector<std::string>& lines) {
  std::array<std::uint64_t, 257> f{};
  for (const auto& l : lines)
    for (unsigned char c : l) ++f[c];
  return f;
}

HuffmanTable HuffmanTable::from_corpus(const std::vector<std::string>& lines) {
  return from_frequencies(byte_frequencies(lines), true);
}

Bits HuffmanTable::encode(const std::string& bytes) const {
  Bits out;
  for (unsigned char c : bytes) {
    const Bits& code = codes_[c];
    if (!code.empty()) {
      out.insert(out.end(), code.begin(), code.end());
      continue;
    }
    if (!has_escape()) throw CodecError("huffman_encode: byte " + std::to_string(unsigned(c)) + " has no codeword");
    const Bits& esc = codes_[kHuffmanEscape];
    out.insert(out.end(), esc.begin(), esc.end());
    for (int b = 7; b >= 0; --b) out.push_back(std::uint8_t((c >> b) & 1));
  }
  return out;
}

HuffmanTable::Lenient HuffmanTable::decode_lenient(std::span<const std::uint8_t> bits) const {
  Lenient out;
  std::size_t i = 0;
  while (i < bits.size()) {
    std::size_t cur = 0;
    while (trie_[cur].symbol < 0) {
      if (i >= bits.size() || bits[i] > 1 || trie_[cur].child[bits[i]] < 0) {
        out.error = true;
        out.text += kReplacementMarker;
        return out;
      }
      cur = std::size_t(trie_[cur].child[bits[i++]]);
    }
    const int sym = trie_[cur].symbol;
    if (sym != int(kHuffmanEscape)) {
      out.text.push_back(char(sym));
      continue;
    }
    if (i + 8 > bits.size()) {
      out.error = true;
      out.text += kReplacementMarker;
      return out;
    }
    unsigned c = 0;
    for (int b = 0; b < 8; ++b) c = (c << 1) | (bits[i++] & 1u);
    out.text.push_back(char(c));
  }
  return out;
}

std::string HuffmanTable::decode(std::span<const std::uint8_t> bits) const {
  auto r = decode_lenient(bits);
  if (r.error) throw CodecError("huffman_decode: invalid or truncated bitstream");
  return r.text;
}

double HuffmanTable::average_length(const std::array<std::uint64_t, 257>& freq) const {
  double bits = 0.0, total = 0.0;
  for (unsigned s = 0; s < 257; ++s) {
    if (freq[s] == 0) continue;
    const double len = codes_[s].empty() ? double(codes_[kHuffmanEscape].size() + 8) : double(codes_[s].size());
    bits += double(freq[s]) * len;
    total += double(freq[s]);
  }
  if (total == 0) throw ShapeError("average_length: empty frequency table");
  return bits / total;
}

double entropy_bits(const std::array<std::uint64_t, 257>& freq) {
  double total = 0.0;
  for (auto f : freq) total += double(f);
  if (total == 0) throw ShapeError("entropy_bits: empty frequency table");
  double h = 0.0;
  for (auto f : freq)
    if (f > 0) {
      const double p = double(f) / total;
      h -= p * std::log2(p);
    }
  return h;
}

// ---------------------------------------------------------------- 64-QAM

namespace {

unsigned gray_to_index(unsigned g) {
  unsigned b = g;
  for (unsigned s = 1; s < 8; s <<= 1) b ^= b >> s;
  return b;
}

double level(unsigned gray3) { return (2.0 * double(gray_to_index(gray3)) - 7.0) / std::sqrt(42.0); }

unsigned slice(double v) {
  const double scaled = v * std::sqrt(42.0);
  const int idx = std::clamp(int(std::lround((scaled + 7.0) / 2.0)), 0, 7);
  return unsigned(idx) ^ (unsigned(idx) >> 1);  // index -> Gray label
}

}  // namespace

const std::array<cplx, 64>& qam64_constellation() {
  static const std::array<cplx, 64> points = [] {
    std::array<cplx, 64> p{};
    for (unsigned label = 0; label < 64; ++label) p[label] = cplx(level(label >> 3), level(label & 7));
    return p;
  }();
  return points;
}

std::vector<cplx> qam64_modulate(std::span<const std::uint8_t> bits) {
  const auto& pts = qam64_constellation();
  std::vector<cplx> out((bits.size() + 5) / 6);
  for (std::size_t s = 0; s < out.size(); ++s) {
    unsigned label = 0;
    for (std::size_t b = 0; b < 6; ++b) {
      const std::size_t i = 6 * s + b;
      label = (label << 1) | (i < bits.size() ? (bits[i] & 1u) : 0u);
    }
    out[s] = pts[label];
  }
  return out;
}

Bits qam64_demodulate(std::span<const cplx> symbols) {
  Bits out;
  out.reserve(symbols.size() * 6);
  for (const cplx& y : symbols) {
    const unsigned label = (slice(y.real()) << 3) | slice(y.imag());
    for (int b = 5; b >= 0; --b) out.push_back(std::uint8_t((label >> b) & 1));
  }
  return out;
}

double qam64_ser_approximation(double snr_linear) {
  const double arg = std::sqrt(3.0 * snr_linear / 63.0);
  return 2.0 * (1.0 - 1.0 / 8.0) * 0.5 * std::erfc(arg / std::sqrt(2.0));
}

// ---------------------------------------------------------------- chain

std::vector<unsigned> bits_to_symbols(std::span<const std::uint8_t> bits, unsigned m) {
  std::vector<unsigned> out((bits.size() + m - 1) / m, 0);
  for (std::size_t s = 0; s < out.size(); ++s)
    for (unsigned b = 0; b < m; ++b) {
      const std::size_t i = s * m + b;
      out[s] = (out[s] << 1) | (i < bits.size() ? (bits[i] & 1u) : 0u);
    }
  return out;
}

Bits symbols_to_bits(std::span<const unsigned> symbols, unsigned m) {
  Bits out;
  out.reserve(symbols.size() * m);
  for (unsigned s : symbols)
    for (int b = int(m) - 1; b >= 0; --b) out.push_back(std::uint8_t((s >> b) & 1));
  return out;
}

ClassicalChain::ClassicalChain(HuffmanTable table, RsConfig rs) : table_(std::move(table)), rs_(rs) {}

ClassicalResult ClassicalChain::transmit(const std::string& sentence, ChannelKind kind, double snr_db,
                                         std::mt19937_64& rng) const {
  const RsConfig& rc = rs_.config();
  ClassicalResult res;
  const Bits src = table_.encode(sentence);
  if (src.empty()) return res;

  auto syms = bits_to_symbols(src, rc.m);
  const std::size_t blocks = (syms.size() + rc.k - 1) / rc.k;
  syms.resize(blocks * rc.k, 0);
  std::vector<unsigned> coded;
  coded.reserve(blocks * rc.n);
  for (std::size_t b = 0; b < blocks; ++b) {
    auto cw = rs_.encode(std::span<const unsigned>(syms).subspan(b * rc.k, rc.k));
    coded.insert(coded.end(), cw.begin(), cw.end());
  }
  const Bits coded_bits = symbols_to_bits(coded, rc.m);
  const auto tx = qam64_modulate(coded_bits);

  const auto pass = pass_through_channel(tx, kind, snr_to_noise_var(snr_db, 1.0), rng);
  Bits rx_bits = qam64_demodulate(pass.equalized);
  rx_bits.resize(coded_bits.size());
  const auto rx_syms = bits_to_symbols(rx_bits, rc.m);

  std::vector<unsigned> message;
  message.reserve(blocks * rc.k);
  for (std::size_t b = 0; b < blocks; ++b) {
    auto d = rs_.decode(std::span<const unsigned>(rx_syms).subspan(b * rc.n, rc.n));
    res.rs_failures += d.ok ? 0 : 1;
    message.insert(message.end(), d.message.begin(), d.message.end());
  }
  res.rs_blocks = blocks;
  Bits msg_bits = symbols_to_bits(message, rc.m);
  msg_bits.resize(src.size());
  auto dec = table_.decode_lenient(msg_bits);
  res.text = std::move(dec.text);
  res.huffman_error = dec.error;
  return res;
}

}  // namespace rdsc
