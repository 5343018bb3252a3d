#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vigtext/embed.hpp"
#include "vigtext/error.hpp"

namespace vigtext {

namespace {

constexpr std::string_view kMagic = "VGFX1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void FixtureStore::insert(const Digest& key, const EmbeddingVector& value) {
  if (value.size() != dim_) {
    throw Error(Errc::kDimensionMismatch, "fixture vector has dim " + std::to_string(value.size()) +
                                              ", store dim is " + std::to_string(dim_));
  }
  const auto [it, inserted] = records_.emplace(key, value);
  if (!inserted && it->second != value) {
    throw Error(Errc::kMalformed, "conflicting fixture records for digest " + to_hex(key));
  }
}

const EmbeddingVector& FixtureStore::lookup(const Digest& key) const {
  const auto it = records_.find(key);
  if (it == records_.end()) throw Error(Errc::kNotFound, "no fixture record for digest " + to_hex(key));
  return it->second;
}

std::string FixtureStore::serialize() const {
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(dim_));
  for (const auto& [key, value] : records_) {
    out.append(reinterpret_cast<const char*>(key.data()), key.size());
    for (int i = 0; i < dim_; ++i) put_f64(out, value(i));
  }
  return out;
}

FixtureStore FixtureStore::parse(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw Error(Errc::kMalformed, "not a VGFX1 fixture");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto dim = static_cast<std::uint32_t>(get_le(p + kMagic.size(), 4));
  if (dim == 0 || dim > (1u << 20)) throw Error(Errc::kMalformed, "fixture dim out of range");
  FixtureStore store(static_cast<int>(dim));
  const std::size_t record = 32 + static_cast<std::size_t>(dim) * 8;
  const std::size_t body = bytes.size() - kMagic.size() - 4;
  if (body % record != 0) {
    throw Error(Errc::kMalformed, "fixture body is not a whole number of " + std::to_string(dim) + "-dim records");
  }
  for (std::size_t off = kMagic.size() + 4; off < bytes.size(); off += record) {
    Digest key{};
    std::memcpy(key.data(), p + off, key.size());
    EmbeddingVector v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      v(i) = std::bit_cast<double>(get_le(p + off + 32 + 8 * i, 8));
      if (!std::isfinite(v(i))) throw Error(Errc::kMalformed, "non-finite value in fixture");
    }
    store.insert(key, v);
  }
  return store;
}

FixtureStore FixtureStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, "cannot open fixture " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse(bytes);
}

void FixtureStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write fixture " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FixtureProvider::FixtureProvider(FixtureStore images, FixtureStore tokens)
    : images_(std::move(images)), tokens_(std::move(tokens)) {
  id_ = "fixture:" + sha256_hex(images_.serialize()).substr(0, 16) + ":" +
        sha256_hex(tokens_.serialize()).substr(0, 16);
}

std::vector<EmbeddingVector> FixtureProvider::embed_images(std::span<const RasterImage> images) const {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(images_.lookup(image_digest(img)));
  return out;
}

std::vector<EmbeddingVector> FixtureProvider::embed_tokens(std::span<const std::string> tokens) const {
  std::vector<EmbeddingVector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(tokens_.lookup(token_digest(t)));
  return out;
}

}  // namespace vigtext
