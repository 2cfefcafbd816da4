#include "topoleak/embedding.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "topoleak/io.hpp"
#include "topoleak/rng.hpp"
#include "topoleak/text.hpp"

namespace topoleak::embedding {

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double norm = v.values.norm();
  if (norm == 0.0) return v;
  return {v.values / norm};
}

EmbeddingVector hashing_accumulate(std::string_view text, int d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("hashing_embed: dimension must be >= 1");
  char seed_bytes[8];
  for (int b = 0; b < 8; ++b) seed_bytes[b] = static_cast<char>((seed >> (8 * b)) & 0xffu);
  const std::uint64_t basis = fnv1a64(std::string_view(seed_bytes, 8));

  EmbeddingVector v{Eigen::VectorXd::Zero(d)};
  for (const auto& tok : text::tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok, basis);
    const auto index = static_cast<Eigen::Index>((h >> 1) % static_cast<std::uint64_t>(d));
    v.values[index] += (h & 1u) ? -1.0 : 1.0;
  }
  return v;
}

EmbeddingVector hashing_embed(std::string_view text, int d, std::uint64_t seed) {
  return normalize(hashing_accumulate(text, d, seed));
}

std::string backend_name(EncoderConfig::Backend b) {
  return b == EncoderConfig::Backend::kHashing ? "hashing" : "external";
}

std::vector<EmbeddingVector> encode_batch(const std::vector<std::string>& texts,
                                          const EncoderConfig& config) {
  if (texts.empty()) throw std::invalid_argument("encode_batch: empty text list");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  if (config.backend == EncoderConfig::Backend::kHashing) {
    for (const auto& t : texts) {
      out.push_back(config.normalize ? hashing_embed(t, config.dim, config.seed)
                                     : hashing_accumulate(t, config.dim, config.seed));
    }
    return out;
  }

  if (!config.remote) throw std::invalid_argument("encode_batch: external backend not configured");
  const auto rows = config.remote(texts);
  if (rows.size() != texts.size()) {
    throw std::invalid_argument("encode_batch: external backend returned " +
                                std::to_string(rows.size()) + " vectors for " +
                                std::to_string(texts.size()) + " texts");
  }
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != config.dim) {
      throw std::invalid_argument("encode_batch: external backend dimension " +
                                  std::to_string(r.size()) + " != " + std::to_string(config.dim));
    }
    EmbeddingVector v{Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()))};
    out.push_back(config.normalize ? normalize(v) : v);
  }
  return out;
}

void save_embeddings(const std::filesystem::path& stem, const std::vector<EmbeddingVector>& rows,
                     const std::string& backend) {
  const int d = rows.empty() ? 0 : rows.front().dim();
  std::vector<float> flat;
  flat.reserve(rows.size() * static_cast<std::size_t>(d));
  for (const auto& r : rows) {
    if (r.dim() != d) throw std::invalid_argument("save_embeddings: ragged rows");
    for (Eigen::Index k = 0; k < r.values.size(); ++k) flat.push_back(static_cast<float>(r.values[k]));
  }
  io::write_f32_le(io::with_suffix(stem, ".bin"), flat);
  const nlohmann::json sidecar = {{"d", d}, {"count", rows.size()}, {"backend", backend}};
  io::write_text(io::with_suffix(stem, ".json"), sidecar.dump(2) + "\n");
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& stem) {
  const auto sidecar = nlohmann::json::parse(io::read_text(io::with_suffix(stem, ".json")));
  const int d = sidecar.at("d").get<int>();
  const auto count = sidecar.at("count").get<std::size_t>();
  const auto flat = io::read_f32_le(io::with_suffix(stem, ".bin"));
  if (flat.size() != count * static_cast<std::size_t>(d))
    throw std::runtime_error("embeddings: binary size does not match sidecar");
  LoadedEmbeddings out;
  out.backend = sidecar.at("backend").get<std::string>();
  for (std::size_t r = 0; r < count; ++r) {
    EmbeddingVector v{Eigen::VectorXd(d)};
    for (int k = 0; k < d; ++k) v.values[k] = flat[r * static_cast<std::size_t>(d) + k];
    out.rows.push_back(std::move(v));
  }
  return out;
}

}  // namespace topoleak::embedding
