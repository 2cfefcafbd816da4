#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace topoleak::embedding {

/// Dense embedding; `values.size()` is the dimension.
struct EmbeddingVector {
  Eigen::VectorXd values;
  int dim() const noexcept { return static_cast<int>(values.size()); }
};

inline constexpr int kDefaultDim = 384;

/// v / ||v||2; the zero vector comes back unchanged.
EmbeddingVector normalize(const EmbeddingVector& v);

/// Signed feature hashing: each token of text::tokenize(text) adds +-1 at
/// (h >> 1) mod d, sign from the low bit of h, where h is 64-bit FNV-1a over
/// the seed's 8 little-endian bytes followed by the token's UTF-8 bytes.
/// Result is L2-normalized unless zero.
EmbeddingVector hashing_embed(std::string_view text, int d = kDefaultDim, std::uint64_t seed = 0);

/// Unnormalized hashing accumulation (the vector hashing_embed normalizes).
EmbeddingVector hashing_accumulate(std::string_view text, int d, std::uint64_t seed);

/// Remote embedding function: texts in, one vector per text out.
using RemoteEmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

struct EncoderConfig {
  enum class Backend { kHashing, kExternal };
  Backend backend = Backend::kHashing;
  int dim = kDefaultDim;
  std::uint64_t seed = 0;
  /// When false, hashing vectors are returned before normalization.
  bool normalize = true;
  RemoteEmbedFn remote;
};

/// One vector per text, all of dimension config.dim. Throws
/// std::invalid_argument on an empty list, and when an external backend
/// returns the wrong count or dimension.
std::vector<EmbeddingVector> encode_batch(const std::vector<std::string>& texts,
                                          const EncoderConfig& config);

std::string backend_name(EncoderConfig::Backend b);

/// Writes `<stem>.bin` (little-endian float32 rows) and `<stem>.json`
/// ({"d", "count", "backend"}).
void save_embeddings(const std::filesystem::path& stem, const std::vector<EmbeddingVector>& rows,
                     const std::string& backend);

struct LoadedEmbeddings {
  std::vector<EmbeddingVector> rows;
  std::string backend;
};

LoadedEmbeddings load_embeddings(const std::filesystem::path& stem);

}  // namespace topoleak::embedding
