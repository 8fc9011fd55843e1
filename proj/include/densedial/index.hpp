#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "densedial/common.hpp"

namespace densedial {

using EntryId = std::uint64_t;

struct IndexEntry {
  EntryId id;
  VectorF vector;
};

// Ranked hit. Result lists are sorted by score descending, ties broken by
// ascending id, everywhere.
struct SearchResult {
  EntryId id;
  float score;
  bool operator==(const SearchResult&) const = default;
};

// Exact maximum-inner-product search by full scan. Serves as the oracle the
// approximate indexes are tested against.
class FlatIndex {
 public:
  FlatIndex(std::vector<EntryId> ids, MatrixF vectors);
  static FlatIndex build(std::span<const IndexEntry> entries);

  std::vector<SearchResult> search(const VectorF& query, std::size_t topk) const;

  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  const std::vector<EntryId>& ids() const { return ids_; }
  const MatrixF& vectors() const { return vectors_; }

 private:
  std::vector<EntryId> ids_;
  MatrixF vectors_;  // N x d, row i belongs to ids_[i]
};

// Lloyd k-means with k-means++ seeded initialization. Iterates to the
// assignment fixpoint or max_iters; an emptied cluster is reseeded to the
// point farthest from its assigned centroid. Deterministic given the seed.
MatrixF kmeans(const MatrixF& vectors, std::size_t nlist, int max_iters, std::uint64_t seed);

// Sum of squared distances of each row to its nearest centroid.
double kmeans_inertia(const MatrixF& vectors, const MatrixF& centroids);

struct IvfBuildParams {
  std::size_t nlist = 1024;
  std::uint64_t seed = 0;
  int kmeans_iters = 20;
  // k-means trains on at most nlist * this many points (deterministic
  // subsample); bucket assignment always covers every entry.
  std::size_t train_points_per_list = 256;
};

// Inverted-file index: entries bucketed by nearest centroid (Euclidean), a
// query probes the nprobe buckets whose centroids have the largest inner
// product with it and scores those buckets exactly. nprobe = nlist recovers
// the flat search result identically.
class IvfIndex {
 public:
  IvfIndex(MatrixF centroids, std::vector<std::vector<EntryId>> bucket_ids,
           std::vector<MatrixF> bucket_vectors);
  static IvfIndex build(const std::vector<EntryId>& ids, const MatrixF& vectors,
                        const IvfBuildParams& params);
  static IvfIndex build(std::span<const IndexEntry> entries, const IvfBuildParams& params);

  std::vector<SearchResult> search(const VectorF& query, std::size_t topk,
                                   std::size_t nprobe) const;

  std::size_t nlist() const { return bucket_ids_.size(); }
  std::size_t size() const { return size_; }
  Eigen::Index dim() const { return centroids_.cols(); }
  const MatrixF& centroids() const { return centroids_; }
  const std::vector<std::vector<EntryId>>& bucket_ids() const { return bucket_ids_; }
  const std::vector<MatrixF>& bucket_vectors() const { return bucket_vectors_; }

 private:
  MatrixF centroids_;  // nlist x d
  std::vector<std::vector<EntryId>> bucket_ids_;
  std::vector<MatrixF> bucket_vectors_;
  std::size_t size_ = 0;
};

struct LshBuildParams {
  std::size_t bits = 128;
  std::uint64_t seed = 0;
};

// Random-hyperplane signatures: bit b of an entry is sign(<hyperplane_b, v>)
// with sign(0) -> 1. A query ranks entries by ascending Hamming distance
// (ties by id), rescores the best rescore_c exactly, and returns the top-k
// of the rescored set. rescore_c >= N degenerates to exact flat search.
class LshIndex {
 public:
  LshIndex(MatrixF hyperplanes, std::vector<EntryId> ids, MatrixF vectors,
           std::vector<std::uint64_t> signatures, std::size_t bits);
  static LshIndex build(const std::vector<EntryId>& ids, const MatrixF& vectors,
                        const LshBuildParams& params);
  static LshIndex build(std::span<const IndexEntry> entries, const LshBuildParams& params);

  std::vector<SearchResult> search(const VectorF& query, std::size_t topk,
                                   std::size_t rescore_c) const;

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  std::size_t signature_words() const { return (bits_ + 63) / 64; }
  const MatrixF& hyperplanes() const { return hyperplanes_; }
  const std::vector<EntryId>& ids() const { return ids_; }
  const MatrixF& vectors() const { return vectors_; }
  const std::vector<std::uint64_t>& signatures() const { return signatures_; }

  // Signature of an arbitrary vector, using the same kernel as build time.
  std::vector<std::uint64_t> signature(const VectorF& v) const;
  std::uint32_t hamming(const std::uint64_t* a, const std::uint64_t* b) const;

 private:
  MatrixF hyperplanes_;  // bits x d
  std::vector<EntryId> ids_;
  MatrixF vectors_;                        // N x d, kept for exact rescoring
  std::vector<std::uint64_t> signatures_;  // N x signature_words
  std::size_t bits_;
};

enum class IndexKind : std::uint32_t { flat = 0, ivf = 1, lsh = 2 };

struct SearchParams {
  std::size_t topk = 10;
  std::size_t nprobe = 8;       // IVF only
  std::size_t rescore_c = 1000; // LSH only
};

// Kind-erased handle used by retrieval and the CLI; owns one of the three
// index types and dispatches search/persistence.
class VectorIndex {
 public:
  explicit VectorIndex(FlatIndex idx) : impl_(std::move(idx)) {}
  explicit VectorIndex(IvfIndex idx) : impl_(std::move(idx)) {}
  explicit VectorIndex(LshIndex idx) : impl_(std::move(idx)) {}

  IndexKind kind() const;
  std::size_t size() const;
  Eigen::Index dim() const;

  std::vector<SearchResult> search(const VectorF& query, const SearchParams& params) const;

  // Binary format: magic "DDIX", u32 version, u32 kind, u32 d, u64 N, then
  // kind-specific blocks (little-endian f32/u64). load(save(x)) answers every
  // query identically to x. Written atomically.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  template <typename T>
  const T& as() const {
    return std::get<T>(impl_);
  }

 private:
  std::variant<FlatIndex, IvfIndex, LshIndex> impl_;
};

}  // namespace densedial
