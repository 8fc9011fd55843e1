#include "densedial/index.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "densedial/rng.hpp"
#include "densedial/serialize.hpp"

namespace densedial {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'I', 'X'};
constexpr std::uint32_t kVersion = 1;

// Bounded selection of the best k items under (score desc, id asc). Using
// `better` as the heap's less-than keeps the weakest retained result at the
// root, so each scan element costs one comparison in the common case.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(EntryId id, float score) {
    if (heap_.size() < k_) {
      heap_.push_back({id, score});
      std::push_heap(heap_.begin(), heap_.end(), better);
    } else if (better({id, score}, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better);
      heap_.back() = {id, score};
      std::push_heap(heap_.begin(), heap_.end(), better);
    }
  }

  std::vector<SearchResult> take() {
    std::sort(heap_.begin(), heap_.end(), better);
    return std::move(heap_);
  }

 private:
  static bool better(const SearchResult& a, const SearchResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  }

  std::size_t k_;
  std::vector<SearchResult> heap_;
};

void check_entries(std::span<const IndexEntry> entries) {
  if (entries.empty()) throw DataError("index build requires at least one entry");
  const Eigen::Index d = entries.front().vector.size();
  std::unordered_set<EntryId> seen;
  seen.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.vector.size() != d)
      throw ShapeError("index entries have mixed dimensions (" + std::to_string(d) + " vs " +
                       std::to_string(e.vector.size()) + ")");
    if (!seen.insert(e.id).second)
      throw DataError("duplicate index entry id: " + std::to_string(e.id));
  }
}

std::pair<std::vector<EntryId>, MatrixF> pack_entries(std::span<const IndexEntry> entries) {
  check_entries(entries);
  std::vector<EntryId> ids;
  ids.reserve(entries.size());
  MatrixF vectors(entries.size(), entries.front().vector.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ids.push_back(entries[i].id);
    vectors.row(i) = entries[i].vector.transpose();
  }
  return {std::move(ids), std::move(vectors)};
}

void check_packed(const std::vector<EntryId>& ids, const MatrixF& vectors) {
  if (ids.empty()) throw DataError("index build requires at least one entry");
  if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
    throw ShapeError("id count does not match vector row count");
  std::unordered_set<EntryId> seen;
  seen.reserve(ids.size());
  for (const EntryId id : ids)
    if (!seen.insert(id).second) throw DataError("duplicate index entry id: " + std::to_string(id));
}

}  // namespace

// --- FlatIndex --------------------------------------------------------------

FlatIndex::FlatIndex(std::vector<EntryId> ids, MatrixF vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  check_packed(ids_, vectors_);
}

FlatIndex FlatIndex::build(std::span<const IndexEntry> entries) {
  auto [ids, vectors] = pack_entries(entries);
  return FlatIndex(std::move(ids), std::move(vectors));
}

std::vector<SearchResult> FlatIndex::search(const VectorF& query, std::size_t topk) const {
  if (topk == 0) throw ConfigError("topk must be >= 1");
  if (query.size() != vectors_.cols()) throw ShapeError("query dimension mismatch");
  TopK best(topk);
  const Eigen::Index d = vectors_.cols();
  for (std::size_t i = 0; i < ids_.size(); ++i)
    best.offer(ids_[i], dot(vectors_.data() + static_cast<std::size_t>(d) * i, query.data(), d));
  return best.take();
}

// --- k-means ----------------------------------------------------------------

namespace {

// Squared Euclidean distances of every row to one centroid, via the norm
// expansion |x|^2 - 2<x,c> + |c|^2.
VectorF distances_to(const MatrixF& vectors, const VectorF& sq_norms, const VectorF& centroid) {
  VectorF d2 = sq_norms - 2.0f * (vectors * centroid);
  d2.array() += centroid.squaredNorm();
  return d2.cwiseMax(0.0f);
}

// Nearest centroid per row (ties to the lowest centroid index), blocked GEMM.
std::vector<std::uint32_t> assign_to_centroids(const MatrixF& vectors, const MatrixF& centroids) {
  const Eigen::Index n = vectors.rows();
  const Eigen::Index nlist = centroids.rows();
  VectorF c_sq(nlist);
  for (Eigen::Index c = 0; c < nlist; ++c) c_sq(c) = centroids.row(c).squaredNorm();

  std::vector<std::uint32_t> assign(static_cast<std::size_t>(n));
  constexpr Eigen::Index kBlock = 4096;
  MatrixF sims;
  for (Eigen::Index begin = 0; begin < n; begin += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - begin);
    sims.noalias() = vectors.middleRows(begin, rows) * centroids.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      Eigen::Index best = 0;
      // minimizing |x-c|^2 == maximizing 2<x,c> - |c|^2
      float best_val = 2.0f * sims(i, 0) - c_sq(0);
      for (Eigen::Index c = 1; c < nlist; ++c) {
        const float val = 2.0f * sims(i, c) - c_sq(c);
        if (val > best_val) {
          best_val = val;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(begin + i)] = static_cast<std::uint32_t>(best);
    }
  }
  return assign;
}

MatrixF kmeans_pp_init(const MatrixF& vectors, std::size_t nlist, Rng& rng) {
  const Eigen::Index n = vectors.rows();
  VectorF sq_norms(n);
  for (Eigen::Index i = 0; i < n; ++i) sq_norms(i) = vectors.row(i).squaredNorm();

  MatrixF centroids(nlist, vectors.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);

  const Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
  centroids.row(0) = vectors.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;

  VectorF d2 = distances_to(vectors, sq_norms, centroids.row(0).transpose());
  for (std::size_t c = 1; c < nlist; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!chosen[static_cast<std::size_t>(i)]) total += static_cast<double>(d2(i));

    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[static_cast<std::size_t>(i)]) continue;
        cum += static_cast<double>(d2(i));
        if (cum >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // numerical slack: fall back to the last unchosen point
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (!chosen[static_cast<std::size_t>(i)]) {
            pick = i;
            break;
          }
      }
    } else {
      // all remaining points coincide with chosen centroids
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }

    centroids.row(c) = vectors.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
    d2 = d2.cwiseMin(distances_to(vectors, sq_norms, centroids.row(c).transpose()));
  }
  return centroids;
}

}  // namespace

MatrixF kmeans(const MatrixF& vectors, std::size_t nlist, int max_iters, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (nlist < 1) throw ConfigError("nlist must be >= 1");
  if (nlist > n)
    throw DataError("nlist=" + std::to_string(nlist) + " exceeds point count " + std::to_string(n));
  if (max_iters < 0) throw ConfigError("max_iters must be non-negative");

  Rng rng(seed);
  MatrixF centroids = kmeans_pp_init(vectors, nlist, rng);

  std::vector<std::uint32_t> assign(n, UINT32_MAX);
  for (int iter = 0; iter < max_iters; ++iter) {
    auto next = assign_to_centroids(vectors, centroids);

    // recompute means
    MatrixF sums = MatrixF::Zero(static_cast<Eigen::Index>(nlist), vectors.cols());
    std::vector<std::size_t> counts(nlist, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(next[i]) += vectors.row(static_cast<Eigen::Index>(i));
      ++counts[next[i]];
    }

    // reseed empty clusters to the point farthest from its assigned centroid
    std::vector<char> used(n, 0);
    for (std::size_t c = 0; c < nlist; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index farthest = -1;
      float far_d2 = -1.0f;
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i] || counts[next[i]] <= 1) continue;
        const float d2 =
            (vectors.row(static_cast<Eigen::Index>(i)) - centroids.row(next[i])).squaredNorm();
        if (d2 > far_d2) {
          far_d2 = d2;
          farthest = static_cast<Eigen::Index>(i);
        }
      }
      if (farthest < 0) continue;  // degenerate: nothing to steal
      used[static_cast<std::size_t>(farthest)] = 1;
      const std::uint32_t old = next[static_cast<std::size_t>(farthest)];
      sums.row(old) -= vectors.row(farthest);
      --counts[old];
      next[static_cast<std::size_t>(farthest)] = static_cast<std::uint32_t>(c);
      sums.row(static_cast<Eigen::Index>(c)) = vectors.row(farthest);
      counts[c] = 1;
    }

    for (std::size_t c = 0; c < nlist; ++c)
      if (counts[c] > 0)
        centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) /
                                                      static_cast<float>(counts[c]);

    if (next == assign) break;  // assignment fixpoint
    assign = std::move(next);
  }
  return centroids;
}

double kmeans_inertia(const MatrixF& vectors, const MatrixF& centroids) {
  const auto assign = assign_to_centroids(vectors, centroids);
  double total = 0.0;
  for (Eigen::Index i = 0; i < vectors.rows(); ++i)
    total += static_cast<double>(
        (vectors.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm());
  return total;
}

// --- IvfIndex ---------------------------------------------------------------

IvfIndex::IvfIndex(MatrixF centroids, std::vector<std::vector<EntryId>> bucket_ids,
                   std::vector<MatrixF> bucket_vectors)
    : centroids_(std::move(centroids)),
      bucket_ids_(std::move(bucket_ids)),
      bucket_vectors_(std::move(bucket_vectors)) {
  if (bucket_ids_.size() != bucket_vectors_.size() ||
      bucket_ids_.size() != static_cast<std::size_t>(centroids_.rows()))
    throw ShapeError("IVF bucket/centroid count mismatch");
  for (std::size_t b = 0; b < bucket_ids_.size(); ++b) {
    if (static_cast<Eigen::Index>(bucket_ids_[b].size()) != bucket_vectors_[b].rows())
      throw ShapeError("IVF bucket id/vector count mismatch");
    size_ += bucket_ids_[b].size();
  }
}

IvfIndex IvfIndex::build(const std::vector<EntryId>& ids, const MatrixF& vectors,
                         const IvfBuildParams& params) {
  check_packed(ids, vectors);
  const std::size_t n = ids.size();
  if (params.nlist < 1) throw ConfigError("nlist must be >= 1");
  if (params.nlist > n)
    throw DataError("nlist=" + std::to_string(params.nlist) + " exceeds entry count " +
                    std::to_string(n));

  // Train the coarse quantizer on a subsample when the corpus is large;
  // assignment below always covers every entry.
  const std::size_t train_cap = params.nlist * params.train_points_per_list;
  MatrixF centroids;
  if (train_cap > 0 && n > train_cap) {
    Rng rng(mix_seed(params.seed, 0x7A1E));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < train_cap; ++i) {
      const std::size_t j = i + rng.uniform_index(n - i);
      std::swap(perm[i], perm[j]);
    }
    MatrixF sample(static_cast<Eigen::Index>(train_cap), vectors.cols());
    for (std::size_t i = 0; i < train_cap; ++i)
      sample.row(static_cast<Eigen::Index>(i)) = vectors.row(static_cast<Eigen::Index>(perm[i]));
    centroids = kmeans(sample, params.nlist, params.kmeans_iters, params.seed);
  } else {
    centroids = kmeans(vectors, params.nlist, params.kmeans_iters, params.seed);
  }

  const auto assign = assign_to_centroids(vectors, centroids);
  std::vector<std::size_t> counts(params.nlist, 0);
  for (const auto a : assign) ++counts[a];

  std::vector<std::vector<EntryId>> bucket_ids(params.nlist);
  std::vector<MatrixF> bucket_vectors(params.nlist);
  for (std::size_t b = 0; b < params.nlist; ++b) {
    bucket_ids[b].reserve(counts[b]);
    bucket_vectors[b].resize(static_cast<Eigen::Index>(counts[b]), vectors.cols());
  }
  std::vector<std::size_t> cursor(params.nlist, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = assign[i];
    bucket_vectors[b].row(static_cast<Eigen::Index>(cursor[b])) =
        vectors.row(static_cast<Eigen::Index>(i));
    bucket_ids[b].push_back(ids[i]);
    ++cursor[b];
  }
  return IvfIndex(std::move(centroids), std::move(bucket_ids), std::move(bucket_vectors));
}

IvfIndex IvfIndex::build(std::span<const IndexEntry> entries, const IvfBuildParams& params) {
  auto [ids, vectors] = pack_entries(entries);
  return build(ids, vectors, params);
}

std::vector<SearchResult> IvfIndex::search(const VectorF& query, std::size_t topk,
                                           std::size_t nprobe) const {
  if (topk == 0) throw ConfigError("topk must be >= 1");
  if (nprobe < 1 || nprobe > nlist())
    throw ConfigError("nprobe must be in [1, nlist=" + std::to_string(nlist()) + "], got " +
                      std::to_string(nprobe));
  if (query.size() != centroids_.cols()) throw ShapeError("query dimension mismatch");

  // Probe order: largest <centroid, query> first, ties by bucket index.
  const Eigen::Index d = centroids_.cols();
  std::vector<std::pair<float, std::size_t>> probe(nlist());
  for (std::size_t c = 0; c < nlist(); ++c)
    probe[c] = {dot(centroids_.data() + static_cast<std::size_t>(d) * c, query.data(), d), c};
  std::partial_sort(probe.begin(), probe.begin() + static_cast<std::ptrdiff_t>(nprobe), probe.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });

  TopK best(topk);
  for (std::size_t p = 0; p < nprobe; ++p) {
    const std::size_t b = probe[p].second;
    const MatrixF& vecs = bucket_vectors_[b];
    for (std::size_t i = 0; i < bucket_ids_[b].size(); ++i)
      best.offer(bucket_ids_[b][i],
                 dot(vecs.data() + static_cast<std::size_t>(d) * i, query.data(), d));
  }
  return best.take();
}

// --- LshIndex ---------------------------------------------------------------

LshIndex::LshIndex(MatrixF hyperplanes, std::vector<EntryId> ids, MatrixF vectors,
                   std::vector<std::uint64_t> signatures, std::size_t bits)
    : hyperplanes_(std::move(hyperplanes)),
      ids_(std::move(ids)),
      vectors_(std::move(vectors)),
      signatures_(std::move(signatures)),
      bits_(bits) {
  check_packed(ids_, vectors_);
  if (bits_ == 0) throw ConfigError("bits must be >= 1");
  if (hyperplanes_.rows() != static_cast<Eigen::Index>(bits_) ||
      hyperplanes_.cols() != vectors_.cols())
    throw ShapeError("LSH hyperplane shape mismatch");
  if (signatures_.size() != ids_.size() * signature_words())
    throw ShapeError("LSH signature block size mismatch");
}

std::vector<std::uint64_t> LshIndex::signature(const VectorF& v) const {
  if (v.size() != hyperplanes_.cols()) throw ShapeError("vector dimension mismatch");
  std::vector<std::uint64_t> sig(signature_words(), 0);
  const Eigen::Index d = hyperplanes_.cols();
  for (std::size_t b = 0; b < bits_; ++b) {
    const float s = dot(hyperplanes_.data() + static_cast<std::size_t>(d) * b, v.data(), d);
    if (s >= 0.0f) sig[b / 64] |= (std::uint64_t{1} << (b % 64));
  }
  return sig;
}

std::uint32_t LshIndex::hamming(const std::uint64_t* a, const std::uint64_t* b) const {
  std::uint32_t dist = 0;
  for (std::size_t w = 0; w < signature_words(); ++w) dist += std::popcount(a[w] ^ b[w]);
  return dist;
}

LshIndex LshIndex::build(const std::vector<EntryId>& ids, const MatrixF& vectors,
                         const LshBuildParams& params) {
  check_packed(ids, vectors);
  if (params.bits < 1) throw ConfigError("bits must be >= 1");

  Rng rng(params.seed);
  MatrixF planes(static_cast<Eigen::Index>(params.bits), vectors.cols());
  for (Eigen::Index i = 0; i < planes.rows(); ++i)
    for (Eigen::Index j = 0; j < planes.cols(); ++j)
      planes(i, j) = static_cast<float>(rng.gaussian());

  const std::size_t words = (params.bits + 63) / 64;
  std::vector<std::uint64_t> signatures(ids.size() * words, 0);
  const Eigen::Index d = vectors.cols();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const float* v = vectors.data() + static_cast<std::size_t>(d) * i;
    for (std::size_t b = 0; b < params.bits; ++b) {
      const float s = dot(planes.data() + static_cast<std::size_t>(d) * b, v, d);
      if (s >= 0.0f) signatures[i * words + b / 64] |= (std::uint64_t{1} << (b % 64));
    }
  }
  return LshIndex(std::move(planes), ids, vectors, std::move(signatures), params.bits);
}

LshIndex LshIndex::build(std::span<const IndexEntry> entries, const LshBuildParams& params) {
  auto [ids, vectors] = pack_entries(entries);
  return LshIndex::build(ids, vectors, params);
}

std::vector<SearchResult> LshIndex::search(const VectorF& query, std::size_t topk,
                                           std::size_t rescore_c) const {
  if (topk == 0) throw ConfigError("topk must be >= 1");
  if (rescore_c < topk) throw ConfigError("rescore_c must be >= topk");
  if (query.size() != vectors_.cols()) throw ShapeError("query dimension mismatch");

  const auto q_sig = signature(query);
  const std::size_t words = signature_words();
  const std::size_t keep = std::min(rescore_c, ids_.size());

  // Candidate selection by (hamming asc, id asc); as in TopK, using the
  // "better" order as the heap's less-than keeps the worst retained
  // candidate at the root.
  using Cand = std::pair<std::uint32_t, std::size_t>;  // (distance, row)
  const auto cand_better = [this](const Cand& a, const Cand& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids_[a.second] < ids_[b.second];
  };
  std::vector<Cand> heap;
  heap.reserve(keep + 1);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const std::uint32_t dist = hamming(&signatures_[i * words], q_sig.data());
    if (heap.size() < keep) {
      heap.emplace_back(dist, i);
      std::push_heap(heap.begin(), heap.end(), cand_better);
    } else {
      const Cand& worst = heap.front();
      const bool better = dist != worst.first ? dist < worst.first : ids_[i] < ids_[worst.second];
      if (better) {
        std::pop_heap(heap.begin(), heap.end(), cand_better);
        heap.back() = {dist, i};
        std::push_heap(heap.begin(), heap.end(), cand_better);
      }
    }
  }

  const Eigen::Index d = vectors_.cols();
  TopK best(topk);
  for (const auto& [dist, row] : heap)
    best.offer(ids_[row], dot(vectors_.data() + static_cast<std::size_t>(d) * row, query.data(), d));
  return best.take();
}

// --- VectorIndex ------------------------------------------------------------

IndexKind VectorIndex::kind() const {
  return static_cast<IndexKind>(impl_.index());
}

std::size_t VectorIndex::size() const {
  return std::visit([](const auto& idx) { return idx.size(); }, impl_);
}

Eigen::Index VectorIndex::dim() const {
  return std::visit([](const auto& idx) { return idx.dim(); }, impl_);
}

std::vector<SearchResult> VectorIndex::search(const VectorF& query,
                                              const SearchParams& params) const {
  if (const auto* flat = std::get_if<FlatIndex>(&impl_)) return flat->search(query, params.topk);
  if (const auto* ivf = std::get_if<IvfIndex>(&impl_))
    return ivf->search(query, params.topk, params.nprobe);
  return std::get<LshIndex>(impl_).search(query, params.topk, params.rescore_c);
}

namespace {

void write_ids(BinaryWriter& w, const std::vector<EntryId>& ids) {
  w.u64_array(ids.data(), ids.size());
}

std::vector<EntryId> read_ids(BinaryReader& r, std::size_t n) {
  std::vector<EntryId> ids(n);
  r.u64_array(ids.data(), n);
  return ids;
}

void write_mat(BinaryWriter& w, const MatrixF& m) {
  w.f32_array(m.data(), static_cast<std::size_t>(m.size()));
}

MatrixF read_mat(BinaryReader& r, std::size_t rows, Eigen::Index cols) {
  MatrixF m(static_cast<Eigen::Index>(rows), cols);
  r.f32_array(m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
  AtomicFile file(path);
  BinaryWriter w(file.stream());
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(kind()));
  w.u32(static_cast<std::uint32_t>(dim()));
  w.u64(size());

  std::visit(
      [&w]<typename T>(const T& idx) {
        if constexpr (std::is_same_v<T, FlatIndex>) {
          write_ids(w, idx.ids());
          write_mat(w, idx.vectors());
        } else if constexpr (std::is_same_v<T, IvfIndex>) {
          w.u32(static_cast<std::uint32_t>(idx.nlist()));
          write_mat(w, idx.centroids());
          for (std::size_t b = 0; b < idx.nlist(); ++b) {
            w.u64(idx.bucket_ids()[b].size());
            write_ids(w, idx.bucket_ids()[b]);
            write_mat(w, idx.bucket_vectors()[b]);
          }
        } else {
          w.u32(static_cast<std::uint32_t>(idx.bits()));
          write_mat(w, idx.hyperplanes());
          write_ids(w, idx.ids());
          write_mat(w, idx.vectors());
          w.u64_array(idx.signatures().data(), idx.signatures().size());
        }
      },
      impl_);
  file.commit();
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index: " + path.string());
  BinaryReader r(in);
  r.expect_magic(kMagic, "index");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw VersionError("unsupported index version " + std::to_string(version));
  const std::uint32_t kind = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint64_t n = r.u64();
  if (d == 0 || n == 0) throw ShapeError("index header has invalid dimensions");

  switch (static_cast<IndexKind>(kind)) {
    case IndexKind::flat: {
      auto ids = read_ids(r, n);
      auto vectors = read_mat(r, n, d);
      if (!r.at_eof()) throw DataError("trailing data in index file");
      return VectorIndex(FlatIndex(std::move(ids), std::move(vectors)));
    }
    case IndexKind::ivf: {
      const std::uint32_t nlist = r.u32();
      if (nlist == 0) throw ShapeError("IVF index with zero lists");
      auto centroids = read_mat(r, nlist, d);
      std::vector<std::vector<EntryId>> bucket_ids(nlist);
      std::vector<MatrixF> bucket_vectors(nlist);
      std::uint64_t total = 0;
      for (std::uint32_t b = 0; b < nlist; ++b) {
        const std::uint64_t count = r.u64();
        total += count;
        bucket_ids[b] = read_ids(r, count);
        bucket_vectors[b] = read_mat(r, count, d);
      }
      if (total != n) throw ShapeError("IVF bucket sizes do not sum to entry count");
      if (!r.at_eof()) throw DataError("trailing data in index file");
      return VectorIndex(
          IvfIndex(std::move(centroids), std::move(bucket_ids), std::move(bucket_vectors)));
    }
    case IndexKind::lsh: {
      const std::uint32_t bits = r.u32();
      if (bits == 0) throw ShapeError("LSH index with zero bits");
      auto planes = read_mat(r, bits, d);
      auto ids = read_ids(r, n);
      auto vectors = read_mat(r, n, d);
      const std::size_t words = (bits + 63) / 64;
      std::vector<std::uint64_t> signatures(n * words);
      r.u64_array(signatures.data(), signatures.size());
      if (!r.at_eof()) throw DataError("trailing data in index file");
      return VectorIndex(
          LshIndex(std::move(planes), std::move(ids), std::move(vectors), std::move(signatures), bits));
    }
    default:
      throw DataError("unknown index kind tag: " + std::to_string(kind));
  }
}

}  // namespace densedial
