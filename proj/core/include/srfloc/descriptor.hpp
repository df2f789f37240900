#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "srfloc/camera.hpp"
#include "srfloc/rng.hpp"

namespace srfloc {

// 256-bit binary descriptor, Hamming metric.
struct Descriptor256 {
  std::array<std::uint64_t, 4> words{0, 0, 0, 0};

  bool operator==(const Descriptor256&) const = default;

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1ULL; }
  void set_bit(int i) { words[i >> 6] |= 1ULL << (i & 63); }
  void flip_bit(int i) { words[i >> 6] ^= 1ULL << (i & 63); }

  static Descriptor256 random(Rng& rng);
  // Flips k distinct bits.
  Descriptor256 with_flipped_bits(int k, Rng& rng) const;
};

int hamming_distance(const Descriptor256& a, const Descriptor256& b);

struct Keypoint {
  Pixel position;
  double size = 1.0;  // scale radius in pixels
  int octave = 0;
};

// L2-normalized embedding; similarity is the dot product.
using GlobalDescriptor = std::vector<float>;

double global_similarity(const GlobalDescriptor& a, const GlobalDescriptor& b);

struct FrameFeatures {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor256> descriptors;  // parallel to keypoints
  GlobalDescriptor global;                 // empty until embedded by a vocabulary
};

struct Match {
  int query_index = -1;
  int train_index = -1;
  int distance = 0;
};

// Lowe ratio matching over Hamming distances. A match is accepted iff
// d1 < ratio * d2 against the second-nearest candidate. Candidates matched
// by several queries keep only the smallest-distance query, so the result
// is injective on the candidate side.
std::vector<Match> match_ratio(std::span<const Descriptor256> query,
                               std::span<const Descriptor256> candidates, double ratio);

// Binary-word vocabulary with a VLAD-style embedding. Each local descriptor
// is assigned to its nearest word; the agreement sign vector against the
// word is projected to 8 dimensions through seeded random bit masks and the
// per-word blocks are concatenated and L2-normalized.
class Vocabulary {
 public:
  static constexpr int kProjectionRows = 8;

  Vocabulary() = default;

  // k-medoids over Hamming distance. Deterministic for a fixed seed.
  static Vocabulary train(std::span<const Descriptor256> sample, int vocab_size,
                          std::uint64_t seed, int max_iterations = 25);

  bool trained() const { return !words_.empty(); }
  int size() const { return static_cast<int>(words_.size()); }
  int dimension() const { return size() * kProjectionRows; }
  const std::vector<Descriptor256>& words() const { return words_; }

  int nearest_word(const Descriptor256& d) const;

  // Throws if untrained or descriptors is empty.
  GlobalDescriptor describe(std::span<const Descriptor256> descriptors) const;

  // tf-idf scored word histogram, dimension == size(). Alternative retrieval
  // backend for the bag-of-words comparison.
  GlobalDescriptor describe_tfidf(std::span<const Descriptor256> descriptors) const;

  void save(std::ostream& os) const;
  static Vocabulary load(std::istream& is);
  void save_file(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

  bool operator==(const Vocabulary& other) const {
    return words_ == other.words_ && projection_seed_ == other.projection_seed_ &&
           idf_ == other.idf_;
  }

 private:
  void build_projections();

  std::vector<Descriptor256> words_;
  std::vector<float> idf_;  // per word, from the training sample
  std::uint64_t projection_seed_ = 0;
  // projections_[word][row]: mask bit 1 contributes +1, bit 0 contributes -1
  std::vector<std::array<Descriptor256, kProjectionRows>> projections_;
};

}  // namespace srfloc
