#include "srfloc/descriptor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "srfloc/binary_io.hpp"

namespace srfloc {

Descriptor256 Descriptor256::random(Rng& rng) {
  Descriptor256 d;
  for (auto& w : d.words) w = rng.next_u64();
  return d;
}

Descriptor256 Descriptor256::with_flipped_bits(int k, Rng& rng) const {
  Descriptor256 d = *this;
  if (k <= 0) return d;
  if (k >= 256) throw std::invalid_argument("with_flipped_bits: k out of range");
  std::array<bool, 256> used{};
  for (int i = 0; i < k; ++i) {
    int bit;
    do {
      bit = static_cast<int>(rng.uniform_index(256));
    } while (used[bit]);
    used[bit] = true;
    d.flip_bit(bit);
  }
  return d;
}

int hamming_distance(const Descriptor256& a, const Descriptor256& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

double global_similarity(const GlobalDescriptor& a, const GlobalDescriptor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("global_similarity: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return dot;
}

std::vector<Match> match_ratio(std::span<const Descriptor256> query,
                               std::span<const Descriptor256> candidates, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("match_ratio: ratio in (0,1]");
  // Sentinel one past the metric maximum, so a lone candidate can still pass.
  constexpr int kNoSecond = 257;

  std::vector<Match> accepted;
  for (int qi = 0; qi < static_cast<int>(query.size()); ++qi) {
    int best = -1, d1 = kNoSecond, d2 = kNoSecond;
    for (int ci = 0; ci < static_cast<int>(candidates.size()); ++ci) {
      const int d = hamming_distance(query[qi], candidates[ci]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = ci;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (best >= 0 && static_cast<double>(d1) < ratio * static_cast<double>(d2)) {
      accepted.push_back(Match{qi, best, d1});
    }
  }

  // Keep one query per candidate, smallest distance first (earlier query on tie).
  std::map<int, Match> per_candidate;
  for (const auto& m : accepted) {
    auto it = per_candidate.find(m.train_index);
    if (it == per_candidate.end() || m.distance < it->second.distance) {
      per_candidate.insert_or_assign(m.train_index, m);
    }
  }
  std::vector<Match> out;
  out.reserve(per_candidate.size());
  for (const auto& [ci, m] : per_candidate) out.push_back(m);
  std::sort(out.begin(), out.end(),
            [](const Match& a, const Match& b) { return a.query_index < b.query_index; });
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

int Vocabulary::nearest_word(const Descriptor256& d) const {
  int best = 0;
  int best_dist = std::numeric_limits<int>::max();
  for (int w = 0; w < static_cast<int>(words_.size()); ++w) {
    const int dist = hamming_distance(d, words_[w]);
    if (dist < best_dist) {
      best_dist = dist;
      best = w;
    }
  }
  return best;
}

Vocabulary Vocabulary::train(std::span<const Descriptor256> sample, int vocab_size,
                             std::uint64_t seed, int max_iterations) {
  if (vocab_size <= 0) throw std::invalid_argument("train: vocab_size must be positive");
  if (static_cast<int>(sample.size()) < vocab_size) {
    throw std::invalid_argument("train: sample smaller than vocab_size");
  }

  Vocabulary voc;
  voc.projection_seed_ = mix_seed(seed, 0x564c4144ULL);

  // Seeded draw of distinct medoid indices.
  Rng rng(mix_seed(seed, 0x4d45444fULL));
  std::vector<std::size_t> index_pool(sample.size());
  for (std::size_t i = 0; i < index_pool.size(); ++i) index_pool[i] = i;
  for (int k = 0; k < vocab_size; ++k) {
    const std::size_t pick = k + rng.uniform_index(index_pool.size() - k);
    std::swap(index_pool[k], index_pool[pick]);
  }
  std::vector<std::size_t> medoid_idx(index_pool.begin(), index_pool.begin() + vocab_size);
  std::sort(medoid_idx.begin(), medoid_idx.end());
  voc.words_.reserve(vocab_size);
  for (auto i : medoid_idx) voc.words_.push_back(sample[i]);

  std::vector<int> assignment(sample.size(), 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    for (std::size_t i = 0; i < sample.size(); ++i) {
      assignment[i] = voc.nearest_word(sample[i]);
    }

    bool changed = false;
    for (int w = 0; w < vocab_size; ++w) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < sample.size(); ++i) {
        if (assignment[i] == w) members.push_back(i);
      }
      if (members.empty()) continue;  // keep the previous medoid
      std::size_t best_member = members.front();
      std::int64_t best_sum = std::numeric_limits<std::int64_t>::max();
      for (auto cand : members) {
        std::int64_t sum = 0;
        for (auto other : members) sum += hamming_distance(sample[cand], sample[other]);
        if (sum < best_sum) {
          best_sum = sum;
          best_member = cand;
        }
      }
      if (!(sample[best_member] == voc.words_[w])) {
        voc.words_[w] = sample[best_member];
        changed = true;
      }
    }
    if (!changed) break;
  }

  // idf from the final assignment, smoothed so unseen words stay finite.
  for (std::size_t i = 0; i < sample.size(); ++i) assignment[i] = voc.nearest_word(sample[i]);
  std::vector<int> counts(vocab_size, 0);
  for (auto a : assignment) counts[a]++;
  voc.idf_.resize(vocab_size);
  for (int w = 0; w < vocab_size; ++w) {
    voc.idf_[w] = static_cast<float>(
        std::log((1.0 + sample.size()) / (1.0 + counts[w])) + 1.0);
  }

  voc.build_projections();
  return voc;
}

void Vocabulary::build_projections() {
  projections_.resize(words_.size());
  for (std::size_t w = 0; w < words_.size(); ++w) {
    Rng rng(mix_seed(projection_seed_, w));
    for (int r = 0; r < kProjectionRows; ++r) {
      for (auto& word : projections_[w][r].words) word = rng.next_u64();
    }
  }
}

GlobalDescriptor Vocabulary::describe(std::span<const Descriptor256> descriptors) const {
  if (!trained()) throw std::runtime_error("describe: vocabulary not trained");
  if (descriptors.empty()) throw std::invalid_argument("describe: empty descriptor list");

  std::vector<double> acc(dimension(), 0.0);
  for (const auto& d : descriptors) {
    const int w = nearest_word(d);
    Descriptor256 x;  // disagreement bits against the word
    for (int i = 0; i < 4; ++i) x.words[i] = d.words[i] ^ words_[w].words[i];
    const int sum_x = hamming_distance(x, Descriptor256{});
    for (int r = 0; r < kProjectionRows; ++r) {
      const auto& mask = projections_[w][r];
      int c_m = 0, s_mx = 0;
      for (int i = 0; i < 4; ++i) {
        c_m += std::popcount(mask.words[i]);
        s_mx += std::popcount(mask.words[i] & x.words[i]);
      }
      // sum over bits of (+-1 mask) * (+-1 agreement)
      acc[w * kProjectionRows + r] += 2.0 * c_m - 4.0 * s_mx - 256.0 + 2.0 * sum_x;
    }
  }

  double norm_sq = 0.0;
  for (double v : acc) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) throw std::runtime_error("describe: degenerate zero embedding");
  GlobalDescriptor out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

GlobalDescriptor Vocabulary::describe_tfidf(std::span<const Descriptor256> descriptors) const {
  if (!trained()) throw std::runtime_error("describe_tfidf: vocabulary not trained");
  if (descriptors.empty()) throw std::invalid_argument("describe_tfidf: empty descriptor list");

  std::vector<double> acc(words_.size(), 0.0);
  for (const auto& d : descriptors) acc[nearest_word(d)] += 1.0;
  double norm_sq = 0.0;
  for (std::size_t w = 0; w < acc.size(); ++w) {
    acc[w] *= idf_[w];
    norm_sq += acc[w] * acc[w];
  }
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) throw std::runtime_error("describe_tfidf: degenerate zero embedding");
  GlobalDescriptor out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

void Vocabulary::save(std::ostream& os) const {
  write_magic(os, "VOCB");
  write_u32(os, 1);  // version
  write_u32(os, static_cast<std::uint32_t>(words_.size()));
  write_u64(os, projection_seed_);
  for (const auto& w : words_) {
    for (auto word : w.words) write_u64(os, word);
  }
  for (auto v : idf_) write_f32(os, v);
}

Vocabulary Vocabulary::load(std::istream& is) {
  expect_magic(is, "VOCB", "vocabulary");
  const auto version = read_u32(is);
  if (version != 1) throw std::runtime_error("vocabulary: unsupported version");
  const auto count = read_u32(is);
  Vocabulary voc;
  voc.projection_seed_ = read_u64(is);
  voc.words_.resize(count);
  for (auto& w : voc.words_) {
    for (auto& word : w.words) word = read_u64(is);
  }
  voc.idf_.resize(count);
  for (auto& v : voc.idf_) v = read_f32(is);
  voc.build_projections();
  return voc;
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocabulary file: " + path);
  save(os);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open vocabulary file: " + path);
  return load(is);
}

}  // namespace srfloc
