#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "helix/corpus/corpus.hpp"

namespace helix::corpus {

/// Row-major id blocks padded with kPad. target_in drops the last target
/// token, target_out drops the first.
struct Batch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<TokenId> source;
  std::vector<TokenId> target_in;
  std::vector<TokenId> target_out;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;
  std::vector<std::size_t> pair_ids;

  TokenId src(std::size_t b, std::size_t t) const { return source[b * source_len + t]; }
  TokenId in(std::size_t b, std::size_t t) const { return target_in[b * target_len + t]; }
  TokenId out(std::size_t b, std::size_t t) const { return target_out[b * target_len + t]; }
};

/// Throws std::invalid_argument for batch_size 0 or targets shorter than 2.
Batch make_batch(const std::vector<const TokenizedPair*>& pairs);

/// Shuffled with Rng::derive(seed, epoch) unless shuffle is false.
std::vector<Batch> make_batches(const std::vector<TokenizedPair>& pairs, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch = 0, bool shuffle = true);

}  // namespace helix::corpus
