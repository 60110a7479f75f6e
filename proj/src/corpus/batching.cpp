#include "helix/corpus/batching.hpp"

#include <algorithm>
#include <stdexcept>

#include "helix/numerics/rng.hpp"

namespace helix::corpus {

Batch make_batch(const std::vector<const TokenizedPair*>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch b;
  b.size = pairs.size();
  for (const auto* p : pairs) {
    if (p->target.size() < 2) throw std::invalid_argument("make_batch: target shorter than 2 tokens");
    if (p->source.empty()) throw std::invalid_argument("make_batch: empty source");
    b.source_len = std::max(b.source_len, p->source.size());
    b.target_len = std::max(b.target_len, p->target.size() - 1);
  }
  b.source.assign(b.size * b.source_len, kPad);
  b.target_in.assign(b.size * b.target_len, kPad);
  b.target_out.assign(b.size * b.target_len, kPad);
  for (std::size_t r = 0; r < b.size; ++r) {
    const auto& p = *pairs[r];
    std::copy(p.source.begin(), p.source.end(), b.source.begin() + static_cast<std::ptrdiff_t>(r * b.source_len));
    const std::size_t lt = p.target.size() - 1;
    for (std::size_t t = 0; t < lt; ++t) {
      b.target_in[r * b.target_len + t] = p.target[t];
      b.target_out[r * b.target_len + t] = p.target[t + 1];
    }
    b.source_lengths.push_back(p.source.size());
    b.target_lengths.push_back(lt);
    b.pair_ids.push_back(p.id);
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<TokenizedPair>& pairs, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch, bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be at least 1");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    numerics::Rng rng = numerics::Rng::derive(seed, 0x62617463ULL + epoch);
    rng.shuffle(order);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const TokenizedPair*> chunk;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) chunk.push_back(&pairs[order[i]]);
    out.push_back(make_batch(chunk));
  }
  return out;
}

}  // namespace helix::corpus
