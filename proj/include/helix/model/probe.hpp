#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "helix/corpus/corpus.hpp"
#include "helix/model/transformer.hpp"

namespace helix::model {

/// Captured vectors of one probe point, one row per (sentence, position).
struct ProbeRecords {
  Matrix vectors;
  std::vector<std::size_t> sentence;
  std::vector<std::size_t> position;
  std::vector<TokenId> token;
  /// PosTag::other throughout for untagged corpora.
  std::vector<corpus::PosTag> tag;

  std::size_t size() const noexcept { return token.size(); }
};

struct EmbeddingDump {
  std::map<ProbePoint, ProbeRecords> records;
  bool tagged = false;

  /// Throws std::out_of_range naming the probe when it was not captured.
  const ProbeRecords& at(const ProbePoint& probe) const;
};

/// Dropout off. Source-side probes see each pair's source ids; target-side
/// probes see target-in (the target without its final token), i.e. teacher forcing.
EmbeddingDump probe_run(const TransformerModel& model, const std::vector<corpus::TokenizedPair>& pairs,
                        const std::vector<ProbePoint>& probes, std::size_t batch_size = 64);

/// Stored through the tensor file format as "<probe>.vectors" and "<probe>.meta"
/// (sentence, position, token, tag columns).
void save_dump(const EmbeddingDump& dump, const std::filesystem::path& path);
EmbeddingDump load_dump(const std::filesystem::path& path);

}  // namespace helix::model
