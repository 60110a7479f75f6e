#include "helix/model/probe.hpp"

#include <algorithm>
#include <stdexcept>

#include "helix/corpus/batching.hpp"
#include "helix/model/tensor_file.hpp"
#include "helix/model/training.hpp"

namespace helix::model {

namespace num = helix::numerics;

const ProbeRecords& EmbeddingDump::at(const ProbePoint& probe) const {
  const auto it = records.find(probe);
  if (it == records.end()) throw std::out_of_range("dump has no records for probe " + probe.name());
  return it->second;
}

namespace {

struct Builder {
  std::vector<double> data;
  std::size_t cols = 0;
  ProbeRecords rec;
};

}  // namespace

EmbeddingDump probe_run(const TransformerModel& model, const std::vector<corpus::TokenizedPair>& pairs,
                        const std::vector<ProbePoint>& probes, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("probe_run: batch_size must be at least 1");
  EmbeddingDump dump;
  dump.tagged = !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const auto& p) {
    return p.source_tags.size() == p.source.size() && p.target_tags.size() == p.target.size();
  });
  const bool need_decoder = std::any_of(probes.begin(), probes.end(), [](const auto& p) { return !p.source_side(); });
  std::map<ProbePoint, Builder> builders;
  for (const auto& p : probes) builders[p];

  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<const corpus::TokenizedPair*> chunk;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch_size); ++i) chunk.push_back(&pairs[i]);
    const corpus::Batch batch = corpus::make_batch(chunk);
    num::Tape tape(false);
    ForwardPass pass(model, tape, {false, 0, probes});
    const Var memory = pass.encode(source_block(batch));
    if (need_decoder) pass.decode(target_block(batch), memory, batch.source_lengths, batch.source_len);
    const Captures& caps = pass.captures();
    for (auto& [probe, b] : builders) {
      const Matrix& m = caps.at(probe);
      b.cols = m.cols();
      const bool src = probe.source_side();
      const std::size_t len = src ? batch.source_len : batch.target_len;
      for (std::size_t r = 0; r < batch.size; ++r) {
        const auto& pair = *chunk[r];
        const std::size_t n = src ? batch.source_lengths[r] : batch.target_lengths[r];
        for (std::size_t t = 0; t < n; ++t) {
          const auto row = m.row(r * len + t);
          b.data.insert(b.data.end(), row.begin(), row.end());
          b.rec.sentence.push_back(pair.id);
          b.rec.position.push_back(t);
          b.rec.token.push_back(src ? batch.src(r, t) : batch.in(r, t));
          const auto& tags = src ? pair.source_tags : pair.target_tags;
          b.rec.tag.push_back(dump.tagged ? tags[t] : corpus::PosTag::other);
        }
      }
    }
  }
  for (auto& [probe, b] : builders) {
    const std::size_t n = b.rec.token.size();
    b.rec.vectors = Matrix(n, n ? b.cols : 0, std::move(b.data));
    dump.records.emplace(probe, std::move(b.rec));
  }
  return dump;
}

void save_dump(const EmbeddingDump& dump, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  tensors.push_back({"dump.tagged", Matrix(1, 1, dump.tagged ? 1.0 : 0.0)});
  for (const auto& [probe, rec] : dump.records) {
    tensors.push_back({probe.name() + ".vectors", rec.vectors});
    Matrix meta(rec.size(), 4);
    for (std::size_t i = 0; i < rec.size(); ++i) {
      meta(i, 0) = static_cast<double>(rec.sentence[i]);
      meta(i, 1) = static_cast<double>(rec.position[i]);
      meta(i, 2) = static_cast<double>(rec.token[i]);
      meta(i, 3) = static_cast<double>(static_cast<int>(rec.tag[i]));
    }
    tensors.push_back({probe.name() + ".meta", std::move(meta)});
  }
  save_tensors(path, tensors);
}

EmbeddingDump load_dump(const std::filesystem::path& path) {
  auto tensors = load_tensors(path);
  EmbeddingDump dump;
  std::map<std::string, Matrix*> by_name;
  for (auto& t : tensors) by_name[t.name] = &t.value;
  const auto tagged = by_name.find("dump.tagged");
  if (tagged == by_name.end())
    throw TensorFileError(TensorFileError::Kind::missing_tensor, "dump lacks dump.tagged", "dump.tagged");
  dump.tagged = (*tagged->second)(0, 0) != 0.0;
  for (auto& [name, m] : by_name) {
    if (!name.ends_with(".vectors")) continue;
    const std::string probe_name = name.substr(0, name.size() - 8);
    const auto meta_it = by_name.find(probe_name + ".meta");
    if (meta_it == by_name.end())
      throw TensorFileError(TensorFileError::Kind::missing_tensor, "dump lacks " + probe_name + ".meta", probe_name + ".meta");
    const Matrix& meta = *meta_it->second;
    if (meta.rows() != m->rows() || meta.cols() != 4)
      throw TensorFileError(TensorFileError::Kind::shape_mismatch, "bad metadata shape for " + probe_name, probe_name);
    ProbeRecords rec;
    rec.vectors = std::move(*m);
    for (std::size_t i = 0; i < meta.rows(); ++i) {
      rec.sentence.push_back(static_cast<std::size_t>(meta(i, 0)));
      rec.position.push_back(static_cast<std::size_t>(meta(i, 1)));
      rec.token.push_back(static_cast<TokenId>(meta(i, 2)));
      rec.tag.push_back(static_cast<corpus::PosTag>(static_cast<int>(meta(i, 3))));
    }
    dump.records.emplace(ProbePoint::parse(probe_name), std::move(rec));
  }
  return dump;
}

}  // namespace helix::model
