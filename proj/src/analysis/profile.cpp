#include "helix/analysis/profile.hpp"

#include <stdexcept>

namespace helix::analysis {

PositionalProfile distill_positions(const model::ProbeRecords& records, const model::ProbePoint& probe,
                                    std::size_t min_count) {
  if (records.size() == 0) throw std::invalid_argument("distill_positions: no records for " + probe.name());
  if (min_count == 0) min_count = 1;
  const std::size_t d = records.vectors.cols();
  std::size_t max_pos = 0;
  for (std::size_t p : records.position) max_pos = std::max(max_pos, p);
  std::vector<std::size_t> counts(max_pos + 1, 0);
  for (std::size_t p : records.position) ++counts[p];
  std::size_t len = 0;
  while (len < counts.size() && counts[len] >= min_count) ++len;
  if (len == 0)
    throw std::invalid_argument("distill_positions: position 0 of " + probe.name() + " has " +
                                std::to_string(counts[0]) + " records, fewer than " + std::to_string(min_count));

  PositionalProfile out{probe, Matrix(len, d), std::vector<std::size_t>(len, 0)};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t p = records.position[i];
    if (p >= len) continue;
    const double k = static_cast<double>(++out.counts[p]);
    auto mean = out.means.row(p);
    const auto x = records.vectors.row(i);
    for (std::size_t c = 0; c < d; ++c) mean[c] += (x[c] - mean[c]) / k;
  }
  return out;
}

PositionalProfile distill_positions(const model::EmbeddingDump& dump, const model::ProbePoint& probe,
                                    std::size_t min_count) {
  return distill_positions(dump.at(probe), probe, min_count);
}

DeltaVectors delta_decompose(const model::ProbeRecords& records, const PositionalProfile& profile,
                             const TokenFilter& filter) {
  const std::size_t d = records.vectors.cols();
  if (profile.means.cols() != d)
    throw std::invalid_argument("delta_decompose: profile width " + std::to_string(profile.means.cols()) +
                                " does not match records width " + std::to_string(d));
  DeltaVectors out;
  std::vector<double> single;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t p = records.position[i];
    if (p >= profile.length()) continue;
    if (filter && !filter(records.token[i])) continue;
    out.record.push_back(i);
    out.sentence.push_back(records.sentence[i]);
    out.position.push_back(p);
    out.token.push_back(records.token[i]);
    out.tag.push_back(records.tag[i]);
    const auto x = records.vectors.row(i);
    const auto m = profile.means.row(p);
    for (std::size_t c = 0; c < d; ++c) single.push_back(x[c] - m[c]);
  }
  const std::size_t n = out.record.size();
  out.single = Matrix(n, d, std::move(single));

  std::map<TokenId, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < n; ++i) {
    auto& [mean, count] = acc[out.token[i]];
    if (mean.empty()) mean.assign(d, 0.0);
    const double k = static_cast<double>(++count);
    const auto x = out.single.row(i);
    for (std::size_t c = 0; c < d; ++c) mean[c] += (x[c] - mean[c]) / k;
  }
  out.double_delta = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [mean, count] = acc.at(out.token[i]);
    if (count < 2) continue;
    const auto x = out.single.row(i);
    auto y = out.double_delta.row(i);
    for (std::size_t c = 0; c < d; ++c) y[c] = x[c] - mean[c];
  }
  for (auto& [token, entry] : acc)
    if (entry.second >= 2) out.semantic.emplace(token, std::move(entry.first));
  return out;
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw std::out_of_range("select_rows: row " + std::to_string(rows[i]) + " out of range");
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace helix::analysis
