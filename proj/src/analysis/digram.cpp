#include "helix/analysis/digram.hpp"

#include <map>
#include <stdexcept>

namespace helix::analysis {

DigramSet digram_features(const Matrix& z, const std::vector<std::size_t>& sentence,
                          const std::vector<std::size_t>& position) {
  if (sentence.size() != z.rows() || position.size() != z.rows())
    throw std::invalid_argument("digram_features: sentence and position must have one entry per row");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> where;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (!where.emplace(std::pair{sentence[i], position[i]}, i).second)
      throw std::invalid_argument("digram_features: duplicate (sentence, position) " + std::to_string(sentence[i]) +
                                  ", " + std::to_string(position[i]));
  }
  DigramSet out;
  std::vector<double> data;
  const std::size_t k = z.cols();
  for (const auto& [key, i] : where) {
    const auto next = where.find({key.first, key.second + 1});
    if (next == where.end()) continue;
    out.first.push_back(i);
    out.second.push_back(next->second);
    const auto a = z.row(i);
    const auto b = z.row(next->second);
    data.insert(data.end(), a.begin(), a.end());
    data.insert(data.end(), b.begin(), b.end());
  }
  out.features = Matrix(out.first.size(), 2 * k, std::move(data));
  return out;
}

}  // namespace helix::analysis
