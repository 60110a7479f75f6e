#include "helix/analysis/export.hpp"

#include <ostream>
#include <stdexcept>

namespace helix::analysis {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

template <class T>
void check_len(const std::vector<T>& v, std::size_t n, const char* what) {
  if (!v.empty() && v.size() != n)
    throw std::invalid_argument(std::string("write_points_csv: ") + what + " has " + std::to_string(v.size()) +
                                " entries for " + std::to_string(n) + " rows");
}

void write_coords(std::ostream& out, const Matrix& m, std::size_t r) {
  for (double v : m.row(r)) out << ',' << v;
}

}  // namespace

void write_points_csv(std::ostream& out, const Matrix& points, const PointMeta& meta) {
  const std::size_t n = points.rows();
  check_len(meta.sentence, n, "sentence");
  check_len(meta.position, n, "position");
  check_len(meta.token, n, "token");
  check_len(meta.tag, n, "tag");
  check_len(meta.cluster, n, "cluster");
  const auto old = out.precision(17);
  out << "sentence,position,token,word,tag,cluster";
  for (std::size_t c = 0; c < points.cols(); ++c) out << ",x" << c;
  out << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    if (!meta.sentence.empty()) out << meta.sentence[r];
    out << ',';
    if (!meta.position.empty()) out << meta.position[r];
    out << ',';
    if (!meta.token.empty()) out << meta.token[r];
    out << ',';
    if (!meta.token.empty() && meta.vocab) out << csv_escape(meta.vocab->word(meta.token[r]));
    out << ',';
    if (!meta.tag.empty()) out << corpus::to_string(meta.tag[r]);
    out << ',';
    if (!meta.cluster.empty()) out << meta.cluster[r];
    write_coords(out, points, r);
    out << '\n';
  }
  out.precision(old);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  const auto old = out.precision(17);
  out << "row";
  for (std::size_t c = 0; c < m.cols(); ++c) out << ",x" << c;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    write_coords(out, m, r);
    out << '\n';
  }
  out.precision(old);
}

}  // namespace helix::analysis
