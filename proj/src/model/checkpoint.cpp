#include "helix/model/checkpoint.hpp"

#include <fstream>
#include <map>

namespace helix::model {

namespace {

using Kind = TensorFileError::Kind;

std::vector<NamedTensor> collect(const TransformerModel& model) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < model.num_parameters(); ++i) out.push_back({model.name(i), model.value(i)});
  return out;
}

void assign(TransformerModel& model, std::vector<NamedTensor> tensors) {
  std::map<std::string, Matrix*> by_name;
  for (auto& t : tensors) by_name[t.name] = &t.value;
  for (std::size_t i = 0; i < model.num_parameters(); ++i) {
    const auto it = by_name.find(model.name(i));
    if (it == by_name.end()) throw TensorFileError(Kind::missing_tensor, "checkpoint lacks tensor " + model.name(i), model.name(i));
    const Matrix& want = model.value(i);
    if (!it->second->same_shape(want))
      throw TensorFileError(Kind::shape_mismatch,
                            "tensor " + model.name(i) + " has shape " + it->second->shape_string() + ", model expects " +
                                want.shape_string(),
                            model.name(i));
  }
  for (const auto& t : tensors)
    if (!model.find(t.name)) throw TensorFileError(Kind::unexpected_tensor, "checkpoint has unknown tensor " + t.name, t.name);
  for (std::size_t i = 0; i < model.num_parameters(); ++i) model.value(i) = std::move(*by_name[model.name(i)]);
}

}  // namespace

void save_checkpoint(const TransformerModel& model, std::ostream& out) { write_tensors(out, collect(model)); }

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path) {
  save_tensors(path, collect(model));
}

void load_checkpoint(TransformerModel& model, std::istream& in) { assign(model, read_tensors(in)); }

void load_checkpoint(TransformerModel& model, const std::filesystem::path& path) {
  assign(model, load_tensors(path));
}

}  // namespace helix::model
