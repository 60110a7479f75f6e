#pragma once

#include <filesystem>
#include <iosfwd>

#include "helix/model/tensor_file.hpp"
#include "helix/model/transformer.hpp"

namespace helix::model {

/// Every parameter under its model name, in parameter order.
void save_checkpoint(const TransformerModel& model, std::ostream& out);
void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path);

/// Replaces all parameters. The file must hold exactly the model's tensors
/// with matching shapes; otherwise TensorFileError (missing_tensor,
/// unexpected_tensor or shape_mismatch, naming the tensor) and the model is
/// left unchanged.
void load_checkpoint(TransformerModel& model, std::istream& in);
void load_checkpoint(TransformerModel& model, const std::filesystem::path& path);

}  // namespace helix::model
