#pragma once

// Text container for model parameters: a kind/dims header followed by one
// record per tensor (name, trainable flag, shape, row-major values). Values
// are written as hexadecimal floating point so a round trip is bit-exact.

#include <iosfwd>
#include <string>
#include <string_view>

#include "fslstm/cells/model.hpp"

namespace fslstm::cells {

std::string format_exact(double v);
/// Throws DataError on malformed text.
double parse_exact(std::string_view text);

void write_params(std::ostream& out, const ModelParams& params);
/// Reads what write_params wrote and validates it against the layout.
ModelParams read_params(std::istream& in);

}  // namespace fslstm::cells
