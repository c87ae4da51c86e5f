#include "fslstm/cells/checkpoint_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "fslstm/errors.hpp"

namespace fslstm::cells {

std::string format_exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double parse_exact(std::string_view text) {
  double v = 0.0;
  bool negative = !text.empty() && text.front() == '-';
  std::string_view body = negative ? text.substr(1) : text;
  auto res = std::from_chars(body.data(), body.data() + body.size(), v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != body.data() + body.size())
    throw DataError("malformed exact float '" + std::string(text) + "'");
  return negative ? -v : v;
}

namespace {

std::string expect_line(std::istream& in, std::string_view keyword) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint truncated before '" + std::string(keyword) + "'");
  if (line.rfind(keyword, 0) != 0)
    throw DataError("checkpoint: expected '" + std::string(keyword) + "', found '" + line + "'");
  return line.substr(keyword.size());
}

}  // namespace

void write_params(std::ostream& out, const ModelParams& params) {
  const ModelDims& d = params.dims;
  out << "model " << to_string(d.kind) << "\n";
  out << "dims " << d.n_c << ' ' << d.n_a << ' ' << d.n_m << ' ' << d.n_r << ' '
      << d.fastslow.units << ' ' << d.fastslow.layers << "\n";
  out << "tensors " << params.set.size() << "\n";
  for (const auto& [name, entry] : params.set) {
    out << "tensor " << name << ' ' << (entry.trainable ? 1 : 0) << ' ' << entry.value.rank();
    for (std::size_t e : entry.value.shape()) out << ' ' << e;
    out << "\n";
    bool first = true;
    for (double v : entry.value.values()) {
      if (!first) out << ' ';
      out << format_exact(v);
      first = false;
    }
    out << "\n";
  }
}

ModelParams read_params(std::istream& in) {
  ModelParams params;
  params.dims.kind = parse_model_kind(expect_line(in, "model ").c_str());
  {
    std::istringstream ds(expect_line(in, "dims "));
    ModelDims& d = params.dims;
    if (!(ds >> d.n_c >> d.n_a >> d.n_m >> d.n_r >> d.fastslow.units >> d.fastslow.layers))
      throw DataError("checkpoint: malformed dims line");
  }
  std::size_t count = 0;
  {
    std::istringstream cs(expect_line(in, "tensors "));
    if (!(cs >> count)) throw DataError("checkpoint: malformed tensor count");
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream hs(expect_line(in, "tensor "));
    std::string name;
    int trainable = 0;
    std::size_t rank = 0;
    if (!(hs >> name >> trainable >> rank)) throw DataError("checkpoint: malformed tensor header");
    Shape shape(rank);
    for (auto& e : shape)
      if (!(hs >> e)) throw DataError("checkpoint: malformed shape for " + name);
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint: missing values for " + name);
    std::vector<double> values;
    values.reserve(element_count(shape));
    std::size_t pos = 0;
    while (pos < line.size()) {
      std::size_t end = line.find(' ', pos);
      if (end == std::string::npos) end = line.size();
      if (end > pos) values.push_back(parse_exact(std::string_view(line).substr(pos, end - pos)));
      pos = end + 1;
    }
    if (values.size() != element_count(shape))
      throw DataError("checkpoint: tensor " + name + " has " + std::to_string(values.size()) +
                      " values for shape " + shape_string(shape));
    params.set.add(name, Tensor(std::move(shape), std::move(values)), trainable != 0);
  }
  validate_params(params);
  return params;
}

}  // namespace fslstm::cells
