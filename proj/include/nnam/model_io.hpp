// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model_io.hpp
 * @brief  Versioned text serialization of networks. Values are written with
 *         17 significant digits so save/load is bit-exact.
 *
 * Layout:
 *   nnam-model v1 <kind> <layers> <feature_dim> <hidden...> <classes>
 *   options delay <n> context <n> dropout <p> zoneout_c <d> zoneout_h <d>
 *   <tensor-name> <rows> <cols>
 *   <row values>          (one line per row)
 *   ...
 */
#ifndef NNAM_MODEL_IO_HPP
#define NNAM_MODEL_IO_HPP

#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "nnam/io.hpp"
#include "nnam/network.hpp"

namespace nnam {

namespace detail {

inline void write_tensor(std::ostringstream &os, const std::string &name, std::size_t rows,
                         std::size_t cols, std::span<const double> values) {
  os << name << ' ' << rows << ' ' << cols << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c)
        os << ' ';
      os << format_double(values[r * cols + c]);
    }
    os << '\n';
  }
}

inline std::size_t tensor_rows(const Matrix &m) { return m.rows(); }
inline std::size_t tensor_cols(const Matrix &m) { return m.cols(); }
inline std::size_t tensor_rows(const Vector &v) { return v.dim(); }
inline std::size_t tensor_cols(const Vector &) { return 1; }

} // namespace detail

inline std::string save_model(const RecurrentNetwork &net) {
  std::ostringstream os;
  const auto dims = net.hidden_dims();
  os << "nnam-model v1 " << to_string(net.kind) << ' ' << dims.size() << ' '
     << net.feature_dim();
  for (auto d : dims)
    os << ' ' << d;
  os << ' ' << net.num_classes() << '\n';
  os << "options delay " << net.output_delay << " context " << net.context << " dropout "
     << format_double(net.dropout) << " zoneout_c " << format_double(net.zoneout.d_c)
     << " zoneout_h " << format_double(net.zoneout.d_h) << '\n';
  detail::write_tensor(os, "normalizer.shift", net.feature_dim(), 1,
                       net.normalizer.shift.values());
  detail::write_tensor(os, "normalizer.scale", net.feature_dim(), 1,
                       net.normalizer.scale.values());
  visit_parameters(net, [&](const std::string &name, const auto &t) {
    detail::write_tensor(os, name, detail::tensor_rows(t), detail::tensor_cols(t), t.values());
  });
  return os.str();
}

inline RecurrentNetwork load_model_text(const std::string &text,
                                        const std::string &source = "<model>") {
  const auto lines = split_lines(text);
  std::size_t ln = 0;
  auto fail = [&](const std::string &msg) -> ParseError {
    return ParseError(source + ":" + std::to_string(ln + 1) + ": " + msg);
  };
  auto next_tokens = [&]() {
    if (ln >= lines.size())
      throw fail("unexpected end of file");
    return split_ws(lines[ln]);
  };

  auto header = next_tokens();
  if (header.size() < 6 || header[0] != "nnam-model" || header[1] != "v1")
    throw fail("expected 'nnam-model v1' header");
  NetworkSpec spec;
  spec.kind = parse_cell_kind(header[2]);
  std::size_t L = 0;
  if (!parse_int(header[3], L) || header.size() != 6 + L)
    throw fail("bad layer count");
  if (!parse_int(header[4], spec.feature_dim))
    throw fail("bad feature dim");
  spec.hidden.resize(L);
  for (std::size_t l = 0; l < L; ++l)
    if (!parse_int(header[5 + l], spec.hidden[l]))
      throw fail("bad hidden dim");
  if (!parse_int(header[5 + L], spec.num_classes))
    throw fail("bad class count");
  ++ln;

  auto opts = next_tokens();
  if (opts.empty() || opts[0] != "options" || opts.size() % 2 != 1)
    throw fail("expected options line");
  for (std::size_t k = 1; k + 1 < opts.size(); k += 2) {
    const auto key = opts[k], val = opts[k + 1];
    bool ok = true;
    if (key == "delay") ok = parse_int(val, spec.output_delay);
    else if (key == "context") ok = parse_int(val, spec.context);
    else if (key == "dropout") ok = parse_double(val, spec.dropout);
    else if (key == "zoneout_c") ok = parse_double(val, spec.zoneout.d_c);
    else if (key == "zoneout_h") ok = parse_double(val, spec.zoneout.d_h);
    else throw fail("unknown option '" + std::string(key) + "'");
    if (!ok)
      throw fail("bad value for option '" + std::string(key) + "'");
  }
  ++ln;

  Rng rng(0);
  RecurrentNetwork net = make_network(spec, rng);
  net.zoneout = {spec.zoneout.d_c, spec.zoneout.d_h};

  auto read_tensor = [&](const std::string &name, std::size_t rows, std::size_t cols,
                         std::span<double> out) {
    auto head = next_tokens();
    std::size_t r = 0, c = 0;
    if (head.size() != 3 || head[0] != name || !parse_int(head[1], r) ||
        !parse_int(head[2], c))
      throw fail("expected tensor header '" + name + "'");
    if (r != rows || c != cols)
      throw fail("tensor '" + name + "' has shape " + std::to_string(r) + "x" +
                 std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                 std::to_string(cols));
    ++ln;
    for (std::size_t i = 0; i < rows; ++i) {
      auto vals = next_tokens();
      if (vals.size() != cols)
        throw fail("tensor '" + name + "' row has " + std::to_string(vals.size()) +
                   " values, expected " + std::to_string(cols));
      for (std::size_t j = 0; j < cols; ++j)
        if (!parse_double(vals[j], out[i * cols + j]))
          throw fail("bad number '" + std::string(vals[j]) + "'");
      ++ln;
    }
  };

  read_tensor("normalizer.shift", spec.feature_dim, 1, net.normalizer.shift.values());
  read_tensor("normalizer.scale", spec.feature_dim, 1, net.normalizer.scale.values());
  visit_parameters(net, [&](const std::string &name, auto &t) {
    read_tensor(name, detail::tensor_rows(t), detail::tensor_cols(t), t.values());
  });
  return net;
}

inline void save_model_file(const std::filesystem::path &path, const RecurrentNetwork &net) {
  write_file_atomic(path, save_model(net));
}

inline RecurrentNetwork load_model_file(const std::filesystem::path &path) {
  return load_model_text(read_file(path), path.string());
}

} // namespace nnam

#endif // NNAM_MODEL_IO_HPP
