#pragma once

// Named-tensor archive with a config echo. Used for model checkpoints and
// classifier matrices. Both encodings round-trip bit-exactly.

#include "disento/io.hpp"

#include <map>

namespace disento {

class TensorArchive {
 public:
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Mat>> tensors;

  void set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta)
      if (k == key) {
        v = value;
        return;
      }
    meta.emplace_back(key, value);
  }

  const std::string& get_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw Error("archive has no meta key '" + key + "'");
  }

  bool has_meta(const std::string& key) const {
    return std::any_of(meta.begin(), meta.end(), [&](const auto& kv) { return kv.first == key; });
  }

  void put(const std::string& name, Mat m) {
    for (auto& [k, v] : tensors)
      if (k == name) {
        v = std::move(m);
        return;
      }
    tensors.emplace_back(name, std::move(m));
  }

  const Mat& get(const std::string& name) const {
    for (const auto& [k, v] : tensors)
      if (k == name) return v;
    throw Error("archive has no tensor '" + name + "'");
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "disento-archive 1\n";
    out << "meta " << meta.size() << '\n';
    for (const auto& [k, v] : meta) out << k << '\t' << v << '\n';
    out << "tensors " << tensors.size() << '\n';
    for (const auto& [name, m] : tensors) {
      out << name << '\t' << m.rows() << '\t' << m.cols() << '\n';
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "\t" : "") << format_double(m(i, j));
        out << '\n';
      }
    }
    return out.str();
  }

  static TensorArchive from_text(const std::string& text, const std::string& source = "<archive>") {
    TensorArchive a;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> std::string& {
      if (!std::getline(in, line)) throw ParseError(source, lineno, "unexpected end of archive");
      ++lineno;
      return line;
    };
    if (next() != "disento-archive 1") throw ParseError(source, lineno, "bad archive header");
    auto count_of = [&](const std::string& l, const std::string& tag) {
      if (l.rfind(tag + " ", 0) != 0) throw ParseError(source, lineno, "expected '" + tag + "'");
      return static_cast<std::size_t>(parse_int(l.substr(tag.size() + 1)));
    };
    const auto n_meta = count_of(next(), "meta");
    for (std::size_t i = 0; i < n_meta; ++i) {
      auto& l = next();
      auto tab = l.find('\t');
      if (tab == std::string::npos) throw ParseError(source, lineno, "bad meta line");
      a.meta.emplace_back(l.substr(0, tab), l.substr(tab + 1));
    }
    const auto n_t = count_of(next(), "tensors");
    for (std::size_t t = 0; t < n_t; ++t) {
      auto f = split(next(), '\t');
      if (f.size() != 3) throw ParseError(source, lineno, "bad tensor header");
      const auto rows = parse_int(f[1]), cols = parse_int(f[2]);
      Mat m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        auto vals = split(next(), '\t');
        if (static_cast<Eigen::Index>(vals.size()) != cols && !(cols == 0 && vals.size() == 1))
          throw ParseError(source, lineno, "tensor row has wrong length");
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = parse_double(vals[j]);
      }
      a.tensors.emplace_back(f[0], std::move(m));
    }
    return a;
  }

  std::string to_binary() const {
    std::ostringstream out(std::ios::binary);
    io::write_magic(out, "DZAR");
    io::write_pod<std::uint32_t>(out, 1);
    io::write_pod<std::uint64_t>(out, meta.size());
    for (const auto& [k, v] : meta) {
      io::write_string(out, k);
      io::write_string(out, v);
    }
    io::write_pod<std::uint64_t>(out, tensors.size());
    for (const auto& [name, m] : tensors) {
      io::write_string(out, name);
      io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      io::write_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
    }
    return out.str();
  }

  static TensorArchive from_binary(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    io::expect_magic(in, "DZAR", "tensor archive");
    if (io::read_pod<std::uint32_t>(in) != 1) throw Error("unsupported archive version");
    TensorArchive a;
    const auto n_meta = io::read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_meta; ++i) {
      auto k = io::read_string(in);
      auto v = io::read_string(in);
      a.meta.emplace_back(std::move(k), std::move(v));
    }
    const auto n_t = io::read_pod<std::uint64_t>(in);
    for (std::uint64_t t = 0; t < n_t; ++t) {
      auto name = io::read_string(in);
      const auto rows = io::read_pod<std::uint64_t>(in);
      const auto cols = io::read_pod<std::uint64_t>(in);
      Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      io::read_doubles(in, m.data(), static_cast<std::size_t>(m.size()));
      a.tensors.emplace_back(std::move(name), std::move(m));
    }
    return a;
  }

  // Encoding chosen by extension: `.bin` is binary, anything else text.
  void save(const std::string& path) const {
    io::write_artifact(path, path.ends_with(".bin") ? to_binary() : to_text());
  }

  static TensorArchive load(const std::string& path) {
    auto bytes = read_file(path);
    return path.ends_with(".bin") ? from_binary(bytes) : from_text(bytes, path);
  }
};

inline Mat as_row(const Vec& v) { return Mat(v.transpose()); }

inline Vec as_vec(const Mat& m) {
  Vec v(m.size());
  std::copy(m.data(), m.data() + m.size(), v.data());
  return v;
}

}  // namespace disento
