#include "tnsketch/tensor_io.hpp"

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tnsketch {

namespace {

// strips a trailing comment and returns whether anything remains
bool strip_line(std::string& line) {
  size_t hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  return line.find_first_not_of(" \t\r\n") != std::string::npos;
}

}  // namespace

SparseTensor parse_tensor_text(std::istream& in) {
  std::string line;
  std::vector<index_t> dims;
  bool have_header = false;
  std::vector<index_t> flat;
  std::vector<double> vals;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!strip_line(line)) continue;
    std::istringstream ls(line);
    if (!have_header) {
      std::string tag;
      ls >> tag;
      require(tag == "tns", "expected 'tns' header, got '" + tag + "'");
      int q = 0;
      require(static_cast<bool>(ls >> q) && q >= 1, "bad mode count in header");
      dims.resize(static_cast<size_t>(q));
      for (int m = 0; m < q; ++m)
        require(static_cast<bool>(ls >> dims[static_cast<size_t>(m)]) &&
                    dims[static_cast<size_t>(m)] >= 1,
                "bad dimension in header");
      volume_of(dims);
      have_header = true;
      continue;
    }
    std::vector<index_t> idx(dims.size());
    for (size_t m = 0; m < dims.size(); ++m)
      require(static_cast<bool>(ls >> idx[m]),
              "short entry on line " + std::to_string(lineno));
    double v = 0.0;
    require(static_cast<bool>(ls >> v),
            "missing value on line " + std::to_string(lineno));
    std::string extra;
    require(!(ls >> extra), "trailing tokens on line " + std::to_string(lineno));
    flat.push_back(flat_index(dims, idx));
    vals.push_back(v);
  }
  require(have_header, "missing 'tns' header");
  return SparseTensor(std::move(dims), std::move(flat), std::move(vals));
}

SparseTensor read_tensor_text(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open tensor file: " + path);
  return parse_tensor_text(in);
}

namespace {

void print_header(std::ostream& out, const std::vector<index_t>& dims) {
  out << "tns " << dims.size();
  for (index_t d : dims) out << ' ' << d;
  out << '\n';
}

void print_entry(std::ostream& out, const std::vector<index_t>& idx, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  for (index_t i : idx) out << i << ' ';
  out << buf << '\n';
}

}  // namespace

void print_tensor_text(std::ostream& out, const SparseTensor& t) {
  print_header(out, t.dims());
  for (index_t e = 0; e < t.nnz(); ++e)
    print_entry(out, t.coord(e), t.values()[static_cast<size_t>(e)]);
}

void print_tensor_text(std::ostream& out, const Tensor& t) {
  print_header(out, t.dims());
  for (index_t i = 0; i < t.size(); ++i)
    print_entry(out, unflatten_index(t.dims(), i),
                t.data()[static_cast<size_t>(i)]);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";
  fs::path tmp = dir / (target.filename().string() + ".tmp" +
                        std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(out.good(), "cannot write file: " + tmp.string());
    out << content;
    out.flush();
    require(out.good(), "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  require(!ec, "rename failed for " + target.string() + ": " + ec.message());
}

void write_tensor_text(const std::string& path, const SparseTensor& t) {
  std::ostringstream ss;
  print_tensor_text(ss, t);
  write_file_atomic(path, ss.str());
}

void write_tensor_text(const std::string& path, const Tensor& t) {
  std::ostringstream ss;
  print_tensor_text(ss, t);
  write_file_atomic(path, ss.str());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tnsketch
