#pragma once

#include <iosfwd>
#include <string>

#include "tnsketch/tensor.hpp"

namespace tnsketch {

// Text format:
//   tns <q> <n_1> ... <n_q>
//   <i_1> ... <i_q> <value>     (0-based indices, one entry per line)
// Lines starting with '#' and blank lines are ignored. Duplicate coordinates
// are summed on ingest.
SparseTensor parse_tensor_text(std::istream& in);
SparseTensor read_tensor_text(const std::string& path);

void print_tensor_text(std::ostream& out, const SparseTensor& t);
void print_tensor_text(std::ostream& out, const Tensor& t);  // lists all entries
void write_tensor_text(const std::string& path, const SparseTensor& t);
void write_tensor_text(const std::string& path, const Tensor& t);

// Writes via a temporary file in the same directory followed by a rename, so
// a crash never leaves a partially written file at `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace tnsketch
