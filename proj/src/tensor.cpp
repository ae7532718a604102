#include "tnsketch/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>

namespace tnsketch {

namespace {

std::atomic<index_t> g_dense_cap{-1};

index_t initial_cap() {
  if (const char* env = std::getenv("TNSKETCH_DENSE_CAP")) {
    char* end = nullptr;
    long long v = std::strtoll(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<index_t>(v);
  }
  return 100000000;  // 10^8 entries
}

void check_dims(const std::vector<index_t>& dims) {
  require(!dims.empty(), "tensor must have at least one mode");
  for (index_t d : dims) require(d >= 1, "mode sizes must be positive");
}

}  // namespace

index_t dense_cap() {
  index_t cap = g_dense_cap.load();
  if (cap < 0) {
    cap = initial_cap();
    g_dense_cap.store(cap);
  }
  return cap;
}

void set_dense_cap(index_t cap) {
  require(cap > 0, "dense cap must be positive");
  g_dense_cap.store(cap);
}

index_t volume_of(const std::vector<index_t>& dims) {
  check_dims(dims);
  index_t vol = 1;
  for (index_t d : dims) {
    if (vol > std::numeric_limits<index_t>::max() / d)
      throw invalid_input("tensor volume overflows 64-bit indexing");
    vol *= d;
  }
  return vol;
}

index_t flat_index(const std::vector<index_t>& dims,
                   const std::vector<index_t>& idx) {
  require(dims.size() == idx.size(), "index order does not match tensor order");
  index_t flat = 0;
  for (size_t i = 0; i < dims.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < dims[i], "index out of range");
    flat = flat * dims[i] + idx[i];
  }
  return flat;
}

std::vector<index_t> unflatten_index(const std::vector<index_t>& dims,
                                     index_t flat) {
  std::vector<index_t> idx(dims.size());
  for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
    idx[static_cast<size_t>(i)] = flat % dims[static_cast<size_t>(i)];
    flat /= dims[static_cast<size_t>(i)];
  }
  return idx;
}

Tensor::Tensor(std::vector<index_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  index_t vol = volume_of(dims_);
  require(vol == static_cast<index_t>(data_.size()),
          "data length does not match tensor dimensions");
}

Tensor Tensor::zeros(std::vector<index_t> dims) {
  index_t vol = volume_of(dims);
  if (vol > dense_cap())
    throw resource_limit("dense tensor of " + std::to_string(vol) +
                         " entries exceeds dense cap " +
                         std::to_string(dense_cap()));
  return Tensor(std::move(dims), std::vector<double>(static_cast<size_t>(vol), 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

double Tensor::at(const std::vector<index_t>& idx) const {
  return data_[static_cast<size_t>(flat_index(dims_, idx))];
}

SparseTensor::SparseTensor(std::vector<index_t> dims,
                           std::vector<index_t> flat_coords,
                           std::vector<double> values)
    : dims_(std::move(dims)) {
  volume_ = volume_of(dims_);
  require(flat_coords.size() == values.size(),
          "coordinate and value counts differ");
  std::vector<size_t> perm(flat_coords.size());
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::sort(perm.begin(), perm.end(), [&](size_t a, size_t b) {
    return flat_coords[a] < flat_coords[b];
  });
  flat_coords_.reserve(flat_coords.size());
  values_.reserve(values.size());
  for (size_t p : perm) {
    index_t c = flat_coords[p];
    require(c >= 0 && c < volume_, "sparse coordinate out of range");
    double v = values[p];
    if (!flat_coords_.empty() && flat_coords_.back() == c) {
      values_.back() += v;
      continue;
    }
    flat_coords_.push_back(c);
    values_.push_back(v);
  }
  // drop entries that are exactly zero (including cancellations from merging)
  size_t w = 0;
  for (size_t r = 0; r < values_.size(); ++r) {
    if (values_[r] == 0.0) continue;
    flat_coords_[w] = flat_coords_[r];
    values_[w] = values_[r];
    ++w;
  }
  flat_coords_.resize(w);
  values_.resize(w);
}

SparseTensor SparseTensor::from_entries(
    std::vector<index_t> dims, const std::vector<std::vector<index_t>>& coords,
    const std::vector<double>& values) {
  std::vector<index_t> flat(coords.size());
  for (size_t i = 0; i < coords.size(); ++i)
    flat[i] = flat_index(dims, coords[i]);
  return SparseTensor(std::move(dims), std::move(flat), values);
}

std::vector<index_t> SparseTensor::coord(index_t entry) const {
  return unflatten_index(dims_, flat_coords_[static_cast<size_t>(entry)]);
}

Tensor outer_product(const Tensor& a, const Tensor& b) {
  std::vector<index_t> dims = a.dims();
  dims.insert(dims.end(), b.dims().begin(), b.dims().end());
  index_t vol = volume_of(dims);
  if (vol > dense_cap())
    throw resource_limit("outer product exceeds dense cap");
  std::vector<double> out(static_cast<size_t>(vol));
  size_t nb = static_cast<size_t>(b.size());
  for (size_t i = 0; i < static_cast<size_t>(a.size()); ++i) {
    double av = a.data()[i];
    for (size_t j = 0; j < nb; ++j) out[i * nb + j] = av * b.data()[j];
  }
  return Tensor(std::move(dims), std::move(out));
}

Tensor permute_modes(const Tensor& a, const std::vector<int>& perm) {
  require(perm.size() == static_cast<size_t>(a.order()),
          "permutation length does not match order");
  std::vector<bool> seen(perm.size(), false);
  std::vector<index_t> dims(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    require(perm[i] >= 0 && perm[i] < a.order(), "permutation entry out of range");
    require(!seen[static_cast<size_t>(perm[i])], "permutation repeats a mode");
    seen[static_cast<size_t>(perm[i])] = true;
    dims[i] = a.dims()[static_cast<size_t>(perm[i])];
  }
  std::vector<index_t> old_strides(a.order());
  {
    index_t acc = 1;
    for (int i = a.order() - 1; i >= 0; --i) {
      old_strides[static_cast<size_t>(i)] = acc;
      acc *= a.dims()[static_cast<size_t>(i)];
    }
  }
  // stride of new mode i inside the old flat layout
  std::vector<index_t> src_strides(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    src_strides[i] = old_strides[static_cast<size_t>(perm[i])];

  std::vector<double> out(static_cast<size_t>(a.size()));
  std::vector<index_t> idx(perm.size(), 0);
  index_t src = 0;
  for (size_t dst = 0; dst < out.size(); ++dst) {
    out[dst] = a.data()[static_cast<size_t>(src)];
    for (int m = static_cast<int>(perm.size()) - 1; m >= 0; --m) {
      size_t mm = static_cast<size_t>(m);
      if (++idx[mm] < dims[mm]) {
        src += src_strides[mm];
        break;
      }
      idx[mm] = 0;
      src -= src_strides[mm] * (dims[mm] - 1);
    }
  }
  return Tensor(std::move(dims), std::move(out));
}

Tensor reshape(const Tensor& a, std::vector<index_t> dims) {
  require(volume_of(dims) == a.size(), "reshape must preserve volume");
  return Tensor(std::move(dims), a.data());
}

SparseTensor reshape(const SparseTensor& a, std::vector<index_t> dims) {
  require(volume_of(dims) == a.volume(), "reshape must preserve volume");
  return SparseTensor(std::move(dims), a.flat_coords(), a.values());
}

Tensor matricize(const Tensor& a, int t) {
  require(t >= 0 && t < a.order(), "matricization mode out of range");
  index_t rows = a.dims()[static_cast<size_t>(t)];
  index_t cols = a.size() / rows;
  if (t == 0) return reshape(a, {rows, cols});
  std::vector<int> perm;
  perm.push_back(t);
  for (int m = 0; m < a.order(); ++m)
    if (m != t) perm.push_back(m);
  return reshape(permute_modes(a, perm), {rows, cols});
}

Tensor matricize_group(const Tensor& a, const ModeGroup& rows) {
  require(!rows.modes.empty(), "row group must be non-empty");
  std::vector<bool> in_group(static_cast<size_t>(a.order()), false);
  index_t row_dim = 1;
  for (int m : rows.modes) {
    require(m >= 0 && m < a.order(), "group mode out of range");
    require(!in_group[static_cast<size_t>(m)], "group repeats a mode");
    in_group[static_cast<size_t>(m)] = true;
    row_dim *= a.dims()[static_cast<size_t>(m)];
  }
  std::vector<int> perm = rows.modes;
  for (int m = 0; m < a.order(); ++m)
    if (!in_group[static_cast<size_t>(m)]) perm.push_back(m);
  Tensor p = permute_modes(a, perm);
  return reshape(p, {row_dim, a.size() / row_dim});
}

Tensor contract(const Tensor& a, int mode_a, const Tensor& b, int mode_b) {
  require(mode_a >= 0 && mode_a < a.order(), "contraction mode out of range");
  require(mode_b >= 0 && mode_b < b.order(), "contraction mode out of range");
  index_t shared = a.dims()[static_cast<size_t>(mode_a)];
  require(shared == b.dims()[static_cast<size_t>(mode_b)],
          "contracted modes must have equal size");
  Tensor ma = matricize(a, mode_a);  // shared x rest_a
  Tensor mb = matricize(b, mode_b);  // shared x rest_b
  index_t ra = ma.dims()[1], rb = mb.dims()[1];
  std::vector<index_t> dims;
  for (int m = 0; m < a.order(); ++m)
    if (m != mode_a) dims.push_back(a.dims()[static_cast<size_t>(m)]);
  for (int m = 0; m < b.order(); ++m)
    if (m != mode_b) dims.push_back(b.dims()[static_cast<size_t>(m)]);
  if (dims.empty()) {
    long double acc = 0.0L;
    for (size_t s = 0; s < static_cast<size_t>(shared); ++s)
      acc += static_cast<long double>(ma.data()[s]) * mb.data()[s];
    return Tensor::scalar(static_cast<double>(acc));
  }
  index_t vol = volume_of(dims);
  if (vol > dense_cap()) throw resource_limit("contraction exceeds dense cap");
  std::vector<double> out(static_cast<size_t>(vol), 0.0);
  // out[(i,j)] = sum_s ma[s,i] * mb[s,j]
  for (index_t s = 0; s < shared; ++s) {
    const double* arow = ma.data().data() + static_cast<size_t>(s * ra);
    const double* brow = mb.data().data() + static_cast<size_t>(s * rb);
    for (index_t i = 0; i < ra; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data() + static_cast<size_t>(i * rb);
      for (index_t j = 0; j < rb; ++j) orow[j] += av * brow[j];
    }
  }
  return Tensor(std::move(dims), std::move(out));
}

Tensor contract(const Tensor& a, const Tensor& b) {
  return contract(a, a.order() - 1, b, 0);
}

Tensor kronecker(const Tensor& a, const Tensor& b) {
  require(a.order() == 2 && b.order() == 2,
          "kronecker expects 2-mode tensors");
  index_t ma = a.dims()[0], na = a.dims()[1];
  index_t mb = b.dims()[0], nb = b.dims()[1];
  std::vector<index_t> dims{ma * mb, na * nb};
  index_t vol = volume_of(dims);
  if (vol > dense_cap()) throw resource_limit("kronecker exceeds dense cap");
  std::vector<double> out(static_cast<size_t>(vol));
  for (index_t i = 0; i < ma; ++i)
    for (index_t j = 0; j < mb; ++j)
      for (index_t k = 0; k < na; ++k)
        for (index_t l = 0; l < nb; ++l)
          out[static_cast<size_t>((i * mb + j) * (na * nb) + k * nb + l)] =
              a.data()[static_cast<size_t>(i * na + k)] *
              b.data()[static_cast<size_t>(j * nb + l)];
  return Tensor(std::move(dims), std::move(out));
}

Tensor fuse_first_two(const Tensor& a) {
  require(a.order() >= 2, "fuse needs at least two modes");
  std::vector<index_t> dims;
  dims.push_back(a.dims()[0] * a.dims()[1]);
  for (int m = 2; m < a.order(); ++m) dims.push_back(a.dims()[static_cast<size_t>(m)]);
  return Tensor(std::move(dims), a.data());
}

SparseTensor fuse_first_two(const SparseTensor& a) {
  require(a.order() >= 2, "fuse needs at least two modes");
  std::vector<index_t> dims;
  dims.push_back(a.dims()[0] * a.dims()[1]);
  for (int m = 2; m < a.order(); ++m) dims.push_back(a.dims()[static_cast<size_t>(m)]);
  return SparseTensor(std::move(dims), a.flat_coords(), a.values());
}

double frobenius_norm(const Tensor& a) {
  long double acc = 0.0L;
  for (double v : a.data()) acc += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(acc));
}

double frobenius_norm(const SparseTensor& a) {
  long double acc = 0.0L;
  for (double v : a.values()) acc += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(acc));
}

Tensor densify(const SparseTensor& s) {
  if (s.volume() > dense_cap())
    throw resource_limit("densify of " + std::to_string(s.volume()) +
                         " entries exceeds dense cap " +
                         std::to_string(dense_cap()));
  std::vector<double> out(static_cast<size_t>(s.volume()), 0.0);
  for (index_t e = 0; e < s.nnz(); ++e)
    out[static_cast<size_t>(s.flat_coords()[static_cast<size_t>(e)])] =
        s.values()[static_cast<size_t>(e)];
  return Tensor(s.dims(), std::move(out));
}

SparseTensor sparsify(const Tensor& a, double tol) {
  require(tol >= 0.0, "sparsify tolerance must be non-negative");
  std::vector<index_t> flat;
  std::vector<double> vals;
  for (index_t i = 0; i < a.size(); ++i) {
    double v = a.data()[static_cast<size_t>(i)];
    if (std::abs(v) > tol) {
      flat.push_back(i);
      vals.push_back(v);
    }
  }
  return SparseTensor(a.dims(), std::move(flat), std::move(vals));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.dims() == b.dims(), "shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace tnsketch
