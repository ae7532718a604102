#include "tnsketch/sketch.hpp"

#include <cmath>
#include <limits>

#include "tnsketch/rng.hpp"

namespace tnsketch {

void SketchParams::validate() const {
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  require(q >= 1, "q must be at least 1");
  require(k >= 1, "k must be at least 1");
  require(c_cs > 0.0 && c_sign > 0.0 && c_sv > 0.0,
          "sketch constants must be positive");
}

SketchParams SketchParams::per_step() const {
  SketchParams s = *this;
  s.eps = eps / q;
  s.delta = delta / q;
  return s;
}

json SketchParams::to_json() const {
  return json{{"eps", eps},     {"delta", delta},   {"q", q},
              {"k", k},         {"c_cs", c_cs},     {"c_sign", c_sign},
              {"c_sv", c_sv}};
}

SketchParams SketchParams::from_json(const json& j) {
  SketchParams p;
  p.eps = j.at("eps").get<double>();
  p.delta = j.at("delta").get<double>();
  p.q = j.at("q").get<int>();
  p.k = j.at("k").get<index_t>();
  p.c_cs = j.value("c_cs", 4.0);
  p.c_sign = j.value("c_sign", 4.0);
  p.c_sv = j.value("c_sv", 4.0);
  p.validate();
  return p;
}

namespace {

index_t to_row_count(double r) {
  require(r < 9.0e18, "sketch row count overflows 64-bit indexing");
  return std::max<index_t>(1, static_cast<index_t>(r));
}

}  // namespace

index_t rows_countsketch_affine(const SketchParams& p, index_t d) {
  p.validate();
  require(d >= 1, "subspace dimension must be positive");
  double r = std::ceil(p.c_cs * static_cast<double>(d) * static_cast<double>(d) /
                       (p.eps * p.eps * p.delta));
  return to_row_count(r);
}

index_t rows_sign_regression(const SketchParams& p) {
  p.validate();
  double r = std::ceil(p.c_sign * p.q * static_cast<double>(p.k) *
                       std::log(static_cast<double>(p.q) / p.delta) / p.eps);
  return to_row_count(r);
}

index_t rows_suffix_stage(const SketchParams& p, index_t t, double extra) {
  p.validate();
  require(t >= 1, "suffix rank bound must be positive");
  require(extra > 0.0, "suffix stage factor must be positive");
  double r = std::ceil(extra * p.c_sv * static_cast<double>(t) *
                       static_cast<double>(t) / (p.eps * p.eps * p.delta));
  return to_row_count(r);
}

SketchOp SketchOp::countsketch(index_t rows, index_t cols, std::uint64_t seed) {
  require(rows >= 1 && cols >= 1, "sketch shape must be positive");
  SketchOp s;
  s.kind_ = SketchKind::countsketch;
  s.rows_ = rows;
  s.cols_ = cols;
  s.seed_ = seed;
  return s;
}

SketchOp SketchOp::sign(index_t rows, index_t cols, std::uint64_t seed) {
  require(rows >= 1 && cols >= 1, "sketch shape must be positive");
  SketchOp s;
  s.kind_ = SketchKind::sign;
  s.rows_ = rows;
  s.cols_ = cols;
  s.seed_ = seed;
  return s;
}

SketchOp SketchOp::gaussian_k(index_t rows, index_t cols, std::uint64_t seed) {
  require(rows >= 1 && cols >= 1, "sketch shape must be positive");
  SketchOp s;
  s.kind_ = SketchKind::gaussian;
  s.rows_ = rows;
  s.cols_ = cols;
  s.seed_ = seed;
  return s;
}

SketchOp SketchOp::composed(std::vector<SketchOp> stages) {
  SketchOp s;
  s.kind_ = SketchKind::composed;
  if (!stages.empty()) {
    for (size_t i = 1; i < stages.size(); ++i)
      require(stages[i].cols_ == stages[i - 1].rows_,
              "composed stages have mismatched shapes");
    s.cols_ = stages.front().cols_;
    s.rows_ = stages.back().rows_;
  }
  s.stages_ = std::move(stages);
  return s;
}

SketchOp SketchOp::identity(index_t n) {
  require(n >= 1, "identity size must be positive");
  SketchOp s;
  s.kind_ = SketchKind::composed;
  s.rows_ = n;
  s.cols_ = n;
  return s;
}

SketchOp SketchOp::kron_with_identity(SketchOp inner, index_t d, KronSide side) {
  require(d >= 1, "identity block size must be positive");
  require(inner.rows_ > 0, "kron lift needs a fixed-shape inner sketch");
  SketchOp s;
  s.kind_ = SketchKind::kron_identity;
  s.rows_ = inner.rows_ * d;
  s.cols_ = inner.cols_ * d;
  s.kron_d_ = d;
  s.kron_side_ = side;
  s.inner_ = std::make_shared<SketchOp>(std::move(inner));
  return s;
}

const SketchOp& SketchOp::inner() const {
  require(kind_ == SketchKind::kron_identity && inner_ != nullptr,
          "inner() is only defined for kron lifts");
  return *inner_;
}

bool SketchOp::is_identity() const {
  return kind_ == SketchKind::composed && stages_.empty();
}

bool SketchOp::preserves_sparsity() const {
  switch (kind_) {
    case SketchKind::countsketch:
      return true;
    case SketchKind::sign:
    case SketchKind::gaussian:
      return false;
    case SketchKind::composed: {
      for (const auto& st : stages_)
        if (!st.preserves_sparsity()) return false;
      return true;
    }
    case SketchKind::kron_identity:
      return inner_->preserves_sparsity();
  }
  return false;
}

std::pair<index_t, double> SketchOp::countsketch_column(index_t j) const {
  RandomStream rs(seed_);
  std::uint64_t u = static_cast<std::uint64_t>(j);
  index_t row = static_cast<index_t>(
      rs.below(2 * u, static_cast<std::uint64_t>(rows_)));
  double sgn = rs.sign(2 * u + 1);
  return {row, sgn};
}

double SketchOp::sign_entry(index_t i, index_t j) const {
  RandomStream rs(seed_);
  std::uint64_t c = static_cast<std::uint64_t>(i) *
                        static_cast<std::uint64_t>(cols_) +
                    static_cast<std::uint64_t>(j);
  return rs.sign(c) / std::sqrt(static_cast<double>(rows_));
}

double SketchOp::gaussian_entry(index_t i, index_t j) const {
  RandomStream rs(seed_);
  std::uint64_t c = static_cast<std::uint64_t>(i) *
                        static_cast<std::uint64_t>(cols_) +
                    static_cast<std::uint64_t>(j);
  return rs.normal(c) / std::sqrt(static_cast<double>(rows_));
}

Tensor SketchOp::dense_matrix() const {
  require(rows_ > 0 && cols_ > 0, "cannot materialize an adaptive sketch");
  switch (kind_) {
    case SketchKind::countsketch: {
      Tensor z = Tensor::zeros({rows_, cols_});
      std::vector<double> data = z.data();
      for (index_t j = 0; j < cols_; ++j) {
        auto [r, sgn] = countsketch_column(j);
        data[static_cast<size_t>(r * cols_ + j)] = sgn;
      }
      return Tensor({rows_, cols_}, std::move(data));
    }
    case SketchKind::sign:
    case SketchKind::gaussian: {
      Tensor z = Tensor::zeros({rows_, cols_});
      std::vector<double> data = z.data();
      for (index_t i = 0; i < rows_; ++i)
        for (index_t j = 0; j < cols_; ++j)
          data[static_cast<size_t>(i * cols_ + j)] =
              kind_ == SketchKind::sign ? sign_entry(i, j)
                                        : gaussian_entry(i, j);
      return Tensor({rows_, cols_}, std::move(data));
    }
    case SketchKind::composed: {
      if (stages_.empty()) {
        Tensor z = Tensor::zeros({rows_, cols_});
        std::vector<double> data = z.data();
        for (index_t i = 0; i < rows_; ++i)
          data[static_cast<size_t>(i * cols_ + i)] = 1.0;
        return Tensor({rows_, cols_}, std::move(data));
      }
      Tensor acc = stages_.front().dense_matrix();
      for (size_t i = 1; i < stages_.size(); ++i)
        acc = contract(stages_[i].dense_matrix(), 1, acc, 0);
      return acc;
    }
    case SketchKind::kron_identity: {
      Tensor eye = SketchOp::identity(kron_d_).dense_matrix();
      Tensor in = inner_->dense_matrix();
      return kron_side_ == KronSide::identity_right ? kronecker(in, eye)
                                                    : kronecker(eye, in);
    }
  }
  throw invalid_input("unknown sketch kind");
}

json SketchOp::descriptor() const {
  json j;
  switch (kind_) {
    case SketchKind::countsketch:
      j["kind"] = "countsketch";
      break;
    case SketchKind::sign:
      j["kind"] = "sign";
      break;
    case SketchKind::gaussian:
      j["kind"] = "gaussian";
      break;
    case SketchKind::composed:
      j["kind"] = "composed";
      break;
    case SketchKind::kron_identity:
      j["kind"] = "kron_identity";
      break;
  }
  j["rows"] = rows_;
  j["cols"] = cols_;
  if (kind_ == SketchKind::countsketch || kind_ == SketchKind::sign ||
      kind_ == SketchKind::gaussian)
    j["seed"] = seed_;
  if (kind_ == SketchKind::composed && !stages_.empty()) {
    j["stages"] = json::array();
    for (const auto& st : stages_) j["stages"].push_back(st.descriptor());
  }
  if (kind_ == SketchKind::kron_identity) {
    j["inner"] = inner_->descriptor();
    j["d"] = kron_d_;
    j["side"] =
        kron_side_ == KronSide::identity_right ? "identity_right" : "identity_left";
  }
  return j;
}

SketchOp SketchOp::from_descriptor(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "countsketch")
    return countsketch(j.at("rows").get<index_t>(), j.at("cols").get<index_t>(),
                       j.at("seed").get<std::uint64_t>());
  if (kind == "sign")
    return sign(j.at("rows").get<index_t>(), j.at("cols").get<index_t>(),
                j.at("seed").get<std::uint64_t>());
  if (kind == "gaussian")
    return gaussian_k(j.at("rows").get<index_t>(), j.at("cols").get<index_t>(),
                      j.at("seed").get<std::uint64_t>());
  if (kind == "composed") {
    if (!j.contains("stages")) {
      index_t rows = j.at("rows").get<index_t>();
      if (rows > 0) return identity(rows);
      return composed({});
    }
    std::vector<SketchOp> st;
    for (const auto& e : j.at("stages")) st.push_back(from_descriptor(e));
    return composed(std::move(st));
  }
  if (kind == "kron_identity") {
    KronSide side = j.at("side").get<std::string>() == "identity_left"
                        ? KronSide::identity_left
                        : KronSide::identity_right;
    return kron_with_identity(from_descriptor(j.at("inner")),
                              j.at("d").get<index_t>(), side);
  }
  throw invalid_input("unknown sketch kind: " + kind);
}

namespace {

void check_mode_size(const SketchOp& s, index_t dim) {
  if (s.cols() >= 0)
    require(s.cols() == dim, "sketch column count does not match mode size");
}

// splits mode `mode` of size a*b into two adjacent modes (a, b)
std::vector<index_t> split_dims(const std::vector<index_t>& dims, int mode,
                                index_t a, index_t b) {
  std::vector<index_t> nd;
  for (int m = 0; m < static_cast<int>(dims.size()); ++m) {
    if (m == mode) {
      nd.push_back(a);
      nd.push_back(b);
    } else {
      nd.push_back(dims[static_cast<size_t>(m)]);
    }
  }
  return nd;
}

std::vector<index_t> fuse_dims(const std::vector<index_t>& dims, int mode) {
  std::vector<index_t> nd;
  for (int m = 0; m < static_cast<int>(dims.size()); ++m) {
    if (m == mode) {
      nd.push_back(dims[static_cast<size_t>(m)] * dims[static_cast<size_t>(m + 1)]);
      ++m;
    } else {
      nd.push_back(dims[static_cast<size_t>(m)]);
    }
  }
  return nd;
}

struct ModeSplit {
  index_t outer = 1;  // product of dims before the mode
  index_t n = 1;      // the mode itself
  index_t inner = 1;  // product of dims after the mode
};

ModeSplit mode_split(const std::vector<index_t>& dims, int mode) {
  ModeSplit ms;
  for (int m = 0; m < static_cast<int>(dims.size()); ++m) {
    index_t d = dims[static_cast<size_t>(m)];
    if (m < mode)
      ms.outer *= d;
    else if (m == mode)
      ms.n = d;
    else
      ms.inner *= d;
  }
  return ms;
}

}  // namespace

Tensor apply_mode(const SketchOp& s, const Tensor& t, int mode) {
  require(mode >= 0 && mode < t.order(), "sketch mode out of range");
  index_t n = t.dims()[static_cast<size_t>(mode)];
  check_mode_size(s, n);
  if (s.is_identity()) return t;

  switch (s.kind()) {
    case SketchKind::composed: {
      Tensor cur = t;
      for (const auto& st : s.stages()) cur = apply_mode(st, cur, mode);
      return cur;
    }
    case SketchKind::kron_identity: {
      const SketchOp& in = s.inner();
      bool right = s.kron_side() == KronSide::identity_right;
      index_t a = right ? in.cols() : s.kron_d();
      index_t b = right ? s.kron_d() : in.cols();
      Tensor split = reshape(t, split_dims(t.dims(), mode, a, b));
      int target = right ? mode : mode + 1;
      Tensor sk = apply_mode(in, split, target);
      return reshape(sk, fuse_dims(sk.dims(), mode));
    }
    default:
      break;
  }

  ModeSplit ms = mode_split(t.dims(), mode);
  std::vector<index_t> od = t.dims();
  od[static_cast<size_t>(mode)] = s.rows();
  index_t out_vol = volume_of(od);
  if (out_vol > dense_cap()) throw resource_limit("sketch output exceeds dense cap");
  std::vector<double> out(static_cast<size_t>(out_vol), 0.0);
  const double* src = t.data().data();
  index_t rows = s.rows();

  if (s.kind() == SketchKind::countsketch) {
    for (index_t j = 0; j < ms.n; ++j) {
      auto [r, sgn] = s.countsketch_column(j);
      for (index_t o = 0; o < ms.outer; ++o) {
        const double* sp = src + static_cast<size_t>((o * ms.n + j) * ms.inner);
        double* dp = out.data() + static_cast<size_t>((o * rows + r) * ms.inner);
        for (index_t i = 0; i < ms.inner; ++i) dp[i] += sgn * sp[i];
      }
    }
  } else {
    for (index_t j = 0; j < ms.n; ++j) {
      for (index_t r = 0; r < rows; ++r) {
        double w = s.kind() == SketchKind::sign ? s.sign_entry(r, j)
                                                : s.gaussian_entry(r, j);
        if (w == 0.0) continue;
        for (index_t o = 0; o < ms.outer; ++o) {
          const double* sp = src + static_cast<size_t>((o * ms.n + j) * ms.inner);
          double* dp = out.data() + static_cast<size_t>((o * rows + r) * ms.inner);
          for (index_t i = 0; i < ms.inner; ++i) dp[i] += w * sp[i];
        }
      }
    }
  }
  return Tensor(std::move(od), std::move(out));
}

SparseTensor apply_mode(const SketchOp& s, const SparseTensor& t, int mode) {
  require(mode >= 0 && mode < t.order(), "sketch mode out of range");
  index_t n = t.dims()[static_cast<size_t>(mode)];
  check_mode_size(s, n);
  if (s.is_identity()) return t;
  require(s.preserves_sparsity(),
          "sketch kind does not preserve sparsity; use the dense variant");

  switch (s.kind()) {
    case SketchKind::composed: {
      SparseTensor cur = t;
      for (const auto& st : s.stages()) cur = apply_mode(st, cur, mode);
      return cur;
    }
    case SketchKind::kron_identity: {
      const SketchOp& in = s.inner();
      bool right = s.kron_side() == KronSide::identity_right;
      index_t a = right ? in.cols() : s.kron_d();
      index_t b = right ? s.kron_d() : in.cols();
      SparseTensor split = reshape(t, split_dims(t.dims(), mode, a, b));
      int target = right ? mode : mode + 1;
      SparseTensor sk = apply_mode(in, split, target);
      return reshape(sk, fuse_dims(sk.dims(), mode));
    }
    default:
      break;
  }

  ModeSplit ms = mode_split(t.dims(), mode);
  std::vector<index_t> od = t.dims();
  od[static_cast<size_t>(mode)] = s.rows();
  std::vector<index_t> flat(static_cast<size_t>(t.nnz()));
  std::vector<double> vals(static_cast<size_t>(t.nnz()));
  for (index_t e = 0; e < t.nnz(); ++e) {
    index_t f = t.flat_coords()[static_cast<size_t>(e)];
    index_t inner = f % ms.inner;
    index_t j = (f / ms.inner) % ms.n;
    index_t outer = f / (ms.inner * ms.n);
    auto [r, sgn] = s.countsketch_column(j);
    flat[static_cast<size_t>(e)] = (outer * s.rows() + r) * ms.inner + inner;
    vals[static_cast<size_t>(e)] = sgn * t.values()[static_cast<size_t>(e)];
  }
  return SparseTensor(std::move(od), std::move(flat), std::move(vals));
}

Tensor apply_mode_dense(const SketchOp& s, const SparseTensor& t, int mode) {
  require(mode >= 0 && mode < t.order(), "sketch mode out of range");
  index_t n = t.dims()[static_cast<size_t>(mode)];
  check_mode_size(s, n);
  if (s.preserves_sparsity()) return densify(apply_mode(s, t, mode));

  if (s.kind() == SketchKind::composed) {
    // apply sparsity-preserving prefix stages sparsely, then densify
    SparseTensor cur = t;
    size_t i = 0;
    for (; i < s.stages().size() && s.stages()[i].preserves_sparsity(); ++i)
      cur = apply_mode(s.stages()[i], cur, mode);
    require(i < s.stages().size(), "unreachable composed state");
    Tensor dense = apply_mode_dense(s.stages()[i], cur, mode);
    for (++i; i < s.stages().size(); ++i)
      dense = apply_mode(s.stages()[i], dense, mode);
    return dense;
  }
  if (s.kind() == SketchKind::kron_identity) {
    const SketchOp& in = s.inner();
    bool right = s.kron_side() == KronSide::identity_right;
    index_t a = right ? in.cols() : s.kron_d();
    index_t b = right ? s.kron_d() : in.cols();
    SparseTensor split = reshape(t, split_dims(t.dims(), mode, a, b));
    int target = right ? mode : mode + 1;
    Tensor sk = apply_mode_dense(in, split, target);
    return reshape(sk, fuse_dims(sk.dims(), mode));
  }

  ModeSplit ms = mode_split(t.dims(), mode);
  std::vector<index_t> od = t.dims();
  od[static_cast<size_t>(mode)] = s.rows();
  index_t out_vol = volume_of(od);
  if (out_vol > dense_cap()) throw resource_limit("sketch output exceeds dense cap");
  std::vector<double> out(static_cast<size_t>(out_vol), 0.0);
  for (index_t e = 0; e < t.nnz(); ++e) {
    index_t f = t.flat_coords()[static_cast<size_t>(e)];
    double v = t.values()[static_cast<size_t>(e)];
    index_t inner = f % ms.inner;
    index_t j = (f / ms.inner) % ms.n;
    index_t outer = f / (ms.inner * ms.n);
    for (index_t r = 0; r < s.rows(); ++r) {
      double w = s.kind() == SketchKind::sign ? s.sign_entry(r, j)
                                              : s.gaussian_entry(r, j);
      out[static_cast<size_t>((outer * s.rows() + r) * ms.inner + inner)] +=
          w * v;
    }
  }
  return Tensor(std::move(od), std::move(out));
}

Tensor apply_left(const SketchOp& s, const Tensor& m) {
  require(m.order() == 2, "apply_left expects a 2-mode tensor");
  return apply_mode(s, m, 0);
}

SparseTensor apply_left(const SketchOp& s, const SparseTensor& m) {
  require(m.order() == 2, "apply_left expects a 2-mode tensor");
  return apply_mode(s, m, 0);
}

namespace {

struct GroupLayout {
  std::vector<int> group;        // group modes in given order
  std::vector<int> rest;         // remaining modes in original order
  std::vector<index_t> gstride;  // row-major strides inside the fused group
  index_t gdim = 1;
};

GroupLayout group_layout(const std::vector<index_t>& dims, const ModeGroup& g) {
  GroupLayout gl;
  require(!g.modes.empty(), "mode group must be non-empty");
  std::vector<bool> used(dims.size(), false);
  for (int m : g.modes) {
    require(m >= 0 && m < static_cast<int>(dims.size()), "group mode out of range");
    require(!used[static_cast<size_t>(m)], "group repeats a mode");
    used[static_cast<size_t>(m)] = true;
  }
  gl.group = g.modes;
  for (int m = 0; m < static_cast<int>(dims.size()); ++m)
    if (!used[static_cast<size_t>(m)]) gl.rest.push_back(m);
  gl.gstride.resize(g.modes.size());
  index_t acc = 1;
  for (int i = static_cast<int>(g.modes.size()) - 1; i >= 0; --i) {
    gl.gstride[static_cast<size_t>(i)] = acc;
    acc *= dims[static_cast<size_t>(g.modes[static_cast<size_t>(i)])];
  }
  gl.gdim = acc;
  return gl;
}

}  // namespace

SparseTensor apply_group(const SketchOp& s, const SparseTensor& t,
                         const ModeGroup& g, bool front) {
  GroupLayout gl = group_layout(t.dims(), g);
  check_mode_size(s, gl.gdim);
  require(s.is_identity() || s.preserves_sparsity(),
          "sketch kind does not preserve sparsity; use the dense variant");
  index_t srows = s.is_identity() && s.rows() < 0 ? gl.gdim : s.rows();

  std::vector<index_t> od;
  if (front) od.push_back(srows);
  for (int m : gl.rest) od.push_back(t.dims()[static_cast<size_t>(m)]);
  if (!front) od.push_back(srows);

  std::vector<index_t> flat(static_cast<size_t>(t.nnz()));
  std::vector<double> vals(static_cast<size_t>(t.nnz()));
  for (index_t e = 0; e < t.nnz(); ++e) {
    std::vector<index_t> c = t.coord(e);
    index_t gidx = 0;
    for (size_t i = 0; i < gl.group.size(); ++i)
      gidx += c[static_cast<size_t>(gl.group[i])] * gl.gstride[i];
    index_t r = gidx;
    double sgn = 1.0;
    if (!s.is_identity()) {
      auto cs = s.countsketch_column(gidx);
      r = cs.first;
      sgn = cs.second;
    }
    index_t f = front ? r : 0;
    for (int m : gl.rest)
      f = f * t.dims()[static_cast<size_t>(m)] + c[static_cast<size_t>(m)];
    if (!front) f = f * srows + r;
    flat[static_cast<size_t>(e)] = f;
    vals[static_cast<size_t>(e)] = sgn * t.values()[static_cast<size_t>(e)];
  }
  return SparseTensor(std::move(od), std::move(flat), std::move(vals));
}

Tensor apply_group(const SketchOp& s, const Tensor& t, const ModeGroup& g,
                   bool front) {
  GroupLayout gl = group_layout(t.dims(), g);
  check_mode_size(s, gl.gdim);
  // reorder so the group is fused into a single leading mode, then sketch it
  std::vector<int> perm = gl.group;
  perm.insert(perm.end(), gl.rest.begin(), gl.rest.end());
  Tensor p = permute_modes(t, perm);
  std::vector<index_t> fd;
  fd.push_back(gl.gdim);
  for (int m : gl.rest) fd.push_back(t.dims()[static_cast<size_t>(m)]);
  Tensor fused = reshape(p, fd);
  Tensor sk = s.is_identity() ? fused : apply_mode(s, fused, 0);
  if (front) return sk;
  std::vector<int> back_perm;
  for (int m = 1; m < sk.order(); ++m) back_perm.push_back(m);
  back_perm.push_back(0);
  return permute_modes(sk, back_perm);
}

json TTSketch::descriptor() const {
  json j;
  j["dims"] = dims;
  j["stages"] = json::array();
  for (const auto& s : stages) j["stages"].push_back(s.descriptor());
  return j;
}

TTSketch TTSketch::from_descriptor(const json& j) {
  TTSketch L;
  L.dims = j.at("dims").get<std::vector<index_t>>();
  for (const auto& e : j.at("stages"))
    L.stages.push_back(SketchOp::from_descriptor(e));
  return L;
}

TTSketch make_tt_sketch(const std::vector<index_t>& dims,
                        const SketchParams& params, std::uint64_t seed) {
  params.validate();
  require(!dims.empty(), "sketch shape needs at least one mode");
  TTSketch L;
  L.dims = dims;
  index_t target = rows_countsketch_affine(params, params.k);
  index_t prev = 1;
  for (size_t i = 0; i < dims.size(); ++i) {
    index_t cols = prev * dims[i];
    index_t rows = std::min(target, cols);
    if (rows == cols)
      L.stages.push_back(SketchOp::identity(cols));
    else
      L.stages.push_back(SketchOp::countsketch(
          rows, cols, derive_seed(seed, static_cast<std::uint64_t>(i))));
    prev = rows;
  }
  return L;
}

namespace {

void check_tt_sketch_dims(const TTSketch& L, const std::vector<index_t>& dims) {
  require(L.dims == dims, "sketch shape does not match tensor shape");
  require(L.stages.size() == dims.size(), "stage count does not match order");
}

}  // namespace

Tensor tt_sketch_apply_dense(const TTSketch& L, const Tensor& a) {
  check_tt_sketch_dims(L, a.dims());
  Tensor cur = a;
  for (size_t i = 0; i < L.stages.size(); ++i) {
    if (i > 0) cur = fuse_first_two(cur);
    cur = apply_mode(L.stages[i], cur, 0);
  }
  return cur.order() == 1 ? cur : reshape(cur, {cur.size()});
}

Tensor tt_sketch_apply_dense(const TTSketch& L, const SparseTensor& a) {
  check_tt_sketch_dims(L, a.dims());
  SparseTensor cur = a;
  for (size_t i = 0; i < L.stages.size(); ++i) {
    if (i > 0) cur = fuse_first_two(cur);
    if (!L.stages[i].preserves_sparsity() && !L.stages[i].is_identity()) {
      Tensor dense = apply_mode_dense(L.stages[i], cur, 0);
      for (size_t j = i + 1; j < L.stages.size(); ++j) {
        dense = fuse_first_two(dense);
        dense = apply_mode(L.stages[j], dense, 0);
      }
      return dense.order() == 1 ? dense : reshape(dense, {dense.size()});
    }
    cur = apply_mode(L.stages[i], cur, 0);
  }
  Tensor out = densify(cur);
  return out.order() == 1 ? out : reshape(out, {out.size()});
}

}  // namespace tnsketch
