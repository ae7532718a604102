#include "tnsketch/tt.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "tnsketch/linalg.hpp"
#include "tnsketch/rng.hpp"
#include "tnsketch/tensor_io.hpp"

namespace tnsketch {

TensorTrain::TensorTrain(std::vector<Tensor> cores) : cores_(std::move(cores)) {
  require(cores_.size() >= 2, "a tensor train needs at least two cores");
  int q = static_cast<int>(cores_.size());
  require(cores_.front().order() == 2, "first core must be 2-mode (n_1, r_1)");
  require(cores_.back().order() == 2, "last core must be 2-mode (r_{q-1}, n_q)");
  for (int i = 1; i + 1 < q; ++i)
    require(cores_[static_cast<size_t>(i)].order() == 3,
            "interior cores must be 3-mode (r, n, r')");
  for (int i = 0; i + 1 < q; ++i) {
    const auto& left = cores_[static_cast<size_t>(i)].dims();
    const auto& right = cores_[static_cast<size_t>(i + 1)].dims();
    require(left.back() == right.front(),
            "adjacent cores disagree on the connecting rank");
  }
}

std::vector<index_t> TensorTrain::dims() const {
  std::vector<index_t> d;
  int q = order();
  for (int i = 0; i < q; ++i) {
    const auto& cd = cores_[static_cast<size_t>(i)].dims();
    d.push_back(i == 0 ? cd[0] : cd[1]);
  }
  return d;
}

std::vector<index_t> TensorTrain::ranks() const {
  std::vector<index_t> r;
  int q = order();
  for (int i = 0; i + 1 < q; ++i)
    r.push_back(cores_[static_cast<size_t>(i)].dims().back());
  return r;
}

Tensor tt_materialize(const TensorTrain& x) {
  std::vector<index_t> full = x.dims();
  index_t vol = volume_of(full);
  if (vol > dense_cap())
    throw resource_limit("materialized train exceeds dense cap");
  Tensor cur = x.cores().front();
  for (size_t i = 1; i < x.cores().size(); ++i)
    cur = contract(cur, cur.order() - 1, x.cores()[i], 0);
  return cur;
}

double tt_error(const TensorTrain& x, const Tensor& a) {
  Tensor m = tt_materialize(x);
  require(m.dims() == a.dims(), "train shape does not match reference");
  long double acc = 0.0L;
  for (index_t i = 0; i < m.size(); ++i) {
    double d = m.value_at(i) - a.value_at(i);
    acc += static_cast<long double>(d) * d;
  }
  return static_cast<double>(std::sqrt(acc));
}

double tt_error(const TensorTrain& x, const SparseTensor& a) {
  Tensor m = tt_materialize(x);
  require(m.dims() == a.dims(), "train shape does not match reference");
  std::vector<double> diff = m.data();
  for (index_t e = 0; e < a.nnz(); ++e)
    diff[static_cast<size_t>(a.flat_coords()[static_cast<size_t>(e)])] -=
        a.values()[static_cast<size_t>(e)];
  long double acc = 0.0L;
  for (double d : diff) acc += static_cast<long double>(d) * d;
  return static_cast<double>(std::sqrt(acc));
}

void tt_save(const TensorTrain& x, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "cannot create output directory: " + dir);
  json manifest;
  manifest["format"] = "tensor-train";
  manifest["order"] = x.order();
  manifest["dims"] = x.dims();
  manifest["ranks"] = x.ranks();
  json files = json::array();
  for (int i = 0; i < x.order(); ++i) {
    std::ostringstream name;
    name << "core_" << i << ".tns";
    files.push_back(name.str());
    std::ostringstream body;
    print_tensor_text(body, x.cores()[static_cast<size_t>(i)]);
    write_file_atomic((fs::path(dir) / name.str()).string(), body.str());
  }
  manifest["cores"] = files;
  write_file_atomic((fs::path(dir) / "manifest.json").string(),
                    manifest.dump(2) + "\n");
}

TensorTrain tt_load(const std::string& dir) {
  namespace fs = std::filesystem;
  json manifest = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  require(manifest.value("format", "") == "tensor-train",
          "manifest does not describe a tensor train");
  std::vector<Tensor> cores;
  for (const auto& name : manifest.at("cores"))
    cores.push_back(densify(
        read_tensor_text((fs::path(dir) / name.get<std::string>()).string())));
  return TensorTrain(std::move(cores));
}

Tensor extend_embedding(const SketchOp& stage, const Tensor& w,
                        const Tensor& core) {
  require(w.order() == 2, "embedding state must be a matrix");
  require(core.order() == 3, "extend_embedding expects a 3-mode core");
  require(w.dims()[1] == core.dims()[0],
          "embedding rank does not match core rank");
  Tensor t = contract(w, 1, core, 0);   // (s, n, r')
  Tensor fused = fuse_first_two(t);     // (s*n, r') with s major
  return apply_left(stage, fused);
}

Tensor tt_sketch_apply_tt(const TTSketch& L, const TensorTrain& x) {
  require(L.dims == x.dims(), "sketch shape does not match train shape");
  Tensor m = Tensor({1, 1}, {1.0});
  int q = x.order();
  for (int i = 0; i < q; ++i) {
    Tensor core = x.cores()[static_cast<size_t>(i)];
    if (i == 0)
      core = reshape(core, {1, core.dims()[0], core.dims()[1]});
    else if (i == q - 1)
      core = reshape(core, {core.dims()[0], core.dims()[1], 1});
    m = extend_embedding(L.stages[static_cast<size_t>(i)], m, core);
  }
  return reshape(m, {m.dims()[0]});
}

namespace {

// Orthonormal row-space basis of the (t x (n*r)) slice stack Y (t, n, r):
// returns a core (rank, n, r) whose grouped matricization over (n, r) has
// orthonormal rows.
Tensor core_from_rows(const Tensor& y) {
  require(y.order() == 3, "expected a 3-mode regression solution");
  Tensor z = matricize_group(y, ModeGroup{{1, 2}});  // (n*r, t)
  Matrix b = orthonormal_cols(to_matrix(z));
  Tensor bt = permute_modes(from_matrix(b), {1, 0});  // (rank, n*r)
  return reshape(bt, {bt.dims()[0], y.dims()[1], y.dims()[2]});
}

}  // namespace

TTResult tt_bicriteria(const SparseTensor& a, const SketchParams& params,
                       std::uint64_t seed) {
  params.validate();
  int q = a.order();
  require(q >= 2, "train approximation needs at least two modes");
  const std::vector<index_t>& dims = a.dims();

  SketchParams step = params.per_step();
  // the sign-row formula already accounts for the q sequential solves; the
  // countsketch and suffix stages get per-step budgets
  index_t cs_formula = rows_countsketch_affine(step, params.k);
  index_t t_formula = rows_sign_regression(params);
  index_t sv_formula = rows_suffix_stage(step, t_formula);

  json ledger;
  ledger["q"] = q;
  ledger["dims"] = dims;
  ledger["params"] = params.to_json();
  ledger["seed"] = seed;
  ledger["sign_rows_target"] = t_formula;
  json steps = json::array();

  // state: cur has modes (n_1..n_i, s_{i+1}) while processing step i;
  // p is the (s_{i+1} x r_i) embedding of the already-extracted suffix train.
  SparseTensor cur = a;
  Tensor p = Tensor({1, 1}, {1.0});
  std::vector<Tensor> cores(static_cast<size_t>(q));

  for (int i = q; i >= 2; --i) {
    bool first = i == q;  // no suffix mode yet
    index_t n_i = dims[static_cast<size_t>(i - 1)];
    index_t s_next = first ? 1 : cur.dims().back();

    // sketch the fused prefix modes down, then compress with a sign sketch
    index_t prefix_cols = 1;
    for (int m = 0; m + 1 < i; ++m) prefix_cols *= dims[static_cast<size_t>(m)];
    ModeGroup prefix;
    for (int m = 0; m + 1 < i; ++m) prefix.modes.push_back(m);
    index_t cs_rows = std::min(cs_formula, prefix_cols);
    SketchOp cs = cs_rows == prefix_cols
                      ? SketchOp::identity(prefix_cols)
                      : SketchOp::countsketch(
                            cs_rows, prefix_cols,
                            derive_seed(seed, 4 * static_cast<std::uint64_t>(i)));
    SparseTensor pre = apply_group(cs, cur, prefix, true);

    index_t t_rows = std::min(t_formula, cs_rows);
    Tensor c;
    if (t_rows == cs_rows) {
      c = densify(pre);
    } else {
      SketchOp r_op = SketchOp::sign(
          t_rows, cs_rows,
          derive_seed(seed, 4 * static_cast<std::uint64_t>(i) + 1));
      c = apply_mode_dense(r_op, pre, 0);
    }
    // c: (t, n_i, s_next), or (t, n_i) at the first step

    // map the sketched suffix back to rank coordinates and orthonormalize
    Tensor y;
    if (first) {
      y = reshape(c, {c.dims()[0], n_i, 1});
    } else {
      Matrix pdag = pinv(to_matrix(p));  // (r_i x s_next)
      y = contract(c, 2, from_matrix(pdag), 1);
    }
    Tensor core = core_from_rows(y);  // (r_{i-1}, n_i, r_i)
    index_t rank = core.dims()[0];
    cores[static_cast<size_t>(i - 1)] =
        i == q ? reshape(core, {rank, n_i}) : core;

    // compress (n_i, suffix) into the new suffix mode
    index_t fused_cols = n_i * s_next;
    index_t sv_rows = std::min(sv_formula, fused_cols);
    SketchOp sv = sv_rows == fused_cols
                      ? SketchOp::identity(fused_cols)
                      : SketchOp::countsketch(
                            sv_rows, fused_cols,
                            derive_seed(seed, 4 * static_cast<std::uint64_t>(i) + 2));
    ModeGroup fuse_group;
    if (first) {
      fuse_group.modes = {i - 1};
    } else {
      fuse_group.modes = {i, i - 1};  // sketch-major fuse: (s_next, n_i)
    }
    cur = apply_group(sv, cur, fuse_group, false);

    // advance the suffix-train embedding through the new core
    Tensor rev = permute_modes(core, {2, 1, 0});  // (r_i, n_i, r_{i-1})
    p = extend_embedding(sv, first ? Tensor({1, 1}, {1.0}) : p, rev);

    steps.push_back(json{{"i", i},
                         {"prefix_cols", prefix_cols},
                         {"countsketch_formula", cs_formula},
                         {"countsketch_rows", cs_rows},
                         {"sign_formula", t_formula},
                         {"sign_rows", t_rows},
                         {"suffix_cols", fused_cols},
                         {"suffix_formula", sv_formula},
                         {"suffix_rows", sv_rows},
                         {"rank", rank}});
  }

  // cur now has modes (n_1, s_1); solve the remaining regression exactly
  Tensor lhs = densify(cur);              // (n_1, s_1)
  Matrix pdag = pinv(to_matrix(p));       // (r_1 x s_1)
  Tensor u1 = contract(lhs, 1, from_matrix(pdag), 1);  // (n_1, r_1)
  cores[0] = u1;

  ledger["steps"] = steps;
  TTResult out{TensorTrain(std::move(cores)), std::move(ledger)};
  json ranks = json::array();
  for (index_t r : out.train.ranks()) ranks.push_back(r);
  out.ledger["ranks"] = ranks;
  return out;
}

TTResult tt_bicriteria(const Tensor& a, const SketchParams& params,
                       std::uint64_t seed) {
  return tt_bicriteria(sparsify(a, 0.0), params, seed);
}

}  // namespace tnsketch
