#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "tnsketch/linalg.hpp"
#include "tnsketch/rng.hpp"
#include "tnsketch/sketch.hpp"
#include "tnsketch/tensor.hpp"

using namespace tnsketch;

namespace {

Tensor random_tensor(std::vector<index_t> dims, std::uint64_t seed) {
  index_t vol = volume_of(dims);
  std::vector<double> data(static_cast<size_t>(vol));
  RandomStream rs(seed);
  for (index_t i = 0; i < vol; ++i)
    data[static_cast<size_t>(i)] = 2.0 * rs.uniform(static_cast<std::uint64_t>(i)) - 1.0;
  return Tensor(std::move(dims), std::move(data));
}

double sq_norm(const Tensor& t) {
  double n = frobenius_norm(t);
  return n * n;
}

}  // namespace

TEST_CASE("row-count formulas match their closed forms") {
  SketchParams p;
  p.eps = 0.5;
  p.delta = 0.1;
  p.q = 3;
  p.k = 2;
  // ceil(4 * d^2 / (eps^2 delta)) with d = 3: 4*9/0.025 = 1440
  CHECK(rows_countsketch_affine(p, 3) == 1440);
  // ceil(4 * q * k * log(q/delta) / eps) = ceil(48 * log(30)) = 164
  CHECK(rows_sign_regression(p) ==
        static_cast<index_t>(std::ceil(48.0 * std::log(30.0))));
  // ceil(4 * t^2 / (eps^2 delta)) with t = 5: 100/0.025 = 4000
  CHECK(rows_suffix_stage(p, 5) == 4000);
  // scale factor multiplies inside the ceiling
  CHECK(rows_suffix_stage(p, 5, 2.0) == 8000);

  SketchParams s = p.per_step();
  CHECK(s.eps == doctest::Approx(p.eps / 3));
  CHECK(s.delta == doctest::Approx(p.delta / 3));
  CHECK(s.q == p.q);

  SketchParams back = SketchParams::from_json(p.to_json());
  CHECK(back.eps == p.eps);
  CHECK(back.delta == p.delta);
  CHECK(back.q == p.q);
  CHECK(back.k == p.k);

  SketchParams bad;
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), invalid_input);
}

TEST_CASE("countsketch columns have exactly one unit-magnitude entry") {
  SketchOp s = SketchOp::countsketch(7, 40, 123);
  Tensor d = s.dense_matrix();
  for (index_t j = 0; j < 40; ++j) {
    double col_abs = 0.0;
    int nonzeros = 0;
    for (index_t i = 0; i < 7; ++i) {
      double v = d.at({i, j});
      if (v != 0.0) {
        ++nonzeros;
        col_abs += std::abs(v);
      }
    }
    CHECK(nonzeros == 1);
    CHECK(col_abs == 1.0);
  }
}

TEST_CASE("sketches preserve squared norm on average") {
  const index_t n = 50;
  Tensor x = random_tensor({n}, 99);
  double target = sq_norm(x);
  const int trials = 10000;

  auto mean_ratio = [&](auto make) {
    double acc = 0.0;
    for (int tr = 0; tr < trials; ++tr) {
      SketchOp s = make(static_cast<std::uint64_t>(tr));
      acc += sq_norm(apply_mode(s, x, 0)) / target;
    }
    return acc / trials;
  };

  double cs = mean_ratio(
      [&](std::uint64_t sd) { return SketchOp::countsketch(20, n, sd); });
  CHECK(cs == doctest::Approx(1.0).epsilon(0.02));

  double sg = mean_ratio(
      [&](std::uint64_t sd) { return SketchOp::sign(20, n, sd); });
  CHECK(sg == doctest::Approx(1.0).epsilon(0.02));

  double ga = mean_ratio(
      [&](std::uint64_t sd) { return SketchOp::gaussian_k(20, n, sd); });
  CHECK(ga == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("countsketch at the prescribed rows embeds a 3-dim subspace") {
  SketchParams p;
  p.eps = 0.5;
  p.delta = 0.1;
  const index_t n = 200, d = 3;
  Matrix g(n, d);
  RandomStream rs(7);
  for (index_t i = 0; i < n * d; ++i)
    g(i / d, i % d) = rs.normal(static_cast<std::uint64_t>(i));
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix u = qr.householderQ() * Matrix::Identity(n, d);

  int ok = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    SketchOp s = SketchOp::countsketch(rows_countsketch_affine(p, d), n,
                                       static_cast<std::uint64_t>(1000 + rep));
    Tensor su = apply_left(s, from_matrix(u));
    Eigen::BDCSVD<Matrix> svd(to_matrix(su));
    double lo = svd.singularValues()(d - 1), hi = svd.singularValues()(0);
    if (lo * lo >= 1.0 - p.eps && hi * hi <= 1.0 + p.eps) ++ok;
  }
  // failure probability is delta = 0.1 per draw; demand at least 80% success
  CHECK(ok >= 40);
}

TEST_CASE("applying a sketch along a mode equals matrix action on the matricization") {
  Tensor a = random_tensor({4, 5, 3}, 17);
  for (int mode = 0; mode < 3; ++mode) {
    index_t n = a.dims()[static_cast<size_t>(mode)];
    std::vector<SketchOp> ops = {SketchOp::countsketch(6, n, 5),
                                 SketchOp::sign(6, n, 6),
                                 SketchOp::gaussian_k(6, n, 7)};
    for (const auto& s : ops) {
      Tensor lhs = matricize(apply_mode(s, a, mode), mode);
      Tensor rhs = contract(s.dense_matrix(), 1, matricize(a, mode), 0);
      CHECK(max_abs_diff(lhs, rhs) < 1e-12);
    }
  }
}

TEST_CASE("sparse and dense sketch application agree") {
  Tensor a = random_tensor({4, 5, 3}, 27);
  SparseTensor sp = sparsify(a, 0.4);
  Tensor dense = densify(sp);

  SketchOp cs = SketchOp::countsketch(6, 5, 15);
  CHECK(max_abs_diff(densify(apply_mode(cs, sp, 1)), apply_mode(cs, dense, 1)) <
        1e-14);

  SketchOp sg = SketchOp::sign(6, 5, 16);
  CHECK(max_abs_diff(apply_mode_dense(sg, sp, 1), apply_mode(sg, dense, 1)) <
        1e-14);
  CHECK_THROWS_AS(apply_mode(sg, sp, 1), invalid_input);

  SketchOp ga = SketchOp::gaussian_k(6, 5, 17);
  CHECK(max_abs_diff(apply_mode_dense(ga, sp, 1), apply_mode(ga, dense, 1)) <
        1e-14);
}

TEST_CASE("composition applies stages in order and matches its dense matrix") {
  SketchOp s = SketchOp::composed({SketchOp::countsketch(60, 100, 1),
                                   SketchOp::sign(25, 60, 2),
                                   SketchOp::gaussian_k(10, 25, 3)});
  CHECK(s.rows() == 10);
  CHECK(s.cols() == 100);
  CHECK_FALSE(s.preserves_sparsity());

  Tensor x = random_tensor({100}, 37);
  Tensor via_apply = apply_mode(s, x, 0);
  Tensor m = s.dense_matrix();
  REQUIRE(m.dims() == std::vector<index_t>{10, 100});
  Tensor via_matrix = contract(m, 1, reshape(x, {100, 1}), 0);
  CHECK(max_abs_diff(via_apply, reshape(via_matrix, {10})) < 1e-12);

  // a fixed-seed three-stage pipeline keeps the norm within modest distortion
  double ratio = frobenius_norm(via_apply) / frobenius_norm(x);
  CHECK(ratio > 0.5);
  CHECK(ratio < 1.5);

  CHECK_THROWS_AS(SketchOp::composed({SketchOp::sign(5, 10, 1),
                                      SketchOp::sign(5, 11, 2)}),
                  invalid_input);
}

TEST_CASE("identity sketches pass tensors through unchanged") {
  SketchOp id = SketchOp::identity(12);
  CHECK(id.is_identity());
  CHECK(id.rows() == 12);
  Tensor a = random_tensor({3, 12}, 47);
  CHECK(max_abs_diff(apply_mode(id, a, 1), a) == 0.0);
  CHECK_THROWS_AS(apply_mode(id, a, 0), invalid_input);  // size mismatch

  SketchOp adaptive = SketchOp::composed({});
  CHECK(adaptive.is_identity());
  CHECK(adaptive.rows() == -1);
  CHECK(max_abs_diff(apply_mode(adaptive, a, 0), a) == 0.0);
}

TEST_CASE("kron lifts act on the proper factor of a fused index") {
  SketchOp inner = SketchOp::sign(3, 4, 91);
  Tensor s_dense = inner.dense_matrix();
  Tensor x = random_tensor({4 * 5}, 92);  // fused (4, 5), 4 major

  // identity_right: (S (x) I_5) x == vec(S * X) for X = reshape(x, 4, 5)
  SketchOp right = SketchOp::kron_with_identity(inner, 5, KronSide::identity_right);
  CHECK(right.rows() == 15);
  CHECK(right.cols() == 20);
  Tensor got_r = apply_mode(right, x, 0);
  Tensor want_r = reshape(contract(s_dense, 1, reshape(x, {4, 5}), 0), {15});
  CHECK(max_abs_diff(got_r, want_r) < 1e-13);

  // identity_left: (I_5 (x) S) x' == vec(X * S^T) for X = reshape(x', 5, 4)
  SketchOp left = SketchOp::kron_with_identity(inner, 5, KronSide::identity_left);
  Tensor got_l = apply_mode(left, x, 0);
  Tensor want_l =
      reshape(contract(reshape(x, {5, 4}), 1, s_dense, 1), {15});
  CHECK(max_abs_diff(got_l, want_l) < 1e-13);

  // the dense matrix agrees with the explicit kronecker product
  Tensor eye = SketchOp::identity(5).dense_matrix();
  CHECK(max_abs_diff(right.dense_matrix(), kronecker(s_dense, eye)) == 0.0);
  CHECK(max_abs_diff(left.dense_matrix(), kronecker(eye, s_dense)) == 0.0);

  // sparse application works when the inner sketch preserves sparsity
  SketchOp cs_lift = SketchOp::kron_with_identity(
      SketchOp::countsketch(2, 4, 93), 5, KronSide::identity_right);
  SparseTensor sx = sparsify(reshape(x, {20, 1}), 0.3);
  CHECK(max_abs_diff(densify(apply_mode(cs_lift, sx, 0)),
                     apply_mode(cs_lift, densify(sx), 0)) < 1e-14);
}

TEST_CASE("group application fuses modes in the stated order") {
  Tensor a = random_tensor({3, 4, 2, 5}, 57);
  ModeGroup g{{2, 0}};  // fused size 6, mode 2 major
  SketchOp s = SketchOp::countsketch(4, 6, 58);

  Tensor front = apply_group(s, a, g, true);
  REQUIRE(front.dims() == std::vector<index_t>{4, 4, 5});
  // reference: permute to (2,0,1,3), fuse, sketch mode 0
  Tensor ref = apply_mode(
      s, reshape(permute_modes(a, {2, 0, 1, 3}), {6, 4, 5}), 0);
  CHECK(max_abs_diff(front, ref) < 1e-14);

  Tensor back = apply_group(s, a, g, false);
  REQUIRE(back.dims() == std::vector<index_t>{4, 5, 4});
  CHECK(max_abs_diff(back, permute_modes(ref, {1, 2, 0})) < 1e-14);

  SparseTensor sp = sparsify(a, 0.2);
  CHECK(max_abs_diff(densify(apply_group(s, sp, g, true)),
                     apply_group(s, densify(sp), g, true)) < 1e-14);
  CHECK(max_abs_diff(densify(apply_group(s, sp, g, false)),
                     apply_group(s, densify(sp), g, false)) < 1e-14);

  // identity group application just fuses and repositions
  SketchOp id = SketchOp::identity(6);
  Tensor fused = apply_group(id, a, g, true);
  CHECK(max_abs_diff(fused, reshape(permute_modes(a, {2, 0, 1, 3}), {6, 4, 5})) ==
        0.0);

  CHECK_THROWS_AS(apply_group(s, a, ModeGroup{{0, 0}}, true), invalid_input);
  CHECK_THROWS_AS(apply_group(s, a, ModeGroup{{}}, true), invalid_input);
}

TEST_CASE("sketches are reproducible and seed-sensitive") {
  SketchOp a = SketchOp::countsketch(9, 33, 1234);
  SketchOp b = SketchOp::countsketch(9, 33, 1234);
  SketchOp c = SketchOp::countsketch(9, 33, 1235);
  CHECK(a.dense_matrix().data() == b.dense_matrix().data());
  CHECK(a.dense_matrix().data() != c.dense_matrix().data());

  SketchOp g1 = SketchOp::gaussian_k(5, 7, 42);
  SketchOp g2 = SketchOp::gaussian_k(5, 7, 42);
  CHECK(g1.dense_matrix().data() == g2.dense_matrix().data());

  CHECK(derive_seed(10, 0) != derive_seed(10, 1));
  CHECK(derive_seed(10, 0) == derive_seed(10, 0));
}

TEST_CASE("descriptors round-trip every sketch kind") {
  std::vector<SketchOp> ops;
  ops.push_back(SketchOp::countsketch(6, 20, 3));
  ops.push_back(SketchOp::sign(4, 9, 4));
  ops.push_back(SketchOp::gaussian_k(3, 8, 5));
  ops.push_back(SketchOp::identity(11));
  ops.push_back(SketchOp::composed({SketchOp::countsketch(5, 12, 6),
                                    SketchOp::sign(3, 5, 7)}));
  ops.push_back(SketchOp::kron_with_identity(SketchOp::sign(2, 3, 8), 4,
                                             KronSide::identity_left));
  for (const auto& s : ops) {
    SketchOp back = SketchOp::from_descriptor(s.descriptor());
    CHECK(back.rows() == s.rows());
    CHECK(back.cols() == s.cols());
    CHECK(max_abs_diff(back.dense_matrix(), s.dense_matrix()) == 0.0);
  }
}

TEST_CASE("chained mode sketches have the prescribed stage shapes") {
  SketchParams p;
  p.eps = 0.9;
  p.delta = 0.5;
  p.q = 4;
  p.k = 1;
  // target rows: ceil(4 * 1 / (0.81 * 0.5)) = 10
  index_t target = rows_countsketch_affine(p, p.k);
  CHECK(target == 10);

  std::vector<index_t> dims{4, 4, 4, 4};
  TTSketch L = make_tt_sketch(dims, p, 77);
  REQUIRE(L.stages.size() == 4);
  CHECK(L.stages[0].rows() == 4);   // min(10, 4): identity
  CHECK(L.stages[0].is_identity());
  CHECK(L.stages[1].cols() == 16);  // 4 * 4
  CHECK(L.stages[1].rows() == 10);
  CHECK(L.stages[2].cols() == 40);  // 10 * 4
  CHECK(L.stages[2].rows() == 10);
  CHECK(L.stages[3].rows() == 10);

  TTSketch back = TTSketch::from_descriptor(L.descriptor());
  CHECK(back.dims == L.dims);
  REQUIRE(back.stages.size() == L.stages.size());
  Tensor a = random_tensor(dims, 78);
  CHECK(max_abs_diff(tt_sketch_apply_dense(L, a),
                     tt_sketch_apply_dense(back, a)) == 0.0);
}

TEST_CASE("chained sketch application matches explicit stage-by-stage algebra") {
  SketchParams p;
  p.eps = 0.9;
  p.delta = 0.5;
  p.q = 3;
  p.k = 1;
  std::vector<index_t> dims{5, 4, 3};
  TTSketch L = make_tt_sketch(dims, p, 171);
  Tensor a = random_tensor(dims, 172);

  // explicit reference: repeatedly multiply the leading fused index
  Tensor cur = a;
  for (size_t i = 0; i < L.stages.size(); ++i) {
    if (i > 0) cur = fuse_first_two(cur);
    Tensor m = L.stages[i].is_identity()
                   ? cur
                   : contract(L.stages[i].dense_matrix(), 1,
                              matricize(cur, 0), 0);
    if (!L.stages[i].is_identity() && cur.order() > 2) {
      std::vector<index_t> nd = cur.dims();
      nd[0] = L.stages[i].rows();
      m = reshape(m, nd);
    }
    cur = m;
  }
  Tensor want = reshape(cur, {cur.size()});

  CHECK(max_abs_diff(tt_sketch_apply_dense(L, a), want) < 1e-12);
  CHECK(max_abs_diff(tt_sketch_apply_dense(L, sparsify(a, 0.0)), want) < 1e-12);
  // sparsity-destroying stages fall back to dense evaluation mid-chain
  TTSketch mixed;
  mixed.dims = dims;
  mixed.stages = {SketchOp::identity(5), SketchOp::sign(6, 20, 173),
                  SketchOp::countsketch(4, 18, 174)};
  Tensor mixed_dense = tt_sketch_apply_dense(mixed, a);
  Tensor mixed_sparse = tt_sketch_apply_dense(mixed, sparsify(a, 0.0));
  CHECK(max_abs_diff(mixed_dense, mixed_sparse) < 1e-12);
}

TEST_CASE("chained sketch keeps the norm of a fixed tensor across seeds") {
  SketchParams p;
  p.eps = 0.9;
  p.delta = 0.5;
  p.q = 3;
  p.k = 1;
  std::vector<index_t> dims{6, 6, 6};
  Tensor a = random_tensor(dims, 400);
  double base = frobenius_norm(a);
  int ok = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    TTSketch L = make_tt_sketch(dims, p, static_cast<std::uint64_t>(rep));
    double r = frobenius_norm(tt_sketch_apply_dense(L, a)) / base;
    if (r > 0.4 && r < 1.8) ++ok;
  }
  CHECK(ok >= 32);
}
