#include "tnsketch/tucker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tnsketch/errors.hpp"
#include "tnsketch/rng.hpp"

namespace tnsketch {

namespace {

// k x n matrix with i.i.d. N(0, 1/k) entries; `base` offsets the counter so
// independent draws can share one stream
Matrix gaussian_rows(index_t k, index_t n, RandomStream& rs,
                     std::uint64_t base) {
  Matrix r(k, n);
  double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (index_t i = 0; i < k; ++i)
    for (index_t j = 0; j < n; ++j)
      r(i, j) = scale * rs.normal(base + static_cast<std::uint64_t>(i * n + j));
  return r;
}

// apply M (new x old) along `mode`, keeping the mode position unchanged
Tensor mode_apply(const Tensor& t, int mode, const Matrix& m) {
  require(m.cols() == t.dims()[static_cast<size_t>(mode)],
          "matrix width does not match the tensor mode size");
  Tensor c = contract(t, mode, from_matrix(m), 1);
  int q = c.order();
  std::vector<int> perm(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i)
    perm[static_cast<size_t>(i)] = i < mode ? i : i == mode ? q - 1 : i - 1;
  return permute_modes(c, perm);
}

// orthonormal basis for evaluation: a zero factor projects onto nothing
Matrix eval_basis(const Matrix& u) {
  if (u.norm() == 0.0) return Matrix::Zero(u.rows(), 1);
  return orthonormal_cols(u);
}

double sq_norm(const Tensor& t) {
  double n = frobenius_norm(t);
  return n * n;
}

}  // namespace

void FptParams::validate() const {
  require(p >= 1, "p must be at least 1");
  require(q >= p, "p cannot exceed the tensor order q");
  require(k >= 1, "target rank must be at least 1");
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  require(trials >= 1, "trial count must be at least 1");
  require(enum_cap >= 1, "enumeration cap must be at least 1");
  require(eval_mode == "exact" || eval_mode == "pcp",
          "evaluation mode must be 'exact' or 'pcp'");
  require(c_cs > 0.0 && c_sign > 0.0, "sketch constants must be positive");
}

json FptParams::to_json() const {
  return json{{"p", p},           {"q", q},
              {"k", k},           {"eps", eps},
              {"delta", delta},   {"trials", trials},
              {"seed", seed},     {"eval_mode", eval_mode},
              {"enum_cap", enum_cap}, {"c_cs", c_cs},
              {"c_sign", c_sign}};
}

FptParams FptParams::from_json(const json& j) {
  FptParams p;
  p.p = j.value("p", p.p);
  p.q = j.value("q", p.q);
  p.k = j.value("k", p.k);
  p.eps = j.value("eps", p.eps);
  p.delta = j.value("delta", p.delta);
  p.trials = j.value("trials", p.trials);
  p.seed = j.value("seed", p.seed);
  p.eval_mode = j.value("eval_mode", p.eval_mode);
  p.enum_cap = j.value("enum_cap", p.enum_cap);
  p.c_cs = j.value("c_cs", p.c_cs);
  p.c_sign = j.value("c_sign", p.c_sign);
  return p;
}

std::optional<Matrix> gaussian_exact_k_regress(const Matrix& a,
                                               const Matrix& b,
                                               std::uint64_t seed) {
  require(a.rows() == b.rows(), "A and B must have the same row count");
  require(a.cols() < a.rows(), "need k < n for the exactly-k-row sketch");
  index_t k = a.cols();
  index_t n = a.rows();
  RandomStream rs(seed);
  Matrix r = gaussian_rows(k, n, rs, 0);
  Matrix ra = r * a;
  Eigen::FullPivLU<Matrix> lu(ra);
  if (!lu.isInvertible()) return std::nullopt;
  return lu.solve(r * b);
}

std::optional<Matrix> kron_gaussian_regress(const Matrix& a1, const Matrix& a2,
                                            const Matrix& b,
                                            std::uint64_t seed) {
  require(b.rows() == a1.rows() * a2.rows(),
          "B must have A1.rows * A2.rows rows");
  require(a2.cols() < a2.rows(), "need k < n for the exactly-k-row sketch");
  index_t k = a2.cols();
  index_t n = a2.rows();
  index_t m = a1.rows();
  RandomStream rs(seed);
  Matrix r = gaussian_rows(k, n, rs, 0);
  Matrix ra2 = r * a2;  // k x k
  // (I_m (x) R) applied blockwise to B
  Matrix sb(m * k, b.cols());
  for (index_t i = 0; i < m; ++i)
    sb.middleRows(i * k, k) = r * b.middleRows(i * n, n);
  // A1 (x) RA2, assembled blockwise
  Matrix sys(m * k, a1.cols() * k);
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < a1.cols(); ++j)
      sys.block(i * k, j * k, k, k) = a1(i, j) * ra2;
  Eigen::ColPivHouseholderQR<Matrix> qr(sys);
  if (qr.rank() < sys.cols()) return std::nullopt;
  return qr.solve(sb);
}

double evaluate_candidate(const std::vector<Matrix>& factors,
                          const Tensor& target) {
  require(!factors.empty(), "need at least one factor");
  require(static_cast<int>(factors.size()) <= target.order(),
          "more factors than tensor modes");
  double total = sq_norm(target);
  Tensor cur = target;
  for (size_t m = 0; m < factors.size(); ++m) {
    require(factors[m].rows() == target.dims()[m],
            "factor rows do not match the tensor mode size");
    cur = mode_apply(cur, static_cast<int>(m),
                     eval_basis(factors[m]).transpose());
  }
  return std::max(total - sq_norm(cur), 0.0);
}

TuckerCandidate fpt_tucker(const SparseTensor& a, const FptParams& params) {
  params.validate();
  require(params.q == a.order(),
          "params.q must match the tensor's mode count");
  const int p = params.p;
  const int q = params.q;
  const index_t k = params.k;
  const int trials = params.trials;
  const std::vector<index_t>& dims = a.dims();

  index_t tuples = 1;
  for (int m = 0; m < p; ++m) {
    if (tuples > params.enum_cap / trials)
      throw resource_limit("candidate tuple count trials^p exceeds the "
                           "enumeration cap");
    tuples *= trials;
  }

  SketchParams sp;
  sp.eps = params.eps;
  sp.delta = params.delta;
  sp.q = p;
  sp.k = k;
  sp.c_cs = params.c_cs;
  sp.c_sign = params.c_sign;
  const index_t cs_formula = rows_countsketch_affine(sp.per_step(), k);
  const index_t sign_formula = rows_sign_regression(sp);

  json mode_log = json::array();
  std::vector<std::vector<Matrix>> guesses(static_cast<size_t>(p));
  for (int m = 0; m < p; ++m) {
    index_t other_cols = volume_of(dims) / dims[static_cast<size_t>(m)];
    ModeGroup others;
    for (int j = 0; j < q; ++j)
      if (j != m) others.modes.push_back(j);

    index_t cs_rows = std::min(cs_formula, other_cols);
    Matrix am;
    if (others.modes.empty()) {
      am = to_matrix(reshape(densify(a), {dims[static_cast<size_t>(m)], 1}));
    } else if (cs_rows == other_cols) {
      am = to_matrix(matricize_group(
          densify(a), ModeGroup{std::vector<int>{m}}));
    } else {
      SketchOp s = SketchOp::countsketch(
          cs_rows, other_cols, derive_seed(params.seed, 8 + 4 * static_cast<std::uint64_t>(m)));
      am = to_matrix(densify(apply_group(s, a, others, false)));
    }

    index_t s_rows = std::min(sign_formula, cs_rows);
    Matrix ahat;
    if (s_rows == cs_rows) {
      ahat = am;
    } else {
      SketchOp tm = SketchOp::sign(
          s_rows, cs_rows,
          derive_seed(params.seed, 8 + 4 * static_cast<std::uint64_t>(m) + 1));
      ahat = am * to_matrix(tm.dense_matrix()).transpose();
    }
    mode_log.push_back(json{
        {"mode", m},
        {"countsketch",
         json{{"formula", cs_formula},
              {"rows", cs_rows},
              {"cols", other_cols},
              {"identity", cs_rows == other_cols}}},
        {"sign", json{{"formula", sign_formula},
                      {"rows", s_rows},
                      {"identity", s_rows == cs_rows}}}});

    RandomStream rs(
        derive_seed(params.seed, 8 + 4 * static_cast<std::uint64_t>(m) + 2));
    guesses[static_cast<size_t>(m)].reserve(static_cast<size_t>(trials));
    index_t s_cols = ahat.cols();
    for (int t = 0; t < trials; ++t) {
      Matrix r = gaussian_rows(
          k, s_cols, rs,
          static_cast<std::uint64_t>(t) *
              static_cast<std::uint64_t>(k * s_cols));
      guesses[static_cast<size_t>(m)].push_back(ahat * r.transpose());
    }
  }

  // evaluation target: the dense tensor, or its trailing-mode countsketch
  json pcp_log;
  Tensor target;
  if (params.eval_mode == "pcp" && p < q) {
    index_t proj_cols = 1;
    for (int j = p; j < q; ++j) proj_cols *= dims[static_cast<size_t>(j)];
    // row formula on k^p columns-to-preserve; evaluated in double first so
    // an astronomical k^p cleanly lands on the identity clamp
    double kf = 1.0;
    for (int m = 0; m < p; ++m) kf *= static_cast<double>(k);
    double formula_d = sp.c_cs * kf * kf / (sp.eps * sp.eps * sp.delta);
    index_t pcp_formula =
        formula_d >= static_cast<double>(proj_cols)
            ? proj_cols
            : rows_countsketch_affine(sp, static_cast<index_t>(kf));
    index_t pcp_rows = std::min(pcp_formula, proj_cols);
    ModeGroup trailing;
    for (int j = p; j < q; ++j) trailing.modes.push_back(j);
    if (pcp_rows == proj_cols) {
      target = densify(a);
    } else {
      SketchOp s = SketchOp::countsketch(pcp_rows, proj_cols,
                                         derive_seed(params.seed, 1));
      target = densify(apply_group(s, a, trailing, false));
    }
    pcp_log = json{{"formula", formula_d},
                   {"rows", pcp_rows},
                   {"cols", proj_cols},
                   {"identity", pcp_rows == proj_cols}};
  } else {
    target = densify(a);
  }

  std::vector<std::vector<Matrix>> bases(static_cast<size_t>(p));
  for (int m = 0; m < p; ++m)
    for (int t = 0; t < trials; ++t)
      bases[static_cast<size_t>(m)].push_back(
          eval_basis(guesses[static_cast<size_t>(m)][static_cast<size_t>(t)])
              .transpose());

  const double target_norm2 = sq_norm(target);
  const double exit_floor = 1e-12 * target_norm2;

  std::vector<int> tuple(static_cast<size_t>(p), 0);
  std::vector<Tensor> pref(static_cast<size_t>(p) + 1);
  pref[0] = target;
  for (int m = 0; m < p; ++m)
    pref[static_cast<size_t>(m) + 1] =
        mode_apply(pref[static_cast<size_t>(m)], m,
                   bases[static_cast<size_t>(m)][0]);

  double best_cost = target_norm2;
  std::vector<int> best_tuple = tuple;
  bool have_best = false;
  bool early_exit = false;
  index_t evaluated = 0;
  while (true) {
    double cost =
        std::max(target_norm2 - sq_norm(pref[static_cast<size_t>(p)]), 0.0);
    ++evaluated;
    if (!have_best || cost < best_cost) {
      have_best = true;
      best_cost = cost;
      best_tuple = tuple;
      if (cost <= exit_floor) {
        early_exit = true;
        break;
      }
    }
    int pos = p - 1;
    while (pos >= 0 && tuple[static_cast<size_t>(pos)] == trials - 1) {
      tuple[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++tuple[static_cast<size_t>(pos)];
    for (int m = pos; m < p; ++m)
      pref[static_cast<size_t>(m) + 1] = mode_apply(
          pref[static_cast<size_t>(m)], m,
          bases[static_cast<size_t>(m)][static_cast<size_t>(
              tuple[static_cast<size_t>(m)])]);
  }

  TuckerCandidate out;
  for (int m = 0; m < p; ++m)
    out.factors.push_back(
        guesses[static_cast<size_t>(m)][static_cast<size_t>(
            best_tuple[static_cast<size_t>(m)])]);
  out.tuple = best_tuple;
  out.cost = best_cost;
  out.manifest = json{{"params", params.to_json()},
                      {"modes", mode_log},
                      {"norm2", frobenius_norm(a) * frobenius_norm(a)},
                      {"target_norm2", target_norm2},
                      {"tuples_total", tuples},
                      {"tuples_evaluated", evaluated},
                      {"early_exit", early_exit},
                      {"best", json{{"tuple", best_tuple}, {"cost", best_cost}}}};
  if (!pcp_log.is_null()) out.manifest["pcp"] = pcp_log;
  if (params.eval_mode == "pcp") {
    // also report the exact cost of the winner when the dense tensor fits
    if (volume_of(dims) <= dense_cap()) {
      double exact = evaluate_candidate(out.factors, densify(a));
      out.manifest["best"]["cost_exact"] = exact;
    }
  }
  return out;
}

double exact_k_embedding_rate(index_t k, index_t n, int draws,
                              std::uint64_t seed) {
  require(k >= 1 && n > k && draws >= 1, "need n > k >= 1 and draws >= 1");
  // fixed orthonormal U from a seeded random matrix
  RandomStream us(derive_seed(seed, 0xA11CE));
  Matrix raw(n, k);
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < k; ++j)
      raw(i, j) = us.normal(static_cast<std::uint64_t>(i * k + j));
  Matrix u = orthonormal_cols(raw);
  RandomStream rs(seed);
  int hits = 0;
  for (int d = 0; d < draws; ++d) {
    Matrix r = gaussian_rows(
        k, n, rs,
        static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(k * n));
    Eigen::BDCSVD<Matrix> svd(r * u);
    const auto& sv = svd.singularValues();
    bool ok = true;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      ok = ok && sv(i) >= 2.0 / 3.0 && sv(i) <= 4.0 / 3.0;
    hits += ok;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

}  // namespace tnsketch
