#include "tnsketch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tnsketch/linalg.hpp"
#include "tnsketch/rng.hpp"
#include "tnsketch/tensor_io.hpp"

namespace tnsketch {

namespace {

// Dense tensor with i.i.d. uniform [-1, 1) entries from a counter stream.
Tensor random_dense(const std::vector<index_t>& dims, std::uint64_t seed) {
  index_t vol = volume_of(dims);
  if (vol > dense_cap())
    throw resource_limit("generate: factor volume " + std::to_string(vol) +
                         " exceeds the dense cap " +
                         std::to_string(dense_cap()));
  RandomStream rs(seed);
  std::vector<double> out(static_cast<size_t>(vol));
  for (index_t i = 0; i < vol; ++i)
    out[static_cast<size_t>(i)] = 2.0 * rs.uniform(static_cast<std::uint64_t>(i)) - 1.0;
  return Tensor(dims, std::move(out));
}

Tensor planted_tt_signal(const std::vector<index_t>& dims, index_t rank,
                         std::uint64_t seed, json* structure) {
  int q = static_cast<int>(dims.size());
  require(q >= 2, "generate: a tensor-train instance needs at least 2 modes");
  std::vector<Tensor> cores;
  for (int i = 0; i < q; ++i) {
    std::vector<index_t> cd;
    if (i == 0)
      cd = {dims[0], rank};
    else if (i == q - 1)
      cd = {rank, dims[static_cast<size_t>(i)]};
    else
      cd = {rank, dims[static_cast<size_t>(i)], rank};
    cores.push_back(random_dense(cd, derive_seed(seed, 100 + static_cast<std::uint64_t>(i))));
  }
  TensorTrain train(std::move(cores));
  (*structure)["ranks"] = train.ranks();
  return tt_materialize(train);
}

Tensor planted_tree_signal(const std::vector<index_t>& dims, index_t rank,
                           std::uint64_t seed, json* structure) {
  TreeNetwork shape = balanced_tree_shape(dims);
  for (int v = 0; v < shape.vertex_count(); ++v) {
    const TreeVertex& vx = shape.vertex(v);
    std::vector<index_t> fd(vx.children.size(), rank);
    if (vx.parent != -1) fd.push_back(rank);
    if (vx.open_dim > 0) fd.push_back(vx.open_dim);
    shape.set_factor(v, random_dense(fd, derive_seed(seed, 200 + static_cast<std::uint64_t>(v))));
  }
  (*structure)["tree"] = shape.shape_json();
  return tree_contract(shape);
}

Tensor planted_ring_signal(const std::vector<index_t>& dims, index_t rank,
                           std::uint64_t seed, json* structure) {
  GeneralNetwork g = planted_ring(dims, rank, seed);
  (*structure)["net"] = g.to_json();
  return general_contract(g);
}

Tensor planted_tucker_signal(const std::vector<index_t>& dims, index_t rank,
                             std::uint64_t seed, json* structure) {
  int q = static_cast<int>(dims.size());
  std::vector<index_t> core_dims(static_cast<size_t>(q), rank);
  Tensor cur = random_dense(core_dims, derive_seed(seed, 500));
  for (int m = 0; m < q; ++m) {
    Tensor u = random_dense({dims[static_cast<size_t>(m)], rank},
                            derive_seed(seed, 501 + static_cast<std::uint64_t>(m)));
    // consume the leading core mode; the new tensor mode lands at the back,
    // so after q steps the modes come out in the original order
    cur = contract(cur, 0, u, 1);
  }
  (*structure)["core_rank"] = rank;
  return cur;
}

}  // namespace

TreeNetwork balanced_tree_shape(const std::vector<index_t>& dims) {
  int q = static_cast<int>(dims.size());
  require(q >= 2, "balanced_tree_shape needs at least 2 modes");
  std::vector<std::array<index_t, 3>> links;
  index_t next_internal = q;
  // recursive range split; leaf i carries mode i and id i
  auto build = [&](auto&& self, int lo, int hi, index_t parent) -> void {
    if (hi - lo == 1) {
      links.push_back({static_cast<index_t>(lo), parent, dims[static_cast<size_t>(lo)]});
      return;
    }
    index_t me = next_internal++;
    links.push_back({me, parent, 0});
    int mid = lo + (hi - lo) / 2;
    self(self, lo, mid, me);
    self(self, mid, hi, me);
  };
  build(build, 0, q, -1);
  return TreeNetwork::from_links(links);
}

json ring_shape_json(const std::vector<index_t>& dims, index_t rank) {
  int q = static_cast<int>(dims.size());
  require(q >= 2, "ring_shape_json needs at least 2 modes");
  require(rank >= 1, "ring_shape_json needs rank >= 1");
  json verts = json::array();
  json edges = json::array();
  for (int i = 0; i < q; ++i) {
    verts.push_back(json{{"id", i}, {"open_mode_size", dims[static_cast<size_t>(i)]}});
    edges.push_back(json{{"u", i}, {"v", (i + 1) % q}, {"rank", rank}});
  }
  return json{{"vertices", verts}, {"edges", edges}};
}

GeneralNetwork planted_ring(const std::vector<index_t>& dims, index_t rank,
                            std::uint64_t seed) {
  int q = static_cast<int>(dims.size());
  require(q >= 2, "generate: a ring instance needs at least 2 modes");
  GeneralNetwork g = GeneralNetwork::from_json(ring_shape_json(dims, rank));
  for (int v = 0; v < q; ++v) {
    // every ring vertex has two incident edge instances, then its open mode
    std::vector<index_t> fd = {rank, rank, dims[static_cast<size_t>(v)]};
    g.set_factor(g.vertex(v).id,
                 random_dense(fd, derive_seed(seed, 300 + static_cast<std::uint64_t>(v))));
  }
  return g;
}

Instance generate(const std::string& kind, const std::vector<index_t>& dims,
                  index_t rank, double noise, std::uint64_t seed) {
  require(!dims.empty(), "generate: dims must be non-empty");
  for (index_t d : dims) require(d >= 1, "generate: every mode size must be >= 1");
  require(rank >= 1, "generate: rank must be >= 1");
  require(noise >= 0.0 && std::isfinite(noise),
          "generate: noise must be a finite non-negative factor");
  index_t vol = volume_of(dims);
  if (vol > dense_cap())
    throw resource_limit("generate: instance volume " + std::to_string(vol) +
                         " exceeds the dense cap " + std::to_string(dense_cap()));

  json structure = json::object();
  Tensor signal;
  if (kind == "tt")
    signal = planted_tt_signal(dims, rank, seed, &structure);
  else if (kind == "tree")
    signal = planted_tree_signal(dims, rank, seed, &structure);
  else if (kind == "ring")
    signal = planted_ring_signal(dims, rank, seed, &structure);
  else if (kind == "tucker")
    signal = planted_tucker_signal(dims, rank, seed, &structure);
  else if (kind == "random")
    signal = random_dense(dims, derive_seed(seed, 400));
  else
    throw invalid_input("generate: unknown kind '" + kind +
                        "' (expected tt, tree, ring, tucker or random)");
  require(signal.dims() == dims, "generate: internal shape mismatch");

  double signal_norm = frobenius_norm(signal);
  double noise_abs = noise * signal_norm;
  Tensor a = signal;
  if (noise_abs > 0.0) {
    RandomStream rs(derive_seed(seed, 999));
    std::vector<double> nv(static_cast<size_t>(vol));
    long double acc = 0.0L;
    for (index_t i = 0; i < vol; ++i) {
      double g = rs.normal(static_cast<std::uint64_t>(i));
      nv[static_cast<size_t>(i)] = g;
      acc += static_cast<long double>(g) * g;
    }
    double nn = static_cast<double>(std::sqrt(acc));
    require(nn > 0.0, "generate: degenerate noise draw");
    double scale = noise_abs / nn;
    std::vector<double> av(static_cast<size_t>(vol));
    for (index_t i = 0; i < vol; ++i)
      av[static_cast<size_t>(i)] =
          signal.data()[static_cast<size_t>(i)] + scale * nv[static_cast<size_t>(i)];
    a = Tensor(dims, std::move(av));
  }

  Instance inst;
  inst.tensor = sparsify(a, 0.0);
  inst.signal = std::move(signal);
  inst.manifest = json{{"kind", kind},
                       {"dims", dims},
                       {"rank", rank},
                       {"noise", noise},
                       {"noise_abs", noise_abs},
                       {"seed", seed},
                       {"signal_norm", signal_norm},
                       {"tensor_norm", frobenius_norm(inst.tensor)},
                       {"nnz", inst.tensor.nnz()},
                       {"structure", structure}};
  return inst;
}

TensorTrain tt_svd_oracle(const Tensor& a, index_t k) {
  require(a.defined(), "tt_svd_oracle: undefined tensor");
  require(a.order() >= 2, "tt_svd_oracle needs at least 2 modes");
  require(k >= 1, "tt_svd_oracle: k must be >= 1");
  const std::vector<index_t>& dims = a.dims();
  int q = a.order();
  index_t rest = volume_of(dims) / dims[0];
  Matrix w = to_matrix(reshape(a, {dims[0], rest}));

  std::vector<Tensor> cores;
  index_t r_prev = 1;
  for (int i = 0; i + 1 < q; ++i) {
    Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    index_t r = std::min<index_t>(k, sv.size());
    // drop exact zeros (relative to the leading value) but keep rank >= 1
    double cut = sv.size() > 0 ? sv(0) * 1e-14 : 0.0;
    while (r > 1 && sv(r - 1) <= cut) --r;
    Matrix u = svd.matrixU().leftCols(r);
    if (i == 0)
      cores.push_back(from_matrix(u));
    else
      cores.push_back(reshape(from_matrix(u), {r_prev, dims[static_cast<size_t>(i)], r}));
    Matrix next = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
    if (i + 2 < q) {
      // fold the next mode into the rows for the next sweep step:
      // row-major (r x rest) buffer reinterpreted as (r * n_{i+1}) x rest'
      index_t n_next = dims[static_cast<size_t>(i + 1)];
      rest /= n_next;
      w = Eigen::Map<Matrix>(next.data(), r * n_next, rest);
    } else {
      w = std::move(next);  // (r, n_q): the final core
    }
    r_prev = r;
  }
  cores.push_back(from_matrix(w));  // (r_{q-1}, n_q)
  return TensorTrain(std::move(cores));
}

void net_save(const GeneralNetwork& g, const std::string& dir) {
  namespace fs = std::filesystem;
  require(g.has_factors(), "net_save: the network has no factors");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "cannot create output directory: " + dir);
  json manifest;
  manifest["format"] = "general-network";
  manifest["shape"] = g.to_json();
  for (int v = 0; v < g.vertex_count(); ++v) {
    std::ostringstream name;
    name << "factor_" << g.vertex(v).id << ".tns";
    std::ostringstream body;
    print_tensor_text(body, g.vertex(v).factor);
    write_file_atomic((fs::path(dir) / name.str()).string(), body.str());
  }
  write_file_atomic((fs::path(dir) / "manifest.json").string(),
                    manifest.dump(2) + "\n");
}

GeneralNetwork net_load(const std::string& dir) {
  namespace fs = std::filesystem;
  json manifest;
  try {
    manifest = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  } catch (const json::exception& e) {
    throw invalid_input(std::string("net_load: bad manifest.json: ") + e.what());
  }
  require(manifest.value("format", "") == "general-network",
          "manifest does not describe a general network");
  GeneralNetwork g = GeneralNetwork::from_json(manifest.at("shape"));
  // saved factors are in the normalized layout, which matches the declared
  // order of the saved (self-loop-free) shape
  for (int v = 0; v < g.vertex_count(); ++v) {
    int id = g.vertex(v).id;
    Tensor f = densify(read_tensor_text(
        (fs::path(dir) / ("factor_" + std::to_string(id) + ".tns")).string()));
    g.set_factor(id, f);
  }
  return g;
}

}  // namespace tnsketch
