#include "tnsketch/tree.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "tnsketch/errors.hpp"
#include "tnsketch/linalg.hpp"
#include "tnsketch/rng.hpp"
#include "tnsketch/tensor_io.hpp"

namespace tnsketch {

namespace {

struct Link {
  int id;
  int parent;  // external id, -1 for root
  index_t open_dim;
};

// splice out open-mode-free vertices of tree degree <= 2
void normalize_links(std::vector<Link>& links) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<int, std::vector<int>> children;  // external ids
    std::map<int, Link*> by_id;
    for (auto& l : links) by_id[l.id] = &l;
    for (auto& l : links)
      if (l.parent != -1) children[l.parent].push_back(l.id);

    for (size_t i = 0; i < links.size(); ++i) {
      Link& v = links[i];
      int degree = static_cast<int>(children[v.id].size()) +
                   (v.parent != -1 ? 1 : 0);
      if (v.open_dim > 0 || degree > 2) continue;
      require(links.size() > 1,
              "tree reduces to a single vertex with no open mode");
      if (v.parent != -1) {
        // reattach the at-most-one child to v's parent
        for (int c : children[v.id]) by_id[c]->parent = v.parent;
      } else {
        // root: first child becomes the new root, siblings attach to it
        std::vector<int> cs = children[v.id];
        std::sort(cs.begin(), cs.end());
        by_id[cs.front()]->parent = -1;
        for (size_t j = 1; j < cs.size(); ++j)
          by_id[cs[j]]->parent = cs.front();
      }
      links.erase(links.begin() + static_cast<std::ptrdiff_t>(i));
      changed = true;
      break;
    }
  }
}

}  // namespace

TreeNetwork TreeNetwork::from_links(
    const std::vector<std::array<index_t, 3>>& links) {
  std::vector<Link> ls;
  for (const auto& l : links)
    ls.push_back(Link{static_cast<int>(l[0]), static_cast<int>(l[1]), l[2]});
  normalize_links(ls);

  TreeNetwork t;
  std::sort(ls.begin(), ls.end(),
            [](const Link& a, const Link& b) { return a.id < b.id; });
  for (size_t i = 1; i < ls.size(); ++i)
    require(ls[i].id != ls[i - 1].id, "duplicate vertex id in tree shape");
  std::map<int, int> index_of;
  for (size_t i = 0; i < ls.size(); ++i)
    index_of[ls[i].id] = static_cast<int>(i);

  for (const auto& l : ls) {
    TreeVertex v;
    v.id = l.id;
    require(l.open_dim >= 0, "open mode size cannot be negative");
    v.open_dim = l.open_dim;
    if (l.parent == -1) {
      v.parent = -1;
    } else {
      auto it = index_of.find(l.parent);
      require(it != index_of.end(), "tree shape references unknown parent id");
      require(l.parent != l.id, "vertex cannot be its own parent");
      v.parent = it->second;
    }
    t.vertices_.push_back(std::move(v));
  }
  t.finalize();
  return t;
}

void TreeNetwork::finalize() {
  require(!vertices_.empty(), "tree shape has no vertices");
  root_ = -1;
  for (size_t i = 0; i < vertices_.size(); ++i) {
    vertices_[i].children.clear();
    if (vertices_[i].parent == -1) {
      require(root_ == -1, "tree shape has more than one root");
      root_ = static_cast<int>(i);
    }
  }
  require(root_ != -1, "tree shape has no root");
  for (size_t i = 0; i < vertices_.size(); ++i)
    if (vertices_[i].parent != -1)
      vertices_[static_cast<size_t>(vertices_[i].parent)].children.push_back(
          static_cast<int>(i));
  // vertices are sorted by id, so child index order is child id order
  std::vector<int> order = postorder();
  require(order.size() == vertices_.size(),
          "tree shape is not connected (cycle through parent links)");
  int opens = 0;
  for (const auto& v : vertices_) opens += v.open_dim > 0 ? 1 : 0;
  require(opens >= 1, "tree shape has no open modes");
  for (size_t i = 0; i < vertices_.size(); ++i)
    if (vertices_[i].children.empty() && static_cast<int>(i) != root_)
      require(vertices_[i].open_dim > 0, "leaf vertex lacks an open mode");
}

TreeNetwork TreeNetwork::from_json(const json& shape) {
  require(shape.contains("vertices"), "tree shape needs a vertices array");
  std::vector<std::array<index_t, 3>> links;
  for (const auto& v : shape.at("vertices")) {
    index_t id = v.at("id").get<index_t>();
    index_t parent = v.value("parent", -1);
    index_t open = v.value("open_mode_size", 0);
    links.push_back({id, parent, open});
  }
  return from_links(links);
}

json TreeNetwork::shape_json() const {
  json verts = json::array();
  for (const auto& v : vertices_) {
    json e;
    e["id"] = v.id;
    if (v.parent != -1) e["parent"] = vertices_[static_cast<size_t>(v.parent)].id;
    if (v.open_dim > 0) e["open_mode_size"] = v.open_dim;
    verts.push_back(e);
  }
  return json{{"vertices", verts}};
}

int TreeNetwork::max_degree() const {
  int d = 0;
  for (const auto& v : vertices_)
    d = std::max(d, static_cast<int>(v.children.size()) + (v.parent != -1));
  return d;
}

int TreeNetwork::open_mode_count() const {
  int n = 0;
  for (const auto& v : vertices_) n += v.open_dim > 0 ? 1 : 0;
  return n;
}

int TreeNetwork::mode_of(int v) const {
  if (vertices_[static_cast<size_t>(v)].open_dim == 0) return -1;
  int m = 0;
  for (int i = 0; i < v; ++i)
    if (vertices_[static_cast<size_t>(i)].open_dim > 0) ++m;
  return m;
}

int TreeNetwork::owner_of(int mode) const {
  int m = 0;
  for (size_t i = 0; i < vertices_.size(); ++i)
    if (vertices_[i].open_dim > 0 && m++ == mode) return static_cast<int>(i);
  throw invalid_input("mode index exceeds the network's open mode count");
}

std::vector<index_t> TreeNetwork::open_dims() const {
  std::vector<index_t> d;
  for (const auto& v : vertices_)
    if (v.open_dim > 0) d.push_back(v.open_dim);
  return d;
}

std::vector<int> TreeNetwork::postorder() const {
  std::vector<int> out;
  std::vector<std::pair<int, size_t>> stack{{root_, 0}};
  std::vector<bool> seen(vertices_.size(), false);
  seen[static_cast<size_t>(root_)] = true;
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const auto& ch = vertices_[static_cast<size_t>(v)].children;
    if (next < ch.size()) {
      int c = ch[next++];
      require(!seen[static_cast<size_t>(c)], "tree shape contains a cycle");
      seen[static_cast<size_t>(c)] = true;
      stack.push_back({c, 0});
    } else {
      out.push_back(v);
      stack.pop_back();
    }
  }
  return out;
}

bool TreeNetwork::has_factors() const {
  for (const auto& v : vertices_)
    if (!v.factor.defined()) return false;
  return true;
}

void TreeNetwork::set_factor(int v, Tensor f) {
  TreeVertex& vx = vertices_[static_cast<size_t>(v)];
  int expected = static_cast<int>(vx.children.size()) + (vx.parent != -1) +
                 (vx.open_dim > 0);
  require(f.order() == expected,
          "factor mode count does not match vertex degree plus open mode");
  if (vx.open_dim > 0)
    require(f.dims().back() == vx.open_dim,
            "factor open mode does not match the vertex open mode size");
  vx.factor = std::move(f);
}

Tensor solve_factor(const Tensor& a_v,
                    const std::vector<Tensor>& child_sketches, bool has_open) {
  int c = static_cast<int>(child_sketches.size());
  require(a_v.order() == 1 + c + (has_open ? 1 : 0),
          "solve_factor input has unexpected mode count");
  Tensor x = a_v;
  for (int i = 0; i < c; ++i) {
    const Tensor& m = child_sketches[static_cast<size_t>(i)];
    require(m.order() == 2, "subtree sketches must be matrices");
    Matrix mdag = pinv(to_matrix(m));  // (t x s)
    // child modes queue up at position 1; each solve appends a rank mode
    x = contract(x, 1, from_matrix(mdag), 1);
  }
  // modes now (above, open?, t_1..t_c) -> (t_1..t_c, above, open?)
  std::vector<int> perm;
  for (int i = 0; i < c; ++i) perm.push_back(1 + (has_open ? 1 : 0) + i);
  perm.push_back(0);
  if (has_open) perm.push_back(1);
  return permute_modes(x, perm);
}

namespace {

struct ModeTag {
  bool open;   // true: original tensor mode; false: sketched subtree mode
  int vertex;  // owner (open) or processed subtree root (sketched)
  bool operator==(const ModeTag& o) const {
    return open == o.open && vertex == o.vertex;
  }
};

int find_tag(const std::vector<ModeTag>& tags, const ModeTag& t) {
  for (size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == t) return static_cast<int>(i);
  throw invalid_input("internal tree sweep error: expected mode not present");
}

}  // namespace

TreeResult tree_bicriteria(const SparseTensor& a, const TreeNetwork& shape,
                           const SketchParams& params, std::uint64_t seed) {
  params.validate();
  require(shape.vertex_count() >= 2,
          "tree decomposition needs at least two vertices");
  require(shape.open_mode_count() == a.order(),
          "tree open modes do not match the tensor's mode count");
  require(shape.open_dims() == a.dims(),
          "tree open mode sizes do not match the tensor's shape");

  int q = a.order();
  int d = std::max(shape.max_degree(), 1);
  index_t t_target = rows_sign_regression(params);
  index_t cs_formula = rows_countsketch_affine(params.per_step(), params.k);
  double extra = std::pow(static_cast<double>(q), 4.0) *
                 std::pow(static_cast<double>(d), 3.0);
  index_t sv_formula = rows_suffix_stage(params, t_target, extra);

  TreeNetwork net = shape;
  json steps = json::array();

  SparseTensor cur = a;
  std::vector<ModeTag> tags;
  for (int m = 0; m < q; ++m) tags.push_back({true, shape.owner_of(m)});
  std::map<int, SubtreeSketch> sketches;

  std::vector<int> order = shape.postorder();
  std::uint64_t salt = 0;
  for (int v : order) {
    const TreeVertex& vx = shape.vertex(v);
    bool is_root = v == shape.root();
    bool has_open = vx.open_dim > 0;

    // the modes this vertex resolves: child subtrees in child order, then open
    std::vector<int> group;
    for (int c : vx.children) group.push_back(find_tag(tags, {false, c}));
    if (has_open) group.push_back(find_tag(tags, {true, v}));

    std::vector<Tensor> child_ms;
    for (int c : vx.children) child_ms.push_back(sketches.at(c).m);

    if (is_root) {
      require(group.size() == tags.size(),
              "internal tree sweep error: unresolved modes at the root");
      Tensor x = densify(cur);
      std::vector<int> perm(group.begin(), group.end());
      x = permute_modes(x, perm);
      std::vector<index_t> with_above{1};
      for (index_t dd : x.dims()) with_above.push_back(dd);
      Tensor f = solve_factor(reshape(x, with_above), child_ms, has_open);
      // drop the dummy above mode
      std::vector<index_t> fd = f.dims();
      fd.erase(fd.begin() + static_cast<std::ptrdiff_t>(vx.children.size()));
      net.set_factor(v, reshape(f, fd));
      steps.push_back(json{{"vertex", vx.id}, {"root", true}});
      break;
    }

    // sketch everything above/outside this vertex down to a sign sketch
    ModeGroup g2;
    index_t g2_cols = 1;
    for (size_t m = 0; m < tags.size(); ++m)
      if (std::find(group.begin(), group.end(), static_cast<int>(m)) ==
          group.end()) {
        g2.modes.push_back(static_cast<int>(m));
        g2_cols *= cur.dims()[m];
      }
    index_t cs_rows = std::min(cs_formula, g2_cols);
    SketchOp cs = cs_rows == g2_cols
                      ? SketchOp::identity(g2_cols)
                      : SketchOp::countsketch(cs_rows, g2_cols,
                                              derive_seed(seed, 3 * salt));
    SparseTensor b = apply_group(cs, cur, g2, true);

    index_t t_rows = std::min(t_target, cs_rows);
    Tensor x;
    if (t_rows == cs_rows) {
      x = densify(b);
    } else {
      SketchOp r_op =
          SketchOp::sign(t_rows, cs_rows, derive_seed(seed, 3 * salt + 1));
      x = apply_mode_dense(r_op, b, 0);
    }

    // b/x mode layout: (above, surviving modes in original order); reorder the
    // surviving modes into (above, children in child order, open)
    std::vector<ModeTag> rest;
    for (size_t m = 0; m < tags.size(); ++m)
      if (std::find(group.begin(), group.end(), static_cast<int>(m)) !=
          group.end())
        rest.push_back(tags[m]);
    std::vector<int> perm{0};
    for (int c : vx.children) perm.push_back(1 + find_tag(rest, {false, c}));
    if (has_open) perm.push_back(1 + find_tag(rest, {true, v}));
    x = permute_modes(x, perm);

    Tensor f = solve_factor(x, child_ms, has_open);
    net.set_factor(v, f);

    // subtree sketch: re-map the factor's child edges through the child
    // sketches, fuse (children..., open), and compress to s_v rows
    Tensor stand_in = f;
    for (const Tensor& m : child_ms) stand_in = contract(stand_in, 0, m, 1);
    // stand_in modes: (above, open?, s_1..s_c)
    ModeGroup fuse;
    index_t fused_cols = 1;
    for (size_t i = 0; i < vx.children.size(); ++i) {
      fuse.modes.push_back(static_cast<int>((has_open ? 2 : 1) + i));
      fused_cols *= stand_in.dims()[static_cast<size_t>(fuse.modes.back())];
    }
    if (has_open) {
      fuse.modes.push_back(1);
      fused_cols *= vx.open_dim;
    }
    index_t sv_rows = std::min(sv_formula, fused_cols);
    SketchOp sv = sv_rows == fused_cols
                      ? SketchOp::identity(fused_cols)
                      : SketchOp::countsketch(sv_rows, fused_cols,
                                              derive_seed(seed, 3 * salt + 2));
    Tensor m_v = apply_left(sv, matricize_group(stand_in, fuse));
    sketches.insert_or_assign(v, SubtreeSketch{v, m_v, sv});

    // fold the resolved modes of the working tensor into one sketched mode
    ModeGroup cur_group;
    for (int g : group) cur_group.modes.push_back(g);
    cur = apply_group(sv, cur, cur_group, true);
    std::vector<ModeTag> new_tags{{false, v}};
    for (size_t m = 0; m < tags.size(); ++m)
      if (std::find(group.begin(), group.end(), static_cast<int>(m)) ==
          group.end())
        new_tags.push_back(tags[m]);
    tags = new_tags;

    steps.push_back(json{{"vertex", vx.id},
                         {"leaf", vx.children.empty()},
                         {"outside_cols", g2_cols},
                         {"countsketch_formula", cs_formula},
                         {"countsketch_rows", cs_rows},
                         {"sign_formula", t_target},
                         {"sign_rows", t_rows},
                         {"subtree_cols", fused_cols},
                         {"subtree_formula", sv_formula},
                         {"subtree_rows", sv_rows},
                         {"rank", t_rows}});
    ++salt;
  }

  json ledger;
  ledger["params"] = params.to_json();
  ledger["seed"] = seed;
  ledger["sign_rows_target"] = t_target;
  ledger["max_degree"] = d;
  ledger["steps"] = steps;
  json ranks = json::array();
  for (int v = 0; v < net.vertex_count(); ++v)
    if (v != net.root()) {
      const TreeVertex& vx = net.vertex(v);
      index_t rank = vx.factor.dims()[vx.children.size()];
      ranks.push_back(json{{"vertex", vx.id}, {"rank", rank}});
    }
  ledger["edge_ranks"] = ranks;
  return TreeResult{std::move(net), std::move(ledger)};
}

namespace {

struct CTag {
  int kind;  // 0: parent edge, 1: open mode
  int owner;
};

// returns (parent edge first if any, then open modes sorted by owner id)
std::pair<Tensor, std::vector<int>> contract_subtree(const TreeNetwork& net,
                                                     int v) {
  const TreeVertex& vx = net.vertex(v);
  require(vx.factor.defined(), "network factor missing; solve or load first");
  Tensor t = vx.factor;
  std::vector<CTag> tags;
  for (size_t i = 0; i < vx.children.size(); ++i) tags.push_back({2, 0});
  if (vx.parent != -1) tags.push_back({0, 0});
  if (vx.open_dim > 0) tags.push_back({1, vx.id});

  for (int c : vx.children) {
    auto [sub, owners] = contract_subtree(net, c);
    require(t.dims()[0] == sub.dims()[0],
            "edge rank mismatch between parent and child factors");
    t = contract(t, 0, sub, 0);
    tags.erase(tags.begin());
    for (int o : owners) tags.push_back({1, o});
  }

  // order: parent edge, then opens ascending by owner id
  std::vector<int> perm;
  for (size_t i = 0; i < tags.size(); ++i)
    if (tags[i].kind == 0) perm.push_back(static_cast<int>(i));
  std::vector<std::pair<int, int>> opens;
  for (size_t i = 0; i < tags.size(); ++i)
    if (tags[i].kind == 1) opens.push_back({tags[i].owner, static_cast<int>(i)});
  std::sort(opens.begin(), opens.end());
  std::vector<int> owner_ids;
  for (auto& [owner, pos] : opens) {
    perm.push_back(pos);
    owner_ids.push_back(owner);
  }
  return {permute_modes(t, perm), owner_ids};
}

}  // namespace

Tensor tree_contract(const TreeNetwork& net) {
  require(net.vertex_count() >= 1, "empty network");
  auto [t, owners] = contract_subtree(net, net.root());
  require(static_cast<int>(owners.size()) == net.open_mode_count(),
          "contraction lost open modes");
  return t;
}

double tree_error(const TreeNetwork& net, const Tensor& a) {
  Tensor m = tree_contract(net);
  require(m.dims() == a.dims(), "network shape does not match reference");
  long double acc = 0.0L;
  for (index_t i = 0; i < m.size(); ++i) {
    double dd = m.value_at(i) - a.value_at(i);
    acc += static_cast<long double>(dd) * dd;
  }
  return static_cast<double>(std::sqrt(acc));
}

double tree_error(const TreeNetwork& net, const SparseTensor& a) {
  Tensor m = tree_contract(net);
  require(m.dims() == a.dims(), "network shape does not match reference");
  std::vector<double> diff = m.data();
  for (index_t e = 0; e < a.nnz(); ++e)
    diff[static_cast<size_t>(a.flat_coords()[static_cast<size_t>(e)])] -=
        a.values()[static_cast<size_t>(e)];
  long double acc = 0.0L;
  for (double dd : diff) acc += static_cast<long double>(dd) * dd;
  return static_cast<double>(std::sqrt(acc));
}

void tree_save(const TreeNetwork& net, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "cannot create output directory: " + dir);
  json verts = json::array();
  for (int v = 0; v < net.vertex_count(); ++v) {
    const TreeVertex& vx = net.vertex(v);
    json e;
    e["id"] = vx.id;
    if (vx.parent != -1) e["parent"] = net.vertex(vx.parent).id;
    if (vx.open_dim > 0) e["open_mode_size"] = vx.open_dim;
    if (vx.factor.defined()) {
      std::ostringstream name;
      name << "factor_" << vx.id << ".tns";
      e["factor"] = name.str();
      std::ostringstream body;
      print_tensor_text(body, vx.factor);
      write_file_atomic((fs::path(dir) / name.str()).string(), body.str());
    }
    verts.push_back(e);
  }
  json manifest;
  manifest["format"] = "tree-network";
  manifest["vertices"] = verts;
  write_file_atomic((fs::path(dir) / "manifest.json").string(),
                    manifest.dump(2) + "\n");
}

TreeNetwork tree_load(const std::string& dir) {
  namespace fs = std::filesystem;
  json manifest = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  require(manifest.value("format", "") == "tree-network",
          "manifest does not describe a tree network");

  // rebuild without shape normalization so saved factors stay aligned
  TreeNetwork net;
  std::vector<std::pair<int, int>> id_parent;  // (id, parent external id)
  for (const auto& v : manifest.at("vertices")) {
    TreeVertex vx;
    vx.id = v.at("id").get<int>();
    vx.open_dim = v.value("open_mode_size", index_t{0});
    net.vertices_.push_back(std::move(vx));
    id_parent.push_back({v.at("id").get<int>(), v.value("parent", -1)});
  }
  std::sort(net.vertices_.begin(), net.vertices_.end(),
            [](const TreeVertex& a, const TreeVertex& b) { return a.id < b.id; });
  std::map<int, int> index_of;
  for (size_t i = 0; i < net.vertices_.size(); ++i)
    index_of[net.vertices_[i].id] = static_cast<int>(i);
  for (auto& [id, parent] : id_parent) {
    if (parent == -1) continue;
    auto it = index_of.find(parent);
    require(it != index_of.end(), "manifest references unknown parent id");
    net.vertices_[static_cast<size_t>(index_of.at(id))].parent = it->second;
  }
  net.root_ = -1;
  for (size_t i = 0; i < net.vertices_.size(); ++i) {
    net.vertices_[i].children.clear();
    if (net.vertices_[i].parent == -1) {
      require(net.root_ == -1, "manifest has more than one root");
      net.root_ = static_cast<int>(i);
    }
  }
  require(net.root_ != -1, "manifest has no root vertex");
  for (size_t i = 0; i < net.vertices_.size(); ++i)
    if (net.vertices_[i].parent != -1)
      net.vertices_[static_cast<size_t>(net.vertices_[i].parent)]
          .children.push_back(static_cast<int>(i));

  for (const auto& v : manifest.at("vertices")) {
    if (!v.contains("factor")) continue;
    int idx = index_of.at(v.at("id").get<int>());
    Tensor f = densify(read_tensor_text(
        (fs::path(dir) / v.at("factor").get<std::string>()).string()));
    net.set_factor(idx, std::move(f));
  }
  return net;
}

}  // namespace tnsketch
