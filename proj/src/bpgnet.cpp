#include "bpgnet.hpp"

#include <cstdio>
#include <stdexcept>

namespace bpg::bpgnet {

using ad::Var;

Matrix skeleton_adjacency(const SkeletonModel& skel) {
  Matrix a = Matrix::Identity(kNumJoints, kNumJoints);
  for (const auto& [p, c] : skel.bones()) {
    a(p, c) = 1.0;
    a(c, p) = 1.0;
  }
  return a;
}

Matrix static_adjacency(const SkeletonModel& skel) {
  const Matrix a = skeleton_adjacency(skel);
  const Eigen::VectorXd d = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * a * d.asDiagonal();
}

Var compose_adjacency(const Var& a_ss, const Var& a_ds, const Var& a_l) {
  return ad::add(ad::add(a_ss, a_ds), a_l);
}

Var gcn_layer(const Var& x, const Var& a_h, const Var& w, double slope, bool residual) {
  Var out = ad::leaky_relu(ad::matmul(a_h, ad::matmul(x, w)), slope);
  if (residual && x.cols() == out.cols()) out = ad::add(out, x);
  return out;
}

EdgeMlp EdgeMlp::create(ParamStore& store, std::string name, Kind kind, int node_features,
                        int hidden, const SkeletonModel& skel, std::mt19937_64& rng) {
  EdgeMlp m;
  m.name = std::move(name);
  m.kind = kind;
  m.in = kNumJoints * node_features;
  m.hidden = hidden;
  if (kind == Kind::kSkeleton) {
    for (const auto& [p, c] : skel.bones()) m.slots.push_back({{p, c}, {c, p}});
  } else {
    for (int i = 0; i < kNumJoints; ++i) {
      for (int j = i; j < kNumJoints; ++j) {
        if (i == j) {
          m.slots.push_back({{i, i}});
        } else {
          m.slots.push_back({{i, j}, {j, i}});
        }
      }
    }
  }
  const int out = m.outputs();
  store.add(m.w0(), blocks::kEdgeMlp, uniform_init(m.in, hidden, m.in, rng));
  store.add(m.b0(), blocks::kEdgeMlp, uniform_init(1, hidden, m.in, rng));
  store.add(m.w1(), blocks::kEdgeMlp, uniform_init(hidden, out, hidden, rng));
  store.add(m.b1(), blocks::kEdgeMlp, uniform_init(1, out, hidden, rng));
  return m;
}

Var EdgeMlp::operator()(ad::Tape& tape, const ParamStore& store, const Var& nodes) const {
  if (nodes.rows() != kNumJoints || nodes.rows() * nodes.cols() != in) {
    throw std::invalid_argument(name + ": expected 22 x " + std::to_string(in / kNumJoints) +
                                " node features");
  }
  const Var x = ad::reshape(nodes, 1, in);
  const Var h = ad::relu(ad::add_row(ad::matmul(x, tape.external(store.at(w0()).value)),
                                     tape.external(store.at(b0()).value)));
  const Var raw = ad::add_row(ad::matmul(h, tape.external(store.at(w1()).value)),
                              tape.external(store.at(b1()).value));
  return ad::scatter(raw, kNumJoints, kNumJoints, slots);
}

Var GcnLayer::operator()(ad::Tape& tape, const ParamStore& store, const Var& x, const Var& a_ss,
                         AdjacencySet* trace) const {
  const Var a_ds = dynamic_skeleton(tape, store, x);
  const Var a_l = latent(tape, store, x);
  const Var a_h = compose_adjacency(a_ss, a_ds, a_l);
  if (trace) {
    *trace = AdjacencySet{a_ss.value(), a_ds.value(), a_l.value(), a_h.value()};
  }
  return gcn_layer(x, a_h, tape.external(store.at(weight).value), slope, residual);
}

OutputHead OutputHead::create(ParamStore& store, const std::string& name, int d_node,
                              std::mt19937_64& rng) {
  OutputHead h;
  for (int j = 0; j < kNumJoints; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), ".j%02d", j);
    h.node_maps.push_back(Conv1d::create(store, name + buf, blocks::kOutputHead, d_node, 3, 1,
                                         ad::Padding::kSame, Init::kUniform, rng));
  }
  return h;
}

Var OutputHead::operator()(ad::Tape& tape, const ParamStore& store, const Var& nodes) const {
  std::vector<Var> rows;
  rows.reserve(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    rows.push_back(node_maps[j](tape, store, ad::block(nodes, j, 0, 1, nodes.cols())));
  }
  return ad::vstack(rows);
}

BpgNetwork BpgNetwork::create(ParamStore& store, const ModelConfig& cfg,
                              const SkeletonModel& skel, std::mt19937_64& rng) {
  BpgNetwork net;
  net.a_ss = static_adjacency(skel);
  for (int l = 0; l < cfg.gcn_layers; ++l) {
    const std::string prefix = "bpg.l" + std::to_string(l);
    GcnLayer layer;
    layer.weight = prefix + ".w";
    store.add(layer.weight, blocks::kGcnLayer,
              uniform_init(cfg.d_node, cfg.d_node, cfg.d_node, rng));
    layer.dynamic_skeleton = EdgeMlp::create(store, prefix + ".ds", EdgeMlp::Kind::kSkeleton,
                                             cfg.d_node, cfg.edge_hidden, skel, rng);
    layer.latent = EdgeMlp::create(store, prefix + ".latent", EdgeMlp::Kind::kLatent,
                                   cfg.d_node, cfg.edge_hidden, skel, rng);
    layer.slope = cfg.leaky_slope;
    layer.residual = cfg.gcn_residual;
    net.layers.push_back(std::move(layer));
  }
  net.head = OutputHead::create(store, "bpg.head", cfg.d_node, rng);
  return net;
}

Var BpgNetwork::operator()(ad::Tape& tape, const ParamStore& store, const Var& nodes,
                           std::vector<AdjacencySet>* trace) const {
  const Var a_ss_var = tape.constant(a_ss);
  if (trace) trace->assign(layers.size(), AdjacencySet{});
  Var x = nodes;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = layers[l](tape, store, x, a_ss_var, trace ? &(*trace)[l] : nullptr);
  }
  return head(tape, store, x);
}

DiffFk diff_forward_kinematics(ad::Tape& tape, const Var& local, const Var& root,
                               const SkeletonModel& skel) {
  if (local.rows() != kNumJoints || local.cols() != 3 || root.rows() != 1 || root.cols() != 3) {
    throw std::invalid_argument("diff_forward_kinematics: expected 22x3 rotations, 1x3 root");
  }
  DiffFk fk;
  fk.global_rot.resize(kNumJoints);
  std::vector<Var> pos(kNumJoints);
  fk.global_rot[0] = ad::rodrigues(ad::block(local, 0, 0, 1, 3));
  pos[0] = root;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = skel.parent[j];
    const Var r = ad::rodrigues(ad::block(local, j, 0, 1, 3));
    fk.global_rot[j] = ad::matmul(fk.global_rot[p], r);
    const Var off = tape.constant(skel.offset[j]);
    pos[j] = ad::add(pos[p], ad::transpose(ad::matmul(fk.global_rot[p], off)));
  }
  fk.positions = ad::vstack(pos);
  return fk;
}

Var align_to(const Var& positions, int anchor, const Var& target) {
  const Var delta = ad::sub(target, ad::block(positions, anchor, 0, 1, 3));
  return ad::add_row(positions, delta);
}

}  // namespace bpg::bpgnet
