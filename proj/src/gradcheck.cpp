#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

#include "bpgnet.hpp"
#include "featinit.hpp"
#include "learning.hpp"
#include "model.hpp"

namespace bpg::gradcheck {

using ad::Var;

namespace {

constexpr const char* kInputBlock = "input";
constexpr const char* kCorrupted = "corrupted";

// Small dimensions shared by the toy problems.
constexpr int kFrames = 8;
constexpr int kMix = 4;
constexpr int kC1 = 4;
constexpr int kDt = 6;
constexpr int kDg = 5;
constexpr int kNode = 4;
constexpr int kHidden = 5;

ModelConfig toy_config(std::uint64_t seed) {
  ModelConfig c;
  c.k_window = kFrames;
  c.d_mix = kMix;
  c.c1 = kC1;
  c.d_t = kDt;
  c.d_g = kDg;
  c.d_node = kNode;
  c.edge_hidden = kHidden;
  c.seed = seed;
  return c;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

// Replaces every value (zero-initialized interaction maps included) so that
// all gradient paths are exercised.
void randomize(ParamStore& store, double scale, std::mt19937_64& rng) {
  for (auto& p : store) p.value = random_matrix(p.value.rows(), p.value.cols(), scale, rng);
}

std::vector<std::string> all_names(const ParamStore& store) {
  std::vector<std::string> names;
  for (const auto& p : store) names.push_back(p.name);
  return names;
}

Var input(ad::Tape& tape, const ParamStore& store, const std::string& name) {
  return tape.external(store.at(name).value);
}

Var flatten(const Var& v) { return ad::reshape(v, 1, v.rows() * v.cols()); }

template <typename State>
Problem problem_for(std::shared_ptr<State> state) {
  Problem p;
  p.store = &state->store;
  p.owner = state;
  return p;
}

struct Plain {
  ParamStore store;
};

Problem linear_problem(std::uint64_t seed, bool corrupt) {
  auto s = std::make_shared<Plain>();
  std::mt19937_64 rng(seed);
  const Conv1d lin = Conv1d::create(s->store, "linear", "linear", 4, 3, 1, ad::Padding::kSame,
                                    Init::kUniform, rng);
  s->store.add("x", kInputBlock, random_matrix(5, 4, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  Plain* raw = s.get();
  p.forward = [raw, lin, corrupt](ad::Tape& tape) {
    const Var y = lin(tape, raw->store, input(tape, raw->store, "x"));
    return corrupt ? ad::scale_gradient(y, 1.01) : y;
  };
  return p;
}

struct FeatureState {
  ParamStore store;
  featinit::FeatureInitializer fi;
  featinit::SensorFeatureBlock features;
};

featinit::SensorFeatureBlock random_features(std::mt19937_64& rng) {
  featinit::SensorFeatureBlock f;
  f.frames = kFrames;
  f.position = random_matrix(kNumSensors * kFrames, featinit::kPositionChannels, 1.0, rng);
  f.rotation = random_matrix(kNumSensors * kFrames, featinit::kRotationChannels, 1.0, rng);
  return f;
}

Problem feature_integration_problem(std::uint64_t seed) {
  auto s = std::make_shared<FeatureState>();
  std::mt19937_64 rng(seed);
  s->fi = featinit::FeatureInitializer::create(s->store, toy_config(seed), default_skeleton(), rng);
  randomize(s->store, 0.5, rng);
  s->features = random_features(rng);
  Problem p = problem_for(s);
  for (const auto& prm : s->store) {
    if (prm.block == blocks::kFeatureIntegration) p.checked.push_back(prm.name);
  }
  FeatureState* raw = s.get();
  p.forward = [raw](ad::Tape& tape) { return raw->fi.fused_sequence(tape, raw->store, raw->features); };
  return p;
}

Problem sci_block_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    featinit::SciBlock widen, keep;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  // An odd-length input with a width change, and an even one without.
  s->widen = featinit::SciBlock::create(s->store, "sci.widen", kMix, kDt, 3, 5.0, rng);
  s->keep = featinit::SciBlock::create(s->store, "sci.keep", kMix, kMix, 3, 5.0, rng);
  randomize(s->store, 0.5, rng);
  s->store.add("x_odd", kInputBlock, random_matrix(kFrames - 1, kMix, 1.0, rng));
  s->store.add("x_even", kInputBlock, random_matrix(kFrames, kMix, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const Var a = raw->widen(tape, raw->store, input(tape, raw->store, "x_odd"));
    const Var b = raw->keep(tape, raw->store, input(tape, raw->store, "x_even"));
    return ad::hstack({flatten(a), flatten(b)});
  };
  return p;
}

Problem temporal_pyramid_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    featinit::TemporalPyramid pyr;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  const int width = kNumSensors * kMix;
  s->pyr = featinit::TemporalPyramid::create(s->store, "pyr", width, kC1, kDt, 3, 5.0, rng);
  randomize(s->store, 0.4, rng);
  s->store.add("x", kInputBlock, random_matrix(kFrames, width, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    return raw->pyr(tape, raw->store, input(tape, raw->store, "x"));
  };
  return p;
}

Problem spatial_split_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    featinit::SpatialSplit split;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  s->split = featinit::SpatialSplit::create(s->store, "split", kDt, kDg, 5.0, rng);
  randomize(s->store, 0.5, rng);
  s->store.add("trunk", kInputBlock, random_matrix(1, kDt, 1.0, rng));
  s->store.add("limb", kInputBlock, random_matrix(1, kDt, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const auto [t, l] = raw->split(tape, raw->store, input(tape, raw->store, "trunk"),
                                   input(tape, raw->store, "limb"));
    return ad::hstack({t, l});
  };
  return p;
}

Problem node_assignment_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    featinit::NodeAssignment assign;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  s->assign = featinit::NodeAssignment::create(s->store, "assign", kDg, kNode, default_skeleton(), rng);
  randomize(s->store, 0.5, rng);
  s->store.add("trunk", kInputBlock, random_matrix(1, kDg, 1.0, rng));
  s->store.add("limb", kInputBlock, random_matrix(1, kDg, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    return raw->assign(tape, raw->store, input(tape, raw->store, "trunk"),
                       input(tape, raw->store, "limb"));
  };
  return p;
}

Problem edge_mlp_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    bpgnet::EdgeMlp ds, latent;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  const auto skel = default_skeleton();
  s->ds = bpgnet::EdgeMlp::create(s->store, "ds", bpgnet::EdgeMlp::Kind::kSkeleton, kNode,
                                  kHidden, skel, rng);
  s->latent = bpgnet::EdgeMlp::create(s->store, "latent", bpgnet::EdgeMlp::Kind::kLatent, kNode,
                                      kHidden, skel, rng);
  randomize(s->store, 0.5, rng);
  s->store.add("x", kInputBlock, random_matrix(kNumJoints, kNode, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const Var x = input(tape, raw->store, "x");
    return ad::hstack({flatten(raw->ds(tape, raw->store, x)),
                       flatten(raw->latent(tape, raw->store, x))});
  };
  return p;
}

Problem gcn_layer_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    bpgnet::BpgNetwork net;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  ModelConfig cfg = toy_config(seed);
  cfg.gcn_layers = 1;
  s->net = bpgnet::BpgNetwork::create(s->store, cfg, default_skeleton(), rng);
  randomize(s->store, 0.5, rng);
  s->store.add("x", kInputBlock, random_matrix(kNumJoints, kNode, 1.0, rng));
  Problem p = problem_for(s);
  for (const auto& prm : s->store) {
    if (prm.block != blocks::kOutputHead) p.checked.push_back(prm.name);
  }
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const Var a_ss = tape.constant(raw->net.a_ss);
    return raw->net.layers[0](tape, raw->store, input(tape, raw->store, "x"), a_ss, nullptr);
  };
  return p;
}

Problem output_head_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    bpgnet::OutputHead head;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  s->head = bpgnet::OutputHead::create(s->store, "head", kNode, rng);
  randomize(s->store, 0.5, rng);
  s->store.add("x", kInputBlock, random_matrix(kNumJoints, kNode, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    return raw->head(tape, raw->store, input(tape, raw->store, "x"));
  };
  return p;
}

Problem kinematics_problem(std::uint64_t seed) {
  struct State {
    ParamStore store;
    SkeletonModel skel = default_skeleton();
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  s->store.add("local", kInputBlock, random_matrix(kNumJoints, 3, 0.8, rng));
  s->store.add("root", kInputBlock, random_matrix(1, 3, 1.0, rng));
  s->store.add("head", kInputBlock, random_matrix(1, 3, 1.0, rng));
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const auto fk = bpgnet::diff_forward_kinematics(tape, input(tape, raw->store, "local"),
                                                    input(tape, raw->store, "root"), raw->skel);
    const Var aligned = bpgnet::align_to(fk.positions, kHeadJoint, input(tape, raw->store, "head"));
    std::vector<Var> parts{flatten(aligned)};
    for (const auto& r : fk.global_rot) parts.push_back(flatten(r));
    return ad::hstack(parts);
  };
  return p;
}

enum class LossTerm { kRot, kPos, kBone };

Problem loss_problem(std::uint64_t seed, LossTerm term) {
  struct State {
    ParamStore store;
    SkeletonModel skel = default_skeleton();
    Matrix target;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  Matrix pred;
  if (term == LossTerm::kBone) {
    // A posed skeleton with per-joint jitter so that paired lengths differ.
    LocalRotations local;
    for (auto& r : local) r = random_matrix(3, 1, 0.6, rng);
    const auto fk = forward_kinematics(local, rotmath::Vec3::Zero(), s->skel);
    pred = learning::to_matrix(fk.positions) + random_matrix(kNumJoints, 3, 0.02, rng);
  } else {
    pred = random_matrix(kNumJoints, 3, 1.0, rng);
    s->target = random_matrix(kNumJoints, 3, 1.0, rng);
  }
  s->store.add("pred", kInputBlock, pred);
  Problem p = problem_for(s);
  p.checked = all_names(s->store);
  p.loss = true;
  State* raw = s.get();
  p.forward = [raw, term](ad::Tape& tape) {
    const Var x = input(tape, raw->store, "pred");
    switch (term) {
      case LossTerm::kRot:
        return learning::loss_rot(x, raw->target);
      case LossTerm::kPos:
        return learning::loss_pos(x, raw->target);
      case LossTerm::kBone:
        break;
    }
    return learning::loss_bone(x, raw->skel);
  };
  return p;
}

Problem full_network_problem(std::uint64_t seed) {
  struct State {
    BpgModel model;
    ParamStore* store_ptr = nullptr;
    featinit::SensorFeatureBlock features;
    rotmath::Vec3 head;
    PoseEstimate target;
  };
  auto s = std::make_shared<State>();
  std::mt19937_64 rng(seed);
  s->model = BpgModel::create(run_config_from(toy_config(seed), TrainConfig{}));
  randomize(s->model.params(), 0.3, rng);
  s->features = random_features(rng);
  s->head = random_matrix(3, 1, 1.0, rng);
  LocalRotations local;
  for (auto& r : local) r = random_matrix(3, 1, 0.6, rng);
  s->target = PoseEstimate::from_local(local, random_matrix(3, 1, 1.0, rng), s->model.skeleton());

  Problem p;
  p.owner = s;
  p.store = &s->model.params();
  p.checked = all_names(s->model.params());
  p.sample = 20;
  p.loss = true;
  State* raw = s.get();
  p.forward = [raw](ad::Tape& tape) {
    const auto out = raw->model.forward(tape, raw->features, raw->head);
    return learning::total_loss(out.axis_angles, out.positions, raw->target, raw->model.skeleton())
        .total;
  };
  return p;
}

std::string format_err(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

std::string BlockReport::to_text() const {
  std::size_t entries = 0;
  for (const auto& t : tensors) entries += t.entries;
  std::string out = "gradcheck " + block + ": " + (pass ? "PASS" : "FAIL") + " max_rel_err " +
                    format_err(max_rel_err) + " tol " + format_err(tol) + " entries " +
                    std::to_string(entries) + "\n";
  for (const auto& t : tensors) {
    if (t.rel_err < tol) continue;
    out += "  parameter " + t.name + "[" + std::to_string(t.row) + "," + std::to_string(t.col) +
           "] analytic " + format_err(t.analytic) + " numeric " + format_err(t.numeric) +
           " rel_err " + format_err(t.rel_err) + "\n";
  }
  return out;
}

BlockReport run(const std::string& block, const Problem& problem, const Options& opt) {
  ParamStore& store = *problem.store;
  BlockReport report;
  report.block = block;
  report.tol = opt.tol;

  std::mt19937_64 rng(opt.seed ^ 0xA5A5A5A5ULL);
  Matrix projection;
  auto objective_value = [&](const Matrix& out) {
    return problem.loss ? out(0, 0) : out.cwiseProduct(projection).sum();
  };

  ad::Tape tape;
  const Var out = problem.forward(tape);
  if (problem.loss && (out.rows() != 1 || out.cols() != 1)) {
    throw std::logic_error("gradcheck: loss problem must return a scalar");
  }
  Var objective = out;
  if (!problem.loss) {
    projection = random_matrix(out.rows(), out.cols(), 1.0, rng);
    objective = ad::sum(ad::mul(out, tape.constant(projection)));
  }
  tape.backward(objective);

  std::vector<Matrix> analytic;
  for (const auto& name : problem.checked) {
    const Matrix& v = store.at(name).value;
    const Matrix* g = tape.external_grad(v);
    analytic.push_back(g ? *g : Matrix::Zero(v.rows(), v.cols()));
  }

  // (tensor, linear index) pairs to compare.
  std::vector<std::pair<std::size_t, Eigen::Index>> entries;
  if (problem.sample == 0) {
    for (std::size_t t = 0; t < problem.checked.size(); ++t) {
      for (Eigen::Index i = 0; i < analytic[t].size(); ++i) entries.emplace_back(t, i);
    }
  } else {
    std::set<std::pair<std::size_t, Eigen::Index>> chosen;
    std::uniform_int_distribution<std::size_t> pick_tensor(0, problem.checked.size() - 1);
    while (chosen.size() < problem.sample) {
      const std::size_t t = pick_tensor(rng);
      std::uniform_int_distribution<Eigen::Index> pick_entry(0, analytic[t].size() - 1);
      chosen.emplace(t, pick_entry(rng));
    }
    entries.assign(chosen.begin(), chosen.end());
  }

  auto evaluate = [&] {
    ad::Tape t(false);
    return objective_value(problem.forward(t).value());
  };

  report.tensors.resize(problem.checked.size());
  for (std::size_t t = 0; t < problem.checked.size(); ++t) {
    report.tensors[t].name = problem.checked[t];
    report.tensors[t].rel_err = -1.0;
  }
  for (const auto& [t, i] : entries) {
    Matrix& value = store.at(problem.checked[t]).value;
    const double saved = value(i);
    value(i) = saved + opt.step;
    const double plus = evaluate();
    value(i) = saved - opt.step;
    const double minus = evaluate();
    value(i) = saved;
    const double numeric = (plus - minus) / (2.0 * opt.step);
    const double a = analytic[t](i);
    const double err = relative_error(a, numeric);
    TensorResult& r = report.tensors[t];
    ++r.entries;
    if (err > r.rel_err) {
      r.rel_err = err;
      r.row = i % value.rows();
      r.col = i / value.rows();
      r.analytic = a;
      r.numeric = numeric;
    }
  }

  std::erase_if(report.tensors, [](const TensorResult& r) { return r.entries == 0; });
  for (const auto& r : report.tensors) {
    if (r.rel_err >= opt.tol) report.pass = false;
    if (report.worst.empty() || r.rel_err > report.max_rel_err) {
      report.max_rel_err = r.rel_err;
      report.worst = r.name;
    }
  }
  return report;
}

const std::vector<std::string>& block_names() {
  static const std::vector<std::string> names{
      "linear",         blocks::kFeatureIntegration,
      blocks::kSciBlock, blocks::kTemporalPyramid,
      blocks::kSpatialSplit, blocks::kNodeAssignment,
      blocks::kEdgeMlp, blocks::kGcnLayer,
      blocks::kOutputHead, "kinematics",
      "loss_rot",       "loss_pos",
      "loss_bone",      "full_network"};
  return names;
}

bool is_block(const std::string& name) {
  if (name == kCorrupted) return true;
  const auto& names = block_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

Problem make_problem(const std::string& block, std::uint64_t seed) {
  if (block == "linear") return linear_problem(seed, false);
  if (block == kCorrupted) return linear_problem(seed, true);
  if (block == blocks::kFeatureIntegration) return feature_integration_problem(seed);
  if (block == blocks::kSciBlock) return sci_block_problem(seed);
  if (block == blocks::kTemporalPyramid) return temporal_pyramid_problem(seed);
  if (block == blocks::kSpatialSplit) return spatial_split_problem(seed);
  if (block == blocks::kNodeAssignment) return node_assignment_problem(seed);
  if (block == blocks::kEdgeMlp) return edge_mlp_problem(seed);
  if (block == blocks::kGcnLayer) return gcn_layer_problem(seed);
  if (block == blocks::kOutputHead) return output_head_problem(seed);
  if (block == "kinematics") return kinematics_problem(seed);
  if (block == "loss_rot") return loss_problem(seed, LossTerm::kRot);
  if (block == "loss_pos") return loss_problem(seed, LossTerm::kPos);
  if (block == "loss_bone") return loss_problem(seed, LossTerm::kBone);
  if (block == "full_network") return full_network_problem(seed);
  throw std::invalid_argument("unknown gradcheck block: " + block);
}

BlockReport check_block(const std::string& block, const Options& opt) {
  return run(block, make_problem(block, opt.seed), opt);
}

std::vector<BlockReport> check_all(const Options& opt) {
  std::vector<BlockReport> out;
  for (const auto& b : block_names()) out.push_back(check_block(b, opt));
  return out;
}

}  // namespace bpg::gradcheck
