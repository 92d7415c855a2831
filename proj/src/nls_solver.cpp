#include "crossloc/nls_solver.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace crossloc {

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iter";
    case Termination::Stalled: return "stalled";
    case Termination::Failure: return "failure";
  }
  return "unknown";
}

Factor::Factor(std::vector<BlockId> blocks, int dimension)
    : blocks_(std::move(blocks)), dimension_(dimension),
      sqrt_info_(MatX::Identity(dimension, dimension)) {}

void Factor::set_information(const MatX& information) {
  Eigen::LLT<MatX> llt(information);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidArgument, "information matrix is not positive definite");
  }
  sqrt_info_ = llt.matrixL().transpose();
}

BlockId Problem::add_pose_block(const Pose& value, bool fixed) {
  blocks_.push_back(Block{BlockKind::Pose, value, VecX(), fixed, false});
  return static_cast<BlockId>(blocks_.size() - 1);
}

BlockId Problem::add_vector_block(const VecX& value, bool fixed, bool eliminable) {
  blocks_.push_back(Block{BlockKind::Vector, Pose(), value, fixed, eliminable});
  return static_cast<BlockId>(blocks_.size() - 1);
}

void Problem::add_factor(std::unique_ptr<Factor> factor) {
  for (BlockId b : factor->blocks()) {
    if (b < 0 || static_cast<std::size_t>(b) >= blocks_.size()) {
      throw Error(ErrorCode::InvalidArgument, "factor references unknown block");
    }
  }
  factors_.push_back(std::move(factor));
}

int Problem::tangent_dim(BlockId id) const {
  const Block& b = blocks_.at(id);
  return b.kind == BlockKind::Pose ? 6 : static_cast<int>(b.vec.size());
}

void Problem::retract(BlockId id, const VecX& delta) {
  Block& b = blocks_.at(id);
  if (b.kind == BlockKind::Pose) {
    b.pose = b.pose.retract(delta.head<6>());
  } else {
    b.vec += delta;
  }
}

namespace {

void linearize_one(const Problem& problem, const Factor& f, LinearizedFactor& out) {
  VecX r;
  std::vector<MatX> jac(f.blocks().size());
  out.valid = f.evaluate(problem, r, &jac);
  if (!out.valid) {
    out.cost = 0.0;
    return;
  }
  const MatX& W = f.sqrt_information();
  const VecX wr = W * r;
  const RobustValue rv = robust_weight(f.kernel(), wr.squaredNorm());
  const double scale = std::sqrt(rv.derivative);
  out.cost = rv.loss;
  out.residual = scale * wr;
  out.jacobians.resize(jac.size());
  for (std::size_t b = 0; b < jac.size(); ++b) out.jacobians[b] = scale * (W * jac[b]);
}

double cost_one(const Problem& problem, const Factor& f) {
  VecX r;
  if (!f.evaluate(problem, r, nullptr)) return 0.0;
  return robust_weight(f.kernel(), (f.sqrt_information() * r).squaredNorm()).loss;
}

}  // namespace

void linearize_factors(const Problem& problem, std::vector<LinearizedFactor>& out,
                       Execution exec) {
  const auto& factors = problem.factors();
  const long n = static_cast<long>(factors.size());
  out.resize(factors.size());
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) linearize_one(problem, *factors[i], out[i]);
  } else {
    for (long i = 0; i < n; ++i) linearize_one(problem, *factors[i], out[i]);
  }
}

double evaluate_cost(const Problem& problem, Execution exec) {
  const auto& factors = problem.factors();
  const long n = static_cast<long>(factors.size());
  std::vector<double> costs(factors.size(), 0.0);
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) costs[i] = cost_one(problem, *factors[i]);
  } else {
    for (long i = 0; i < n; ++i) costs[i] = cost_one(problem, *factors[i]);
  }
  // Fixed-order reduction keeps the result bitwise reproducible.
  double total = 0.0;
  for (double c : costs) total += c;
  return total;
}

namespace {

// Layout of the free variables: reduced blocks live in a dense system,
// eliminable blocks are kept as independent diagonal blocks.
struct Layout {
  std::vector<int> reduced_offset;  // -1 when not reduced
  std::vector<int> elim_index;      // -1 when not eliminated
  std::vector<BlockId> elim_blocks;
  int reduced_dim = 0;
};

Layout make_layout(const Problem& problem) {
  const std::size_t nb = problem.num_blocks();
  Layout L;
  L.reduced_offset.assign(nb, -1);
  L.elim_index.assign(nb, -1);

  std::vector<char> elim(nb, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    elim[b] = !problem.is_fixed(static_cast<BlockId>(b)) &&
              problem.is_eliminable(static_cast<BlockId>(b));
  }
  bool schur_ok = true;
  for (const auto& f : problem.factors()) {
    int count = 0;
    for (BlockId b : f->blocks()) count += elim[b];
    if (count > 1) {
      schur_ok = false;
      break;
    }
  }
  if (!schur_ok) std::fill(elim.begin(), elim.end(), 0);

  for (std::size_t b = 0; b < nb; ++b) {
    const auto id = static_cast<BlockId>(b);
    if (problem.is_fixed(id)) continue;
    if (elim[b]) {
      L.elim_index[b] = static_cast<int>(L.elim_blocks.size());
      L.elim_blocks.push_back(id);
    } else {
      L.reduced_offset[b] = L.reduced_dim;
      L.reduced_dim += problem.tangent_dim(id);
    }
  }
  return L;
}

struct ElimBlock {
  MatX H;
  VecX g;
  // (reduced block id, H_lr) pairs
  std::vector<std::pair<BlockId, MatX>> coupling;
};

struct NormalEquations {
  MatX H;
  VecX g;
  std::vector<ElimBlock> elim;
};

void build_normal_equations(const Problem& problem, const Layout& L,
                            const std::vector<LinearizedFactor>& lin, NormalEquations& ne) {
  ne.H.setZero(L.reduced_dim, L.reduced_dim);
  ne.g.setZero(L.reduced_dim);
  ne.elim.assign(L.elim_blocks.size(), ElimBlock{});
  for (std::size_t e = 0; e < L.elim_blocks.size(); ++e) {
    const int d = problem.tangent_dim(L.elim_blocks[e]);
    ne.elim[e].H.setZero(d, d);
    ne.elim[e].g.setZero(d);
  }

  const auto& factors = problem.factors();
  for (std::size_t fi = 0; fi < factors.size(); ++fi) {
    const LinearizedFactor& lf = lin[fi];
    if (!lf.valid) continue;
    const auto& blocks = factors[fi]->blocks();
    int elim_slot = -1;
    int elim_e = -1;
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      if (L.elim_index[blocks[a]] >= 0) {
        elim_slot = static_cast<int>(a);
        elim_e = L.elim_index[blocks[a]];
      }
    }
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      const int oa = L.reduced_offset[blocks[a]];
      if (oa < 0) continue;
      const MatX& Ja = lf.jacobians[a];
      ne.g.segment(oa, Ja.cols()) += Ja.transpose() * lf.residual;
      for (std::size_t b = a; b < blocks.size(); ++b) {
        const int ob = L.reduced_offset[blocks[b]];
        if (ob < 0) continue;
        const MatX& Jb = lf.jacobians[b];
        const MatX blk = Ja.transpose() * Jb;
        ne.H.block(oa, ob, Ja.cols(), Jb.cols()) += blk;
        if (a != b) {
          if (oa == ob) {
            // same block referenced twice
            ne.H.block(oa, ob, Ja.cols(), Jb.cols()) += blk.transpose();
          } else {
            ne.H.block(ob, oa, Jb.cols(), Ja.cols()) += blk.transpose();
          }
        }
      }
    }
    if (elim_slot >= 0) {
      ElimBlock& eb = ne.elim[elim_e];
      const MatX& Jl = lf.jacobians[elim_slot];
      eb.H += Jl.transpose() * Jl;
      eb.g += Jl.transpose() * lf.residual;
      for (std::size_t a = 0; a < blocks.size(); ++a) {
        if (L.reduced_offset[blocks[a]] < 0) continue;
        const MatX Hlr = Jl.transpose() * lf.jacobians[a];
        auto it = std::find_if(eb.coupling.begin(), eb.coupling.end(),
                               [&](const auto& p) { return p.first == blocks[a]; });
        if (it == eb.coupling.end()) {
          eb.coupling.emplace_back(blocks[a], Hlr);
        } else {
          it->second += Hlr;
        }
      }
    }
  }
}

double clamp_diag(double d) { return std::clamp(d, 1e-6, 1e32); }

// Solves the damped system; returns false when a factorization fails.
bool solve_damped(const Layout& L, const NormalEquations& ne, double lambda, VecX& delta_r,
                  std::vector<VecX>& delta_e, double& predicted_decrease) {
  MatX S = ne.H;
  VecX rhs = -ne.g;
  predicted_decrease = 0.0;
  VecX Dr(L.reduced_dim);
  for (int i = 0; i < L.reduced_dim; ++i) {
    Dr[i] = lambda * clamp_diag(ne.H(i, i));
    S(i, i) += Dr[i];
  }

  std::vector<MatX> Hll_inv(ne.elim.size());
  std::vector<VecX> De(ne.elim.size());
  for (std::size_t e = 0; e < ne.elim.size(); ++e) {
    const ElimBlock& eb = ne.elim[e];
    MatX Hll = eb.H;
    De[e].resize(Hll.rows());
    for (int i = 0; i < Hll.rows(); ++i) {
      De[e][i] = lambda * clamp_diag(eb.H(i, i));
      Hll(i, i) += De[e][i];
    }
    Eigen::LDLT<MatX> ldlt(Hll);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return false;
    Hll_inv[e] = ldlt.solve(MatX::Identity(Hll.rows(), Hll.cols()));
    // S -= H_rl Hll^-1 H_lr ; rhs += H_rl Hll^-1 g_l
    for (const auto& [ba, Hla] : eb.coupling) {
      const int oa = L.reduced_offset[ba];
      const MatX tmp = Hla.transpose() * Hll_inv[e];
      rhs.segment(oa, Hla.cols()) += tmp * eb.g;
      for (const auto& [bb, Hlb] : eb.coupling) {
        const int ob = L.reduced_offset[bb];
        S.block(oa, ob, Hla.cols(), Hlb.cols()) -= tmp * Hlb;
      }
    }
  }

  if (L.reduced_dim > 0) {
    Eigen::LDLT<MatX> ldlt(S);
    if (ldlt.info() != Eigen::Success) return false;
    delta_r = ldlt.solve(rhs);
    if (!delta_r.allFinite()) return false;
  } else {
    delta_r.resize(0);
  }

  delta_e.resize(ne.elim.size());
  for (std::size_t e = 0; e < ne.elim.size(); ++e) {
    const ElimBlock& eb = ne.elim[e];
    VecX r = -eb.g;
    for (const auto& [ba, Hla] : eb.coupling) {
      r -= Hla * delta_r.segment(L.reduced_offset[ba], Hla.cols());
    }
    delta_e[e] = Hll_inv[e] * r;
    if (!delta_e[e].allFinite()) return false;
    predicted_decrease += -eb.g.dot(delta_e[e]) + delta_e[e].dot(De[e].cwiseProduct(delta_e[e]));
  }
  if (L.reduced_dim > 0) {
    predicted_decrease += -ne.g.dot(delta_r) + delta_r.dot(Dr.cwiseProduct(delta_r));
  }
  return true;
}

double gradient_inf_norm(const NormalEquations& ne) {
  double m = ne.g.size() ? ne.g.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& eb : ne.elim) m = std::max(m, eb.g.cwiseAbs().maxCoeff());
  return m;
}

double state_norm(const Problem& problem, const Layout& L) {
  double s = 0.0;
  for (std::size_t b = 0; b < problem.num_blocks(); ++b) {
    if (L.reduced_offset[b] < 0 && L.elim_index[b] < 0) continue;
    const auto id = static_cast<BlockId>(b);
    if (problem.kind(id) == BlockKind::Pose) {
      s += problem.pose(id).t().squaredNorm();
    } else {
      s += problem.vector(id).squaredNorm();
    }
  }
  return std::sqrt(s);
}

void apply_step(Problem& problem, const Layout& L, const VecX& delta_r,
                const std::vector<VecX>& delta_e) {
  for (std::size_t b = 0; b < problem.num_blocks(); ++b) {
    const auto id = static_cast<BlockId>(b);
    if (L.reduced_offset[b] >= 0) {
      problem.retract(id, delta_r.segment(L.reduced_offset[b], problem.tangent_dim(id)));
    }
  }
  for (std::size_t e = 0; e < L.elim_blocks.size(); ++e) {
    problem.retract(L.elim_blocks[e], delta_e[e]);
  }
}

struct Snapshot {
  std::vector<Pose> poses;
  std::vector<VecX> vecs;
};

Snapshot take_snapshot(const Problem& p) {
  Snapshot s;
  s.poses.reserve(p.num_blocks());
  s.vecs.reserve(p.num_blocks());
  for (std::size_t b = 0; b < p.num_blocks(); ++b) {
    s.poses.push_back(p.pose(static_cast<BlockId>(b)));
    s.vecs.push_back(p.vector(static_cast<BlockId>(b)));
  }
  return s;
}

void restore(Problem& p, const Snapshot& s) {
  for (std::size_t b = 0; b < p.num_blocks(); ++b) {
    const auto id = static_cast<BlockId>(b);
    if (p.kind(id) == BlockKind::Pose) {
      p.set_pose(id, s.poses[b]);
    } else {
      p.set_vector(id, s.vecs[b]);
    }
  }
}

}  // namespace

SolverReport solve(Problem& problem, const SolverOptions& options) {
  SolverReport report;
  const Layout layout = make_layout(problem);
  report.used_schur = !layout.elim_blocks.empty();

  double cost = evaluate_cost(problem, options.execution);
  report.initial_cost = cost;
  report.final_cost = cost;
  if (!std::isfinite(cost)) {
    report.termination = Termination::Failure;
    return report;
  }
  if (layout.reduced_dim == 0 && layout.elim_blocks.empty()) {
    report.termination = Termination::Converged;
    return report;
  }

  std::vector<LinearizedFactor> lin;
  NormalEquations ne;
  double lambda = options.initial_lambda;
  bool relinearize = true;
  report.termination = Termination::MaxIterations;

  while (report.iterations < options.max_iter) {
    if (relinearize) {
      linearize_factors(problem, lin, options.execution);
      build_normal_equations(problem, layout, lin, ne);
      relinearize = false;
      if (gradient_inf_norm(ne) < options.gradient_tol) {
        report.termination = Termination::Converged;
        break;
      }
    }
    ++report.iterations;

    VecX delta_r;
    std::vector<VecX> delta_e;
    double predicted = 0.0;
    if (!solve_damped(layout, ne, lambda, delta_r, delta_e, predicted)) {
      ++report.singular_retries;
      lambda *= options.lambda_up;
      if (lambda > options.max_lambda) {
        report.termination = Termination::Stalled;
        break;
      }
      continue;
    }

    double step_sq = delta_r.squaredNorm();
    for (const VecX& d : delta_e) step_sq += d.squaredNorm();
    const double x_norm = state_norm(problem, layout);
    if (std::sqrt(step_sq) <= options.step_tol * (x_norm + options.step_tol)) {
      report.termination = Termination::Converged;
      break;
    }

    const Snapshot snap = take_snapshot(problem);
    apply_step(problem, layout, delta_r, delta_e);
    const double new_cost = evaluate_cost(problem, options.execution);
    const double actual = cost - new_cost;

    if (std::isfinite(new_cost) && actual > 0.0 && predicted > 0.0) {
      ++report.accepted_steps;
      report.accepted_costs.push_back(new_cost);
      const double old_cost = cost;
      cost = new_cost;
      lambda = std::max(lambda * options.lambda_down, 1e-12);
      relinearize = true;
      if (new_cost == 0.0 || actual / old_cost < options.function_tol) {
        report.termination = Termination::Converged;
        break;
      }
    } else {
      restore(problem, snap);
      lambda *= options.lambda_up;
      if (lambda > options.max_lambda) {
        report.termination = Termination::Stalled;
        break;
      }
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace crossloc
