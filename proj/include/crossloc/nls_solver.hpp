#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crossloc/residuals.hpp"

namespace crossloc {

using BlockId = int;

enum class BlockKind { Pose, Vector };

class Problem;

/// One error term. Subclasses return the raw residual and per-block Jacobians
/// in tangent coordinates; the base class owns whitening and the robust kernel.
class Factor {
 public:
  Factor(std::vector<BlockId> blocks, int dimension);
  virtual ~Factor() = default;

  /// Returns false when the factor cannot be evaluated at this point (e.g. a
  /// landmark behind the camera); such factors are skipped for that pass.
  virtual bool evaluate(const Problem& problem, VecX& residual,
                        std::vector<MatX>* jacobians) const = 0;

  int dimension() const { return dimension_; }
  const std::vector<BlockId>& blocks() const { return blocks_; }

  const RobustKernel& kernel() const { return kernel_; }
  void set_kernel(const RobustKernel& k) { kernel_ = k; }
  /// Stores W with W^T W = information.
  void set_information(const MatX& information);
  const MatX& sqrt_information() const { return sqrt_info_; }

 private:
  std::vector<BlockId> blocks_;
  int dimension_;
  RobustKernel kernel_;
  MatX sqrt_info_;
};

class Problem {
 public:
  BlockId add_pose_block(const Pose& value, bool fixed = false);
  /// `eliminable` blocks are Schur-complemented out of the normal equations
  /// when no factor couples two of them.
  BlockId add_vector_block(const VecX& value, bool fixed = false, bool eliminable = false);
  void add_factor(std::unique_ptr<Factor> factor);

  void set_fixed(BlockId id, bool fixed) { blocks_.at(id).fixed = fixed; }
  bool is_fixed(BlockId id) const { return blocks_.at(id).fixed; }
  bool is_eliminable(BlockId id) const { return blocks_.at(id).eliminable; }
  BlockKind kind(BlockId id) const { return blocks_.at(id).kind; }
  int tangent_dim(BlockId id) const;

  const Pose& pose(BlockId id) const { return blocks_[id].pose; }
  const VecX& vector(BlockId id) const { return blocks_[id].vec; }
  void set_pose(BlockId id, const Pose& p) { blocks_.at(id).pose = p; }
  void set_vector(BlockId id, const VecX& v) { blocks_.at(id).vec = v; }
  void retract(BlockId id, const VecX& delta);

  std::size_t num_blocks() const { return blocks_.size(); }
  const std::vector<std::unique_ptr<Factor>>& factors() const { return factors_; }

 private:
  struct Block {
    BlockKind kind;
    Pose pose;
    VecX vec;
    bool fixed = false;
    bool eliminable = false;
  };
  std::vector<Block> blocks_;
  std::vector<std::unique_ptr<Factor>> factors_;
};

/// Whitened, robust-reweighted linearization of one factor.
struct LinearizedFactor {
  bool valid = false;
  double cost = 0.0;  // rho(|W r|^2)
  VecX residual;      // sqrt(rho') W r
  std::vector<MatX> jacobians;
};

/// Linearizes every factor into `out` (resized to the factor count). Both
/// execution modes write identical results.
void linearize_factors(const Problem& problem, std::vector<LinearizedFactor>& out,
                       Execution exec = Execution::Parallel);

/// Sum of robustified factor costs.
double evaluate_cost(const Problem& problem, Execution exec = Execution::Parallel);

struct SolverOptions {
  int max_iter = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-10;
  double function_tol = 1e-10;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 1.0 / 3.0;
  double max_lambda = 1e16;
  Execution execution = Execution::Parallel;
};

enum class Termination { Converged, MaxIterations, Stalled, Failure };

const char* to_string(Termination t);

struct SolverReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  int singular_retries = 0;
  bool used_schur = false;
  Termination termination = Termination::Failure;
  std::vector<double> accepted_costs;  // cost after each accepted step
};

/// Levenberg-Marquardt with Marquardt diagonal damping.
SolverReport solve(Problem& problem, const SolverOptions& options = {});

}  // namespace crossloc
