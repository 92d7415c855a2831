#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace crossloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

enum class ErrorCode {
  AngleNearPi,
  EmptyStream,
  NonMonotonicTimestamps,
  BehindCamera,
  MetricMismatch,
  NormalEquationsSingular,
  SolverFailure,
  EmptyMap,
  ParseError,
  IoError,
  TooFewObservations,
  InsufficientParallax,
  MissingPose,
  MismatchedSupport,
  NoOverlap,
  DivergenceDetected,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Parse error that remembers the 1-based line it occurred on.
class ParseError : public Error {
 public:
  ParseError(std::string file, int line, const std::string& what)
      : Error(ErrorCode::ParseError, file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  int line() const { return line_; }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  int line_;
};

/// Selects the OpenMP kernel or its serial reference.
enum class Execution { Serial, Parallel };

}  // namespace crossloc
