// Copyright 2026 The hris-sim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <eigen3/Eigen/Dense>

namespace hris {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double lin) {
  if (!(lin > 0.0)) throw std::domain_error("linear_to_db: value must be positive");
  return 10.0 * std::log10(lin);
}

// Raised when a least-squares recovery problem is rank deficient; carries the
// numerical rank that was detected so callers can report it.
class IdentifiabilityError : public std::runtime_error {
 public:
  IdentifiabilityError(const std::string& what, Eigen::Index numerical_rank,
                       Eigen::Index required_rank)
      : std::runtime_error(what), numerical_rank_(numerical_rank), required_rank_(required_rank) {}

  Eigen::Index numerical_rank() const { return numerical_rank_; }
  Eigen::Index required_rank() const { return required_rank_; }

 private:
  Eigen::Index numerical_rank_;
  Eigen::Index required_rank_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace hris
