#include "core/gemm.hpp"

#include <Eigen/Core>

namespace laif {

namespace {
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const float* a, const float* b, float* c, float beta) {
  Map C(c, m, n);
  auto run = [&](const auto& A, const auto& B) {
    if (beta == 0.0f)
      C.noalias() = A * B;
    else if (beta == 1.0f)
      C.noalias() += A * B;
    else {
      C *= beta;
      C.noalias() += A * B;
    }
  };
  if (!trans_a && !trans_b)
    run(CMap(a, m, k), CMap(b, k, n));
  else if (trans_a && !trans_b)
    run(CMap(a, k, m).transpose(), CMap(b, k, n));
  else if (!trans_a && trans_b)
    run(CMap(a, m, k), CMap(b, n, k).transpose());
  else
    run(CMap(a, k, m).transpose(), CMap(b, n, k).transpose());
}

}  // namespace laif
