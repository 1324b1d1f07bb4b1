#pragma once

namespace laif {

/// C[m,n] = alpha-free op(A)*op(B) + beta*C on contiguous row-major buffers.
/// op(A) is A [m,k] (trans_a false) or the transpose of an [k,m] buffer.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const float* a, const float* b, float* c, float beta);

}  // namespace laif
