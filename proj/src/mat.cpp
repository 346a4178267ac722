#include "pcad/mat.hpp"

#include <cblas.h>
#include <cmath>

extern "C" void openblas_set_num_threads(int num_threads);

namespace pcad {

void gemm_raw(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
              const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, float alpha, const Mat& a, const Mat& b, float beta, Mat& c) {
    const int m = trans_a ? a.cols : a.rows;
    const int ka = trans_a ? a.rows : a.cols;
    const int kb = trans_b ? b.cols : b.rows;
    const int n = trans_b ? b.rows : b.cols;
    if (ka != kb)
        throw std::invalid_argument("gemm: inner dimensions differ (" + std::to_string(ka) + " vs " +
                                    std::to_string(kb) + ")");
    if (c.rows != m || c.cols != n)
        throw std::invalid_argument("gemm: output is " + std::to_string(c.rows) + "x" +
                                    std::to_string(c.cols) + ", expected " + std::to_string(m) + "x" +
                                    std::to_string(n));
    gemm_raw(trans_a, trans_b, m, n, ka, alpha, a.v.data(), a.cols, b.v.data(), b.cols, beta,
             c.v.data(), c.cols);
}

void pin_blas_single_thread() { openblas_set_num_threads(1); }

void check_finite(const std::vector<float>& v, const std::string& what) {
    for (float x : v)
        if (!std::isfinite(x)) throw std::runtime_error(what + ": non-finite value");
}

}  // namespace pcad
