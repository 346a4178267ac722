#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcad {

// Dense row-major float32 matrix. The training engine keeps every activation
// and parameter block in this layout so all heavy products map onto sgemm.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0f) {}

    float* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const float* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    float& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

// C = alpha * op(A) * op(B) + beta * C, all matrices row-major.
// Shapes are validated against the op; mismatches throw std::invalid_argument.
void gemm(bool trans_a, bool trans_b, float alpha, const Mat& a, const Mat& b, float beta, Mat& c);

// Raw-pointer variant used for per-segment products that view into a larger
// matrix. ld* are row strides of the underlying storage.
void gemm_raw(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
              const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);

// Pins the BLAS backend to one thread. Reductions in this codebase are
// ordered explicitly, and a threaded BLAS would reintroduce nondeterminism
// (and oversubscription once the outer loops are parallel).
void pin_blas_single_thread();

// Throws std::runtime_error naming `what` if any element is NaN or infinite.
void check_finite(const std::vector<float>& v, const std::string& what);

}  // namespace pcad
