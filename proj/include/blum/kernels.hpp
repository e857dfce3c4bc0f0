#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

// Numeric kernels behind the encoder, the baselines and the MLP heads.
//
// Layout: blum::kernels::serial holds the reference implementation as
// per-row primitives (compiled once in kernels.cpp, so every caller runs
// the identical machine code) plus plain serial drivers. The OpenMP
// drivers in blum::kernels parallelize over independent output rows (or
// columns) and call the exact same row primitives, so every output element
// is produced by the same sequence of floating point operations regardless
// of thread count. Parallel and serial results are bit-identical; the test
// suite asserts this and bench/ compares their throughput.

namespace blum::kernels {

template <class Real>
constexpr Real neg_inf() {
    return -std::numeric_limits<Real>::infinity();
}

namespace serial {

// c (+)= a[1xk] * B[kxn]
void matmul_row(const float* a, const float* B, float* c, int k, int n, bool acc);
void matmul_row(const double* a, const double* B, double* c, int k, int n, bool acc);

// c (+)= a[1xk] * B^T, with B stored [nxk]
void matmul_nt_row(const float* a, const float* B, float* c, int k, int n, bool acc);
void matmul_nt_row(const double* a, const double* B, double* c, int k, int n, bool acc);

// c (+)= row i of A^T * B, with A stored [kxm], B stored [kxn]; c is row i
// of the m x n result
void matmul_tn_row(const float* A, const float* B, float* c, int k, int m, int n, int i, bool acc);
void matmul_tn_row(const double* A, const double* B, double* c, int k, int m, int n, int i, bool acc);

// in place; -inf entries map to exactly zero
void softmax_row(float* s, int n);
void softmax_row(double* s, int n);

// given probs p = softmax(s) and dp, ds_j = p_j * (dp_j - sum_k dp_k p_k)
void softmax_backward_row(const float* p, const float* dp, float* ds, int n);
void softmax_backward_row(const double* p, const double* dp, double* ds, int n);

// attention score row i: 1/sqrt(dh) scaling, ALiBi bias, suffix-PAD key
// mask, causal mask
void attn_score_mask_row(float* s, int i, int len, float scale, float alibi_slope, const std::uint8_t* key_mask,
                         bool causal);
void attn_score_mask_row(double* s, int i, int len, double scale, double alibi_slope, const std::uint8_t* key_mask,
                         bool causal);

// y = (x - mean) / sqrt(var + eps) * g + b; saves mean and rstd
void layer_norm_row(const float* x, const float* g, const float* b, float* y, float* mean_out, float* rstd_out, int n,
                    float eps);
void layer_norm_row(const double* x, const double* g, const double* b, double* y, double* mean_out, double* rstd_out,
                    int n, double eps);

void layer_norm_backward_input_row(const float* dy, const float* x, const float* g, float mean, float rstd, float* dx,
                                   int n);
void layer_norm_backward_input_row(const double* dy, const double* x, const double* g, double mean, double rstd,
                                   double* dx, int n);

// dg[j] += sum_i dy[i][j] * xhat[i][j]; db[j] += sum_i dy[i][j] -- column j
void layer_norm_backward_param_col(const float* dY, const float* X, const float* mean, const float* rstd, float* dg,
                                   float* db, int rows, int n, int j);
void layer_norm_backward_param_col(const double* dY, const double* X, const double* mean, const double* rstd,
                                   double* dg, double* db, int rows, int n, int j);

template <class Real>
inline Real gelu(Real z) {
    return Real(0.5) * z * (Real(1) + std::erf(z * Real(M_SQRT1_2)));
}

template <class Real>
inline Real gelu_grad(Real z) {
    const Real phi = std::exp(Real(-0.5) * z * z) * Real(0.3989422804014327);
    return Real(0.5) * (Real(1) + std::erf(z * Real(M_SQRT1_2))) + z * phi;
}

void gelu_row(const float* z, float* a, int n);
void gelu_row(const double* z, double* a, int n);

// dz (+)= da * gelu'(z)
void gelu_backward_row(const float* z, const float* da, float* dz, int n, bool acc);
void gelu_backward_row(const double* z, const double* da, double* dz, int n, bool acc);

void add_row(const float* x, float* y, int n);
void add_row(const double* x, double* y, int n);

void bias_add_row(float* y, const float* b, int n);
void bias_add_row(double* y, const double* b, int n);

// out[j] += sum_i X[i][j] -- column j
void col_sum_col(const float* X, float* out, int rows, int n, int j);
void col_sum_col(const double* X, double* out, int rows, int n, int j);

// ---- serial drivers (reference implementation) ----

template <class Real>
void matmul(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
    for (int i = 0; i < m; ++i)
        matmul_row(A + static_cast<std::size_t>(i) * k, B, C + static_cast<std::size_t>(i) * n, k, n, acc);
}

template <class Real>
void matmul_nt(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
    for (int i = 0; i < m; ++i)
        matmul_nt_row(A + static_cast<std::size_t>(i) * k, B, C + static_cast<std::size_t>(i) * n, k, n, acc);
}

template <class Real>
void matmul_tn(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
    for (int i = 0; i < m; ++i) matmul_tn_row(A, B, C + static_cast<std::size_t>(i) * n, k, m, n, i, acc);
}

template <class Real>
void softmax_rows(Real* S, int rows, int n) {
    for (int i = 0; i < rows; ++i) softmax_row(S + static_cast<std::size_t>(i) * n, n);
}

template <class Real>
void layer_norm_rows(const Real* X, const Real* g, const Real* b, Real* Y, Real* mean, Real* rstd, int rows, int n,
                     Real eps) {
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        layer_norm_row(X + off, g, b, Y + off, mean + i, rstd + i, n, eps);
    }
}

template <class Real>
void gelu_rows(const Real* Z, Real* A, int rows, int n) {
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        gelu_row(Z + off, A + off, n);
    }
}

}  // namespace serial

// ---- OpenMP drivers; same row primitives, rows spread over threads ----

template <class Real>
void matmul(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        serial::matmul_row(A + static_cast<std::size_t>(i) * k, B, C + static_cast<std::size_t>(i) * n, k, n, acc);
}

template <class Real>
void matmul_nt(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        serial::matmul_nt_row(A + static_cast<std::size_t>(i) * k, B, C + static_cast<std::size_t>(i) * n, k, n, acc);
}

template <class Real>
void matmul_tn(const Real* A, const Real* B, Real* C, int m, int k, int n, bool acc = false) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) serial::matmul_tn_row(A, B, C + static_cast<std::size_t>(i) * n, k, m, n, i, acc);
}

template <class Real>
void softmax_rows(Real* S, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) serial::softmax_row(S + static_cast<std::size_t>(i) * n, n);
}

template <class Real>
void softmax_backward_rows(const Real* P, const Real* dP, Real* dS, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::softmax_backward_row(P + off, dP + off, dS + off, n);
    }
}

template <class Real>
void attn_score_mask(Real* S, int len, Real scale, Real alibi_slope, const std::uint8_t* key_mask, bool causal) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < len; ++i)
        serial::attn_score_mask_row(S + static_cast<std::size_t>(i) * len, i, len, scale, alibi_slope, key_mask,
                                    causal);
}

template <class Real>
void layer_norm_rows(const Real* X, const Real* g, const Real* b, Real* Y, Real* mean, Real* rstd, int rows, int n,
                     Real eps) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::layer_norm_row(X + off, g, b, Y + off, mean + i, rstd + i, n, eps);
    }
}

template <class Real>
void layer_norm_backward_input(const Real* dY, const Real* X, const Real* g, const Real* mean, const Real* rstd,
                               Real* dX, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::layer_norm_backward_input_row(dY + off, X + off, g, mean[i], rstd[i], dX + off, n);
    }
}

template <class Real>
void layer_norm_backward_params(const Real* dY, const Real* X, const Real* mean, const Real* rstd, Real* dg, Real* db,
                                int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) serial::layer_norm_backward_param_col(dY, X, mean, rstd, dg, db, rows, n, j);
}

template <class Real>
void gelu_rows(const Real* Z, Real* A, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::gelu_row(Z + off, A + off, n);
    }
}

template <class Real>
void gelu_backward(const Real* Z, const Real* dA, Real* dZ, int rows, int n, bool acc = false) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::gelu_backward_row(Z + off, dA + off, dZ + off, n, acc);
    }
}

template <class Real>
void add_rows(const Real* X, Real* Y, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        serial::add_row(X + off, Y + off, n);
    }
}

template <class Real>
void bias_add_rows(Real* Y, const Real* b, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) serial::bias_add_row(Y + static_cast<std::size_t>(i) * n, b, n);
}

template <class Real>
void col_sums(const Real* X, Real* out, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) serial::col_sum_col(X, out, rows, n, j);
}

// table lookups: out[i] = table[ids[i]]
template <class Real>
void gather_rows(const Real* table, const std::int32_t* ids, Real* out, int count, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) {
        const Real* src = table + static_cast<std::size_t>(ids[i]) * n;
        Real* dst = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) dst[j] = src[j];
    }
}

// grad_table[ids[i]] += dX[i]; rows may repeat, so this stays serial
// (single-writer accumulation in fixed order).
template <class Real>
void scatter_add_rows(Real* grad_table, const std::int32_t* ids, const Real* dX, int count, int n) {
    for (int i = 0; i < count; ++i) {
        Real* dst = grad_table + static_cast<std::size_t>(ids[i]) * n;
        const Real* src = dX + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) dst[j] += src[j];
    }
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace blum::kernels
