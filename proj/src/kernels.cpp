// Row primitives shared by the serial reference and the OpenMP drivers.
// They live in this translation unit on purpose: one machine-code body per
// primitive, so both paths execute identical floating point sequences.

#include "blum/kernels.hpp"

namespace blum::kernels::serial {

namespace {

template <class Real>
void matmul_row_impl(const Real* a, const Real* B, Real* c, int k, int n, bool acc) {
    if (!acc)
        for (int j = 0; j < n; ++j) c[j] = Real(0);
    for (int p = 0; p < k; ++p) {
        const Real av = a[p];
        const Real* brow = B + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

template <class Real>
void matmul_nt_row_impl(const Real* a, const Real* B, Real* c, int k, int n, bool acc) {
    for (int j = 0; j < n; ++j) {
        const Real* brow = B + static_cast<std::size_t>(j) * k;
        Real s = 0;
        for (int p = 0; p < k; ++p) s += a[p] * brow[p];
        c[j] = acc ? c[j] + s : s;
    }
}

template <class Real>
void matmul_tn_row_impl(const Real* A, const Real* B, Real* c, int k, int m, int n, int i, bool acc) {
    if (!acc)
        for (int j = 0; j < n; ++j) c[j] = Real(0);
    for (int p = 0; p < k; ++p) {
        const Real av = A[static_cast<std::size_t>(p) * m + i];
        const Real* brow = B + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

template <class Real>
void softmax_row_impl(Real* s, int n) {
    Real mx = s[0];
    for (int j = 1; j < n; ++j)
        if (s[j] > mx) mx = s[j];
    Real sum = 0;
    for (int j = 0; j < n; ++j) {
        const Real e = std::isinf(static_cast<double>(s[j])) && s[j] < 0 ? Real(0) : std::exp(s[j] - mx);
        s[j] = e;
        sum += e;
    }
    const Real inv = Real(1) / sum;
    for (int j = 0; j < n; ++j) s[j] *= inv;
}

template <class Real>
void softmax_backward_row_impl(const Real* p, const Real* dp, Real* ds, int n) {
    Real dot = 0;
    for (int j = 0; j < n; ++j) dot += dp[j] * p[j];
    for (int j = 0; j < n; ++j) ds[j] = p[j] * (dp[j] - dot);
}

template <class Real>
void attn_score_mask_row_impl(Real* s, int i, int len, Real scale, Real alibi_slope, const std::uint8_t* key_mask,
                              bool causal) {
    if (scale != Real(1)) {
        for (int j = 0; j < len; ++j) s[j] *= scale;
    }
    if (alibi_slope != Real(0)) {
        for (int j = 0; j < len; ++j) s[j] -= alibi_slope * Real(i > j ? i - j : j - i);
    }
    if (key_mask != nullptr) {
        for (int j = 0; j < len; ++j)
            if (!key_mask[j]) s[j] = neg_inf<Real>();
    }
    if (causal) {
        for (int j = i + 1; j < len; ++j) s[j] = neg_inf<Real>();
    }
}

template <class Real>
void layer_norm_row_impl(const Real* x, const Real* g, const Real* b, Real* y, Real* mean_out, Real* rstd_out, int n,
                         Real eps) {
    Real mean = 0;
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= Real(n);
    Real var = 0;
    for (int j = 0; j < n; ++j) {
        const Real d = x[j] - mean;
        var += d * d;
    }
    var /= Real(n);
    const Real rstd = Real(1) / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) y[j] = (x[j] - mean) * rstd * g[j] + b[j];
    *mean_out = mean;
    *rstd_out = rstd;
}

template <class Real>
void layer_norm_backward_input_row_impl(const Real* dy, const Real* x, const Real* g, Real mean, Real rstd, Real* dx,
                                        int n) {
    Real sum_dxhat = 0;
    Real sum_dxhat_xhat = 0;
    for (int j = 0; j < n; ++j) {
        const Real xhat = (x[j] - mean) * rstd;
        const Real dxhat = dy[j] * g[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
    }
    const Real invn = Real(1) / Real(n);
    for (int j = 0; j < n; ++j) {
        const Real xhat = (x[j] - mean) * rstd;
        const Real dxhat = dy[j] * g[j];
        dx[j] = (dxhat - sum_dxhat * invn - xhat * sum_dxhat_xhat * invn) * rstd;
    }
}

template <class Real>
void layer_norm_backward_param_col_impl(const Real* dY, const Real* X, const Real* mean, const Real* rstd, Real* dg,
                                        Real* db, int rows, int n, int j) {
    Real sg = 0, sb = 0;
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n + j;
        const Real xhat = (X[off] - mean[i]) * rstd[i];
        sg += dY[off] * xhat;
        sb += dY[off];
    }
    dg[j] += sg;
    db[j] += sb;
}

template <class Real>
void gelu_row_impl(const Real* z, Real* a, int n) {
    for (int j = 0; j < n; ++j) a[j] = gelu(z[j]);
}

template <class Real>
void gelu_backward_row_impl(const Real* z, const Real* da, Real* dz, int n, bool acc) {
    for (int j = 0; j < n; ++j) {
        const Real g = da[j] * gelu_grad(z[j]);
        dz[j] = acc ? dz[j] + g : g;
    }
}

template <class Real>
void add_row_impl(const Real* x, Real* y, int n) {
    for (int j = 0; j < n; ++j) y[j] += x[j];
}

template <class Real>
void bias_add_row_impl(Real* y, const Real* b, int n) {
    for (int j = 0; j < n; ++j) y[j] += b[j];
}

template <class Real>
void col_sum_col_impl(const Real* X, Real* out, int rows, int n, int j) {
    Real s = 0;
    for (int i = 0; i < rows; ++i) s += X[static_cast<std::size_t>(i) * n + j];
    out[j] += s;
}

}  // namespace

void matmul_row(const float* a, const float* B, float* c, int k, int n, bool acc) {
    matmul_row_impl(a, B, c, k, n, acc);
}
void matmul_row(const double* a, const double* B, double* c, int k, int n, bool acc) {
    matmul_row_impl(a, B, c, k, n, acc);
}

void matmul_nt_row(const float* a, const float* B, float* c, int k, int n, bool acc) {
    matmul_nt_row_impl(a, B, c, k, n, acc);
}
void matmul_nt_row(const double* a, const double* B, double* c, int k, int n, bool acc) {
    matmul_nt_row_impl(a, B, c, k, n, acc);
}

void matmul_tn_row(const float* A, const float* B, float* c, int k, int m, int n, int i, bool acc) {
    matmul_tn_row_impl(A, B, c, k, m, n, i, acc);
}
void matmul_tn_row(const double* A, const double* B, double* c, int k, int m, int n, int i, bool acc) {
    matmul_tn_row_impl(A, B, c, k, m, n, i, acc);
}

void softmax_row(float* s, int n) { softmax_row_impl(s, n); }
void softmax_row(double* s, int n) { softmax_row_impl(s, n); }

void softmax_backward_row(const float* p, const float* dp, float* ds, int n) {
    softmax_backward_row_impl(p, dp, ds, n);
}
void softmax_backward_row(const double* p, const double* dp, double* ds, int n) {
    softmax_backward_row_impl(p, dp, ds, n);
}

void attn_score_mask_row(float* s, int i, int len, float scale, float alibi_slope, const std::uint8_t* key_mask,
                         bool causal) {
    attn_score_mask_row_impl(s, i, len, scale, alibi_slope, key_mask, causal);
}
void attn_score_mask_row(double* s, int i, int len, double scale, double alibi_slope, const std::uint8_t* key_mask,
                         bool causal) {
    attn_score_mask_row_impl(s, i, len, scale, alibi_slope, key_mask, causal);
}

void layer_norm_row(const float* x, const float* g, const float* b, float* y, float* mean_out, float* rstd_out, int n,
                    float eps) {
    layer_norm_row_impl(x, g, b, y, mean_out, rstd_out, n, eps);
}
void layer_norm_row(const double* x, const double* g, const double* b, double* y, double* mean_out, double* rstd_out,
                    int n, double eps) {
    layer_norm_row_impl(x, g, b, y, mean_out, rstd_out, n, eps);
}

void layer_norm_backward_input_row(const float* dy, const float* x, const float* g, float mean, float rstd, float* dx,
                                   int n) {
    layer_norm_backward_input_row_impl(dy, x, g, mean, rstd, dx, n);
}
void layer_norm_backward_input_row(const double* dy, const double* x, const double* g, double mean, double rstd,
                                   double* dx, int n) {
    layer_norm_backward_input_row_impl(dy, x, g, mean, rstd, dx, n);
}

void layer_norm_backward_param_col(const float* dY, const float* X, const float* mean, const float* rstd, float* dg,
                                   float* db, int rows, int n, int j) {
    layer_norm_backward_param_col_impl(dY, X, mean, rstd, dg, db, rows, n, j);
}
void layer_norm_backward_param_col(const double* dY, const double* X, const double* mean, const double* rstd,
                                   double* dg, double* db, int rows, int n, int j) {
    layer_norm_backward_param_col_impl(dY, X, mean, rstd, dg, db, rows, n, j);
}

void gelu_row(const float* z, float* a, int n) { gelu_row_impl(z, a, n); }
void gelu_row(const double* z, double* a, int n) { gelu_row_impl(z, a, n); }

void gelu_backward_row(const float* z, const float* da, float* dz, int n, bool acc) {
    gelu_backward_row_impl(z, da, dz, n, acc);
}
void gelu_backward_row(const double* z, const double* da, double* dz, int n, bool acc) {
    gelu_backward_row_impl(z, da, dz, n, acc);
}

void add_row(const float* x, float* y, int n) { add_row_impl(x, y, n); }
void add_row(const double* x, double* y, int n) { add_row_impl(x, y, n); }

void bias_add_row(float* y, const float* b, int n) { bias_add_row_impl(y, b, n); }
void bias_add_row(double* y, const double* b, int n) { bias_add_row_impl(y, b, n); }

void col_sum_col(const float* X, float* out, int rows, int n, int j) { col_sum_col_impl(X, out, rows, n, j); }
void col_sum_col(const double* X, double* out, int rows, int n, int j) { col_sum_col_impl(X, out, rows, n, j); }

}  // namespace blum::kernels::serial
