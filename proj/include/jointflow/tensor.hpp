#pragma once

// Dense row-major matrix plus the handful of GEMM kernels the autodiff layer
// is built on. Loop orders are chosen so the inner loop runs unit-stride over
// contiguous memory (i-k-j); callers that need A*B^T transpose the small
// operand first. Parallel sections partition by output row with a static
// schedule, so results do not depend on the thread count.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace jointflow {

namespace detail {

[[noreturn]] inline void contract_fail(const std::string& msg) {
    throw std::invalid_argument(msg);
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) contract_fail(msg);
}

}  // namespace detail

template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}
    Mat(int r, int c, std::vector<T> data) : rows(r), cols(c), v(std::move(data)) {
        detail::require(v.size() == static_cast<std::size_t>(r) * c, "Mat: data size does not match shape");
    }

    std::size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// C += A * B.  A: [m,k], B: [k,n], C: [m,n].
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m >= 64 && omp_get_max_threads() > 1)
#endif
    for (int i = 0; i < m; ++i) {
        T* ci = c + static_cast<std::size_t>(i) * n;
        const T* ai = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C += A^T * B.  A: [m,k], B: [m,n], C: [k,n].
// Sequential on purpose: C is small (weight-shaped) and stays cache resident
// while A and B stream through once.
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        const T* bi = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            T* cp = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

template <typename T>
Mat<T> transposed(const Mat<T>& a) {
    Mat<T> t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

// C += A * B^T via an explicit transpose of B. B is expected to be small
// (a weight matrix); the transpose cost is negligible next to the GEMM.
template <typename T>
void gemm_nt(const T* a, const Mat<T>& b, T* c, int m, int k, int n) {
    Mat<T> bt = transposed(b);  // b: [n,k] -> bt: [k,n]
    gemm_nn(a, bt.data(), c, m, k, n);
}

inline int checked_threads(int requested) {
    return requested < 1 ? 1 : requested;
}

inline void set_num_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(checked_threads(n));
#else
    (void)n;
#endif
}

}  // namespace jointflow
